import warnings

import numpy as np
import pytest

from qikt.errors import (
    CFLWarning,
    DensityFloorViolation,
    GridMismatch,
    NormalizationError,
    PhaseUnwrapFailure,
)
from qikt.grid import PhysicalConstants, SpatialGrid, gradient, integrate
from qikt.madelung import (
    AnalyticBenchmark,
    Wavefunction,
    benchmark_fields,
    benchmark_potential,
    benchmark_wavefunction,
    bohm_potential,
    decompose_wavefunction,
    evolve_schrodinger,
    qhe_residuals,
    quantum_potential,
    solver_fields,
)

KINDS = AnalyticBenchmark.KINDS


def _gaussian_psi(grid, sigma=1.0, k=0.0):
    x = grid.axis(0)
    amp = (2 * np.pi * sigma**2) ** -0.25 * np.exp(-(x**2) / (4 * sigma**2))
    return Wavefunction(grid, amp * np.exp(1j * k * x))


def test_benchmark_aliases_and_validation():
    assert AnalyticBenchmark("harmonic_ground_state").kind == "harmonic_ground"
    with pytest.raises(ValueError):
        AnalyticBenchmark("square_well")
    with pytest.raises(ValueError):
        AnalyticBenchmark(sigma0=0.0)


@pytest.mark.parametrize("kind", KINDS)
def test_benchmark_fields_are_normalized(kind, grid):
    for t in (0.0, 0.7, 2.0):
        f = benchmark_fields(AnalyticBenchmark(kind), grid, t).validate()
        assert f.V.shape == (1, 512)


def test_free_gaussian_closed_form_spreading(grid, consts):
    b = AnalyticBenchmark()
    # sigma^2(t) = sigma0^2 + (hbar t / 2 m sigma0)^2
    assert b.sigma2(2.0, consts) == pytest.approx(2.0)
    f = benchmark_fields(b, grid, 2.0)
    x = grid.axis(0)
    assert integrate(f.rho * x**2, grid) == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_decomposition_reproduces_benchmark_fields(kind, grid):
    b = AnalyticBenchmark(kind)
    for t in (0.0, 1.3):
        psi = benchmark_wavefunction(b, grid, t)
        f = solver_fields(psi, benchmark_potential(b, grid))
        ref = benchmark_fields(b, grid, t)
        m = ref.rho > 1e-6 * ref.rho.max()
        np.testing.assert_allclose(f.rho, ref.rho, atol=1e-14)
        assert np.max(np.abs(f.V - ref.V)[:, m]) < 1e-6
        assert np.max(np.abs(f.U_qm - ref.U_qm)[m]) < 1e-6
        assert np.max(np.abs(f.F - ref.F)[:, m]) < 1e-5


def test_quantum_potential_matches_bohm_form(grid):
    f = benchmark_fields(AnalyticBenchmark(), grid, 1.0)
    m = f.rho > 1e-4 * f.rho.max()
    q1 = quantum_potential(f.rho, None, grid)
    q2 = bohm_potential(f.rho, None, grid)
    assert np.max(np.abs(q1 - q2)[m]) < 5e-6
    # log form is exact for a Gaussian; the sqrt(rho) stencil converges at 4th order
    errs = []
    for n in (256, 512, 1024):
        g = SpatialGrid.uniform(n, 20.0)
        fn = benchmark_fields(AnalyticBenchmark(), g, 1.0)
        mm = fn.rho > 1e-4 * fn.rho.max()
        errs.append(np.max(np.abs(bohm_potential(fn.rho, None, g) - fn.U_qm)[mm]))
    assert np.all(np.log2(np.array(errs[:-1]) / np.array(errs[1:])) > 3.5)


def test_quantum_potential_mass_factor(grid):
    heavy = PhysicalConstants(m=2.0)
    f = benchmark_fields(AnalyticBenchmark(), grid, 0.0)
    q_phys = quantum_potential(f.rho, None, grid, heavy)
    q_lit = quantum_potential(f.rho, None, grid, heavy, literal=True)
    m = f.support
    np.testing.assert_allclose(q_lit[m], 2.0 * q_phys[m], rtol=1e-12)
    # at m = 1 the two readings coincide
    np.testing.assert_array_equal(quantum_potential(f.rho, None, grid),
                                  quantum_potential(f.rho, None, grid, literal=True))


def test_ground_state_quantum_potential_is_zero_point_energy(grid):
    f = benchmark_fields(AnalyticBenchmark("harmonic_ground"), grid)
    U = benchmark_potential(AnalyticBenchmark("harmonic_ground"), grid)
    q = quantum_potential(f.rho, U, grid)
    m = f.rho > 1e-8 * f.rho.max()
    assert np.max(np.abs(q - 0.5)[m]) < 1e-6
    assert np.max(np.abs(gradient(q, grid))[:, m]) < 1e-5


def test_decompose_rejects_unnormalized(grid):
    psi = _gaussian_psi(grid)
    with pytest.raises(NormalizationError):
        decompose_wavefunction(Wavefunction(grid, 1.01 * psi.values))


def test_decompose_rejects_disconnected_support(grid):
    x = grid.axis(0)
    vals = np.exp(-(x - 8) ** 2) + np.exp(-(x + 8) ** 2)
    psi = Wavefunction(grid, vals.astype(complex)).normalized()
    with pytest.raises(DensityFloorViolation):
        decompose_wavefunction(psi)


def test_decompose_rejects_underresolved_phase(grid):
    k = 0.95 * np.pi / grid.spacing[0]
    psi = _gaussian_psi(grid, sigma=2.0, k=k).normalized()
    with pytest.raises(PhaseUnwrapFailure):
        decompose_wavefunction(psi)


def test_plane_wave_packet_velocity(grid):
    psi = _gaussian_psi(grid, sigma=1.5, k=1.7).normalized()
    f = decompose_wavefunction(psi)
    m = f.rho > 1e-10 * f.rho.max()
    np.testing.assert_allclose(f.V[0][m], 1.7, atol=1e-9)


def test_ground_state_is_stationary_over_one_period():
    g = SpatialGrid.uniform(256, 10.0)
    b = AnalyticBenchmark("harmonic_ground")
    psi0 = benchmark_wavefunction(b, g)
    dt = 2 * np.pi / 8000
    psi = evolve_schrodinger(psi0, benchmark_potential(b, g), dt, 8000)
    assert np.max(np.abs(np.abs(psi.values) - np.abs(psi0.values))) < 1e-10
    assert psi.time == pytest.approx(2 * np.pi)


def test_solver_spreading_matches_closed_form(grid):
    b = AnalyticBenchmark()
    psi = evolve_schrodinger(benchmark_wavefunction(b, grid), None, 1e-3, 2000)
    f = decompose_wavefunction(psi)
    x = grid.axis(0)
    var = integrate(f.rho * x**2, grid) - integrate(f.rho * x, grid) ** 2
    assert var == pytest.approx(2.0, abs=1e-10)
    ref = benchmark_fields(b, grid, 2.0)
    assert np.max(np.abs(f.V - ref.V)[:, f.support & (ref.rho > 1e-8)]) < 1e-6


def test_solver_rejects_multid_and_warns_on_large_steps(grid):
    g2 = SpatialGrid.uniform(16, 4.0, dim=2)
    with pytest.raises(ValueError):
        evolve_schrodinger(Wavefunction(g2, np.ones((16, 16), complex)), None, 1e-3, 1)
    b = AnalyticBenchmark("harmonic_ground")
    with pytest.warns(CFLWarning):
        evolve_schrodinger(benchmark_wavefunction(b, grid), benchmark_potential(b, grid), 0.1, 1)


def test_qhe_residuals_ground_state_vanish(grid):
    b = AnalyticBenchmark("harmonic_ground")
    r = qhe_residuals(benchmark_fields(b, grid, 0.3), benchmark_fields(b, grid, 0.35), 0.05)
    assert r["continuity_residual"] < 1e-10
    assert r["euler_residual"] < 1e-10


def test_qhe_residuals_free_gaussian_coarse_grid():
    g = SpatialGrid.uniform(256, 20.0)
    b = AnalyticBenchmark()
    r = qhe_residuals(benchmark_fields(b, g, 1.0), benchmark_fields(b, g, 1.001), 1e-3)
    assert max(r.values()) < 1e-4


def test_qhe_residuals_grid_mismatch():
    b = AnalyticBenchmark()
    f0 = benchmark_fields(b, SpatialGrid.uniform(64, 10.0), 0.0)
    f1 = benchmark_fields(b, SpatialGrid.uniform(128, 10.0), 0.1)
    with pytest.raises(GridMismatch):
        qhe_residuals(f0, f1, 0.1)


def test_fields_csv_format(tmp_path, grid):
    f = benchmark_fields(AnalyticBenchmark(), grid, 0.5)
    path = f.to_csv(tmp_path / "fields.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "x,rho,S,V_x,U_qm,F_x"
    assert len(lines) == 513
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    # %.17g round-trips doubles exactly
    np.testing.assert_array_equal(back[:, 1], f.rho)
    np.testing.assert_array_equal(back[:, 3], f.V[0])


def test_multid_benchmark_is_separable():
    g = SpatialGrid.uniform(64, 10.0, dim=2)
    f = benchmark_fields(AnalyticBenchmark(), g, 1.0)
    f1 = benchmark_fields(AnalyticBenchmark(), SpatialGrid.uniform(64, 10.0), 1.0)
    np.testing.assert_allclose(f.rho, np.outer(f1.rho, f1.rho), rtol=1e-12)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        f.validate(tol=1e-8)
