"""Madelung fluid fields: density, phase, velocity, quantum potential and force.

Sources of fields are the closed-form benchmark wavefunctions and a 1-D
split-step spectral Schrodinger solver. :func:`qhe_residuals` checks that
two snapshots satisfy the continuity and Euler equations of the quantum
fluid.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CFLWarning,
    DensityFloorViolation,
    GridMismatch,
    NormalizationError,
    PhaseUnwrapFailure,
)
from .grid import (
    PhysicalConstants,
    SpatialGrid,
    density_mask,
    derivative,
    divergence,
    gradient,
    integrate,
    laplacian,
)

NORM_TOL = 1e-8
_UNWRAP_MAX_JUMP = 0.9 * np.pi
_AXIS_NAMES = ("x", "y", "z")


@dataclass
class Wavefunction:
    grid: SpatialGrid
    values: np.ndarray
    time: float = 0.0

    def norm(self) -> float:
        return integrate(np.abs(self.values) ** 2, self.grid)

    def normalized(self) -> "Wavefunction":
        return Wavefunction(self.grid, self.values / np.sqrt(self.norm()), self.time)


@dataclass
class FluidFields:
    """Grid-sampled quantum fluid state at time ``t``.

    Vector quantities carry the axis first: ``V.shape == (dim, *grid.shape)``.
    ``U`` is the external potential the quantum potential was built on.
    """

    grid: SpatialGrid
    rho: np.ndarray
    S: np.ndarray
    V: np.ndarray
    U_qm: np.ndarray
    F: np.ndarray
    t: float = 0.0
    U: np.ndarray | None = None
    consts: PhysicalConstants = field(default_factory=PhysicalConstants)

    @property
    def support(self) -> np.ndarray:
        return density_mask(self.rho)

    def validate(self, tol: float = NORM_TOL) -> "FluidFields":
        if np.any(self.rho < 0):
            raise NormalizationError("negative density")
        total = integrate(self.rho, self.grid)
        if abs(total - 1.0) > tol:
            raise NormalizationError(f"density integrates to {total!r}, not 1")
        return self

    def to_csv(self, path) -> Path:
        path = Path(path)
        dim = self.grid.dim
        names = list(_AXIS_NAMES[:dim]) + ["rho", "S"]
        names += [f"V_{a}" for a in _AXIS_NAMES[:dim]] + ["U_qm"]
        names += [f"F_{a}" for a in _AXIS_NAMES[:dim]]
        cols = [m.ravel() for m in self.grid.mesh()]
        cols += [self.rho.ravel(), self.S.ravel()]
        cols += [self.V[j].ravel() for j in range(dim)] + [self.U_qm.ravel()]
        cols += [self.F[j].ravel() for j in range(dim)]
        write_csv(path, names, np.column_stack(cols))
        return path


def write_csv(path, header, rows) -> None:
    """Write a numeric table with one header line and ``%.17g`` cells."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.atleast_2d(rows):
            w.writerow(["%.17g" % v for v in row])


@dataclass(frozen=True)
class AnalyticBenchmark:
    """Closed-form Schrodinger solution used as an oracle.

    ``sigma0`` is the initial density standard deviation of the free packet
    (per axis, broadcast); harmonic states use sqrt(hbar/(2 m omega)).
    """

    kind: str = "free_gaussian"
    sigma0: float | tuple = 1.0
    omega: float = 1.0
    x_c: float = 1.0
    v0: float = 0.0
    x0: float = 0.0

    KINDS = ("free_gaussian", "harmonic_ground", "harmonic_coherent")

    def __post_init__(self):
        aliases = {
            "freegaussian": "free_gaussian",
            "harmonicgroundstate": "harmonic_ground",
            "harmonic_ground_state": "harmonic_ground",
            "harmoniccoherent": "harmonic_coherent",
        }
        kind = aliases.get(self.kind.lower(), self.kind.lower())
        if kind not in self.KINDS:
            raise ValueError(f"unknown benchmark kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if np.any(np.asarray(self.sigma0) <= 0):
            raise ValueError("sigma0 must be > 0")
        if self.omega <= 0:
            raise ValueError("omega must be > 0")

    @property
    def stationary(self) -> bool:
        return self.kind == "harmonic_ground"

    def sigma2(self, t: float, consts: PhysicalConstants, axis: int = 0) -> float:
        """Density variance along ``axis`` at time ``t``."""
        hbar, m = consts.hbar, consts.m
        if self.kind == "free_gaussian":
            s0 = float(np.broadcast_to(self.sigma0, (3,))[axis])
            return s0**2 + (hbar * t / (2 * m * s0)) ** 2
        return hbar / (2 * m * self.omega)

    def sigma_rate(self, t: float, consts: PhysicalConstants, axis: int = 0) -> float:
        """d(sigma)/dt divided by sigma."""
        if self.kind != "free_gaussian":
            return 0.0
        s0 = float(np.broadcast_to(self.sigma0, (3,))[axis])
        hbar, m = consts.hbar, consts.m
        return (hbar / (2 * m * s0)) ** 2 * t / self.sigma2(t, consts, axis)

    def center(self, t: float) -> float:
        if self.kind == "free_gaussian":
            return self.x0 + self.v0 * t
        if self.kind == "harmonic_coherent":
            return self.x_c * np.cos(self.omega * t)
        return 0.0


def _benchmark_axis(bench, x, t, consts, axis):
    """Closed-form 1-D factors: (log rho, phase S, V, quantum potential incl. U, F, U)."""
    hbar, m, w = consts.hbar, consts.m, bench.omega
    s2 = bench.sigma2(t, consts, axis)
    c = bench.center(t)
    X = x - c
    log_rho = -0.5 * np.log(2 * np.pi * s2) - X**2 / (2 * s2)
    if bench.kind == "free_gaussian":
        a = bench.sigma2(0.0, consts, axis)
        tau = hbar * t / (2 * m)
        S = m * bench.v0 * x - 0.5 * m * bench.v0**2 * t
        S = S + hbar * (X**2 * tau / (4 * a * s2) - 0.5 * np.arctan(tau / a))
        V = bench.v0 + X * bench.sigma_rate(t, consts, axis)
        U = np.zeros_like(x)
        U_qm = hbar**2 / (4 * m * s2) - hbar**2 * X**2 / (8 * m * s2**2)
        F = hbar**2 * X / (4 * m * s2**2)
    elif bench.kind == "harmonic_ground":
        S = np.full_like(x, -0.5 * hbar * w * t)
        V = np.zeros_like(x)
        U = 0.5 * m * w**2 * x**2
        U_qm = np.full_like(x, 0.5 * hbar * w)
        F = np.zeros_like(x)
    else:
        p = -m * w * bench.x_c * np.sin(w * t)
        S = p * x - 0.5 * p * c - 0.5 * hbar * w * t
        V = np.full_like(x, p / m)
        U = 0.5 * m * w**2 * x**2
        U_qm = 0.5 * hbar * w + 0.5 * m * w**2 * (2 * x * c - c**2)
        F = np.full_like(x, -m * w**2 * c)
    return log_rho, S, V, U_qm, F, U


def _outer_sum(parts, grid):
    total = np.zeros(grid.shape)
    for j, p in enumerate(parts):
        shape = [1] * grid.dim
        shape[j] = -1
        total = total + p.reshape(shape)
    return total


def _axis_broadcast(p, j, grid):
    shape = [1] * grid.dim
    shape[j] = -1
    return np.broadcast_to(p.reshape(shape), grid.shape).copy()


def benchmark_fields(
    bench: AnalyticBenchmark,
    grid: SpatialGrid,
    t: float = 0.0,
    consts: PhysicalConstants = PhysicalConstants(),
) -> FluidFields:
    """Exact fluid fields of ``bench`` at ``t``; separable product on multi-d grids."""
    per_axis = [_benchmark_axis(bench, grid.axis(j), t, consts, j) for j in range(grid.dim)]
    log_rho = _outer_sum([p[0] for p in per_axis], grid)
    S = _outer_sum([p[1] for p in per_axis], grid)
    U_qm = _outer_sum([p[3] for p in per_axis], grid)
    U = _outer_sum([p[5] for p in per_axis], grid)
    V = np.stack([_axis_broadcast(p[2], j, grid) for j, p in enumerate(per_axis)])
    F = np.stack([_axis_broadcast(p[4], j, grid) for j, p in enumerate(per_axis)])
    return FluidFields(grid, np.exp(log_rho), S, V, U_qm, F, t, U, consts)


def benchmark_wavefunction(
    bench: AnalyticBenchmark,
    grid: SpatialGrid,
    t: float = 0.0,
    consts: PhysicalConstants = PhysicalConstants(),
) -> Wavefunction:
    f = benchmark_fields(bench, grid, t, consts)
    return Wavefunction(grid, np.sqrt(f.rho) * np.exp(1j * f.S / consts.hbar), t)


def benchmark_potential(bench: AnalyticBenchmark, grid: SpatialGrid, consts=PhysicalConstants()):
    return benchmark_fields(bench, grid, 0.0, consts).U


def _check_support(mask: np.ndarray) -> None:
    # Along every axis line the supported nodes must form one contiguous run.
    for j in range(mask.ndim):
        m = np.moveaxis(mask, j, -1).astype(np.int8)
        starts = np.sum(np.diff(m, axis=-1) == 1, axis=-1) + m[..., 0]
        if np.any(starts > 1):
            raise DensityFloorViolation("density drops below the floor inside the support")


def _log_density(rho):
    tiny = np.finfo(float).tiny
    return np.log(np.maximum(rho, tiny))


def quantum_potential(
    rho: np.ndarray,
    U: np.ndarray | None,
    grid: SpatialGrid,
    consts: PhysicalConstants = PhysicalConstants(),
    literal: bool = False,
) -> np.ndarray:
    """-(hbar^2/2m) (1/2 lap ln rho + 1/4 |grad ln rho|^2) + U.

    ``literal=True`` drops the 1/m factor (coincides at m = 1). Vacuum nodes
    below the density floor get U only.
    """
    mask = density_mask(rho)
    if not np.any(mask):
        raise DensityFloorViolation("no node above the density floor")
    q = _quantum_part(rho, grid, consts, literal)
    U = np.zeros(grid.shape) if U is None else U
    return np.where(mask, q, 0.0) + U


def _quantum_part(rho, grid, consts, literal):
    ln = _log_density(rho)
    g = gradient(ln, grid)
    pref = consts.hbar**2 / 2 if literal else consts.hbar**2 / (2 * consts.m)
    return -pref * (0.5 * laplacian(ln, grid) + 0.25 * np.sum(g**2, axis=0))


def bohm_potential(rho, U, grid, consts=PhysicalConstants()):
    """Equivalent form -(hbar^2/2m) lap(sqrt rho)/sqrt rho + U."""
    mask = density_mask(rho)
    amp = np.sqrt(rho)
    q = -consts.hbar**2 / (2 * consts.m) * laplacian(amp, grid) / np.where(mask, amp, 1.0)
    return np.where(mask, q, 0.0) + (0.0 if U is None else U)


def quantum_force(u_qm: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """F = -grad U_QM."""
    return -gradient(u_qm, grid)


def _unwrap_outward(phase, axis, start):
    p = np.moveaxis(phase, axis, 0)
    out = np.empty_like(p)
    out[start:] = np.unwrap(p[start:], axis=0)
    out[: start + 1] = np.unwrap(p[: start + 1][::-1], axis=0)[::-1]
    return np.moveaxis(out, 0, axis)


def decompose_wavefunction(
    psi: Wavefunction, consts: PhysicalConstants = PhysicalConstants(), literal: bool = False
) -> FluidFields:
    """Madelung decomposition psi = sqrt(rho) exp(i S / hbar)."""
    grid = psi.grid
    norm = psi.norm()
    if abs(norm - 1.0) > NORM_TOL:
        raise NormalizationError(f"wavefunction norm {norm!r} differs from 1")
    rho = np.abs(psi.values) ** 2
    mask = density_mask(rho)
    _check_support(mask)
    phase = np.angle(psi.values)
    peak = np.unravel_index(np.argmax(rho), rho.shape)
    for j in reversed(range(grid.dim)):
        phase = _unwrap_outward(phase, j, peak[j])
    for j in range(grid.dim):
        jump = np.abs(np.diff(phase, axis=j))
        both = np.logical_and(
            np.take(mask, range(0, grid.n[j] - 1), axis=j), np.take(mask, range(1, grid.n[j]), axis=j)
        )
        if np.any(jump[both] > _UNWRAP_MAX_JUMP):
            raise PhaseUnwrapFailure(
                "adjacent-node phase jump too large after unwrapping (nodal line or under-resolved grid)"
            )
    S = consts.hbar * phase
    V = gradient(S, grid) / consts.m
    return fields_from_density_phase(grid, rho, S, V, None, psi.time, consts, literal)


def fields_from_density_phase(grid, rho, S, V, U, t, consts, literal=False) -> FluidFields:
    mask = density_mask(rho)
    U0 = np.zeros(grid.shape) if U is None else U
    q = _quantum_part(rho, grid, consts, literal)
    F_full = quantum_force(q + U0, grid)
    F = np.where(mask, F_full, quantum_force(U0, grid))
    U_qm = np.where(mask, q, 0.0) + U0
    return FluidFields(grid, rho, S, V, U_qm, F, t, U0, consts)


def evolve_schrodinger(
    psi: Wavefunction,
    U: np.ndarray | None,
    dt: float,
    n_steps: int,
    consts: PhysicalConstants = PhysicalConstants(),
) -> Wavefunction:
    """Strang split-step spectral propagation on the periodic 1-D grid."""
    grid = psi.grid
    if grid.dim != 1:
        raise ValueError("the grid Schrodinger solver is 1-D only")
    if dt <= 0:
        raise ValueError("dt must be > 0")
    hbar, m = consts.hbar, consts.m
    U = np.zeros(grid.shape) if U is None else np.asarray(U, dtype=float)
    if dt * np.max(np.abs(U)) / hbar > 0.5:
        warnings.warn("dt * max|U| / hbar exceeds 0.5; phase accuracy degrades", CFLWarning, stacklevel=2)
    k = 2 * np.pi * np.fft.fftfreq(grid.n[0], d=grid.spacing[0])
    half_u = np.exp(-0.5j * dt * U / hbar)
    kin = np.exp(-0.5j * hbar * dt * k**2 / m)
    y = psi.values.astype(complex)
    # The periodic grid is offset from 0; the kinetic factor is shift-invariant.
    for _ in range(int(n_steps)):
        y = half_u * np.fft.ifft(kin * np.fft.fft(half_u * y))
    return Wavefunction(grid, y, psi.time + n_steps * dt)


def _with_external(f: FluidFields, U, consts) -> FluidFields:
    if U is None:
        return f
    return fields_from_density_phase(f.grid, f.rho, f.S, f.V, U, f.t, consts)


def solver_fields(psi: Wavefunction, U, consts=PhysicalConstants()) -> FluidFields:
    """Decompose a solver snapshot including the external potential in U_QM and F."""
    return _with_external(decompose_wavefunction(psi, consts), U, consts)


def qhe_residuals(fields_t0: FluidFields, fields_t1: FluidFields, dt: float) -> dict:
    """Max-norm residuals of the continuity and Euler equations.

    Time derivatives are centred on the midpoint of the two snapshots and
    spatial terms are averaged between them; nodes outside the density
    support of either snapshot and the two boundary nodes per axis are
    excluded.
    """
    f0, f1 = fields_t0, fields_t1
    if f0.grid != f1.grid:
        raise GridMismatch("snapshots live on different grids")
    grid = f0.grid
    m = f0.consts.m
    flux = 0.5 * (f0.rho * f0.V + f1.rho * f1.V)
    cont = (f1.rho - f0.rho) / dt + divergence(flux, grid)

    def advect(f):
        return np.stack([sum(f.V[j] * derivative(f.V[i], grid.spacing[j], j) for j in range(grid.dim))
                         for i in range(grid.dim)])

    euler = (f1.V - f0.V) / dt + 0.5 * (advect(f0) + advect(f1)) - 0.5 * (f0.F + f1.F) / m
    mask = f0.support & f1.support
    for j in range(grid.dim):
        edge = np.ones(grid.n[j], dtype=bool)
        edge[:2] = edge[-2:] = False
        shape = [1] * grid.dim
        shape[j] = -1
        mask = mask & edge.reshape(shape)
    return {
        "continuity_residual": float(np.max(np.abs(cont[mask]))),
        "euler_residual": float(np.max(np.abs(euler[:, mask]))),
    }

