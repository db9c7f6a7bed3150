"""Phase-space particle ensemble for the inverse kinetic equation.

Particles follow the Vlasov characteristics dr/dt = v, dv/dt = K/m. The
push is elementwise over particles, so splitting the ensemble across
worker threads cannot change a single bit of the result; every reduction
below (histograms, variances, entropy) runs in one thread in particle order.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln

from .errors import DegenerateCloud, NonSeparableDensity, OutOfDomain, ParticleEscapedDomain, SparseBins
from .grid import PhysicalConstants, SpatialGrid, interpolate
from .kinetic import MAXWELLIAN, ForceKernel, LocalMaxwellian, correspondence_moments
from .madelung import FluidFields
from .temperatures import DirectionalTemperatures

SAMPLE_BLOCK = 4096
PUSH_CHUNK = 16384
_threads = 1


def set_threads(n: int) -> None:
    """Cap the worker threads used by sampling and pushing."""
    global _threads
    _threads = max(1, int(n))


def _map_chunks(fn, n, chunk, threads=None):
    threads = _threads if threads is None else max(1, int(threads))
    slices = [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]
    if threads == 1 or len(slices) == 1:
        return [fn(s) for s in slices]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, slices))


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    velocities: np.ndarray
    t: float = 0.0
    rng_seed: int = 0

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def rows(self):
        header = ["id"] + [f"x_{i + 1}" for i in range(self.dim)] + [f"v_{i + 1}" for i in range(self.dim)]
        return header, np.column_stack([np.arange(self.n), self.positions, self.velocities])


def _marginals(fields: FluidFields):
    grid = fields.grid
    rho = fields.rho
    out = []
    for j in range(grid.dim):
        other = tuple(k for k in range(grid.dim) if k != j)
        out.append(rho.sum(axis=other) * np.prod([grid.spacing[k] for k in other]) if other else rho)
    if grid.dim > 1:
        prod = out[0]
        for mj in out[1:]:
            prod = np.multiply.outer(prod, mj)
        if np.max(np.abs(prod - rho)) > 1e-8 * np.max(rho):
            raise NonSeparableDensity("position sampling needs a separable density")
    return out


def _inverse_cdf_table(x, rho):
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * np.diff(x))])
    return cdf / cdf[-1]


def sample_initial(
    fields: FluidFields,
    temps: DirectionalTemperatures,
    n: int,
    seed: int,
    consts: PhysicalConstants | None = None,
    threads: int | None = None,
) -> ParticleEnsemble:
    """Draw n particles from the local Maxwellian of ``fields`` and ``temps``.

    Block b of SAMPLE_BLOCK particles draws from its own Philox stream keyed
    by ``seed`` with counter word b, so results do not depend on how blocks
    are scheduled.
    """
    if n < 1000:
        raise ValueError("sample_initial needs n >= 1000")
    consts = consts or fields.consts
    grid = fields.grid
    dim = grid.dim
    tables = [(grid.axis(j), _inverse_cdf_table(grid.axis(j), mj)) for j, mj in enumerate(_marginals(fields))]
    scale = np.sqrt(np.asarray(temps.T, dtype=float) / consts.m)

    def block(sl):
        b = sl.start // SAMPLE_BLOCK
        gen = np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1), counter=[0, 0, 0, b]))
        m = sl.stop - sl.start
        u = gen.random((m, 3, dim))
        r = np.column_stack([np.interp(u[:, 0, j], cdf, x) for j, (x, cdf) in enumerate(tables)])
        # Box-Muller, cosine branch; 1 - u keeps the log argument in (0, 1].
        z = np.sqrt(-2.0 * np.log1p(-u[:, 1])) * np.cos(2.0 * np.pi * u[:, 2])
        V = interpolate(grid, fields.V, r).T
        return r, V + scale * z

    parts = _map_chunks(block, int(n), SAMPLE_BLOCK, threads)
    pos = np.concatenate([p[0] for p in parts])
    vel = np.concatenate([p[1] for p in parts])
    return ParticleEnsemble(pos, vel, float(fields.t), int(seed))


class IKTForce:
    """Mean-field force K(t, r, v) read from a field source and a temperature schedule.

    ``closure`` is ``"maxwellian"`` or ``"empirical"``; the empirical closure
    takes Q and Pi from Gauss-Hermite moments of the local Maxwellian of the
    source, or from the ensemble itself when ``self_consistent`` is set.
    """

    def __init__(self, source, schedule, closure=MAXWELLIAN, consts=None, self_consistent=False, bins=None):
        self.source = source
        self.schedule = schedule
        self.closure = closure
        self.consts = consts or source.consts
        self.self_consistent = self_consistent
        self.bins = bins
        self._kernels = {}
        self._ens_moments = None

    def begin_step(self, ens: "ParticleEnsemble") -> None:
        if self.self_consistent:
            est = estimate_moments(ens, self.source.grid, self.bins, self.consts, warn=False)
            self._ens_moments = est.on_grid(self.source.grid)

    def at(self, t: float) -> ForceKernel:
        key = (round(float(t), 12), id(self._ens_moments))
        if key in self._kernels:
            return self._kernels[key]
        fields = self.source.at(t)
        T, rate = self.schedule(t)
        moments = None
        if self.closure != MAXWELLIAN:
            if self.self_consistent and self._ens_moments is not None:
                moments = self._ens_moments
            else:
                temps = DirectionalTemperatures(t, float(np.min(T)), T * 0, T)
                moments = correspondence_moments(LocalMaxwellian(fields, temps, self.consts), "gauss_hermite")
        kernel = ForceKernel(fields, T, rate, self.consts, moments)
        if len(self._kernels) > 8:
            self._kernels.clear()
        self._kernels[key] = kernel
        return kernel

    def __call__(self, t, r, v):
        return self.at(t)(r, v)


def _kernel_at(force, t):
    if hasattr(force, "at"):
        return force.at(t)
    return lambda r, v: force(t, r, v)


def push(
    ens: ParticleEnsemble,
    force,
    dt: float,
    n_steps: int,
    consts: PhysicalConstants | None = None,
    grid: SpatialGrid | None = None,
    threads: int | None = None,
) -> ParticleEnsemble:
    """Classic RK4 on (dr/dt, dv/dt) = (v, K/m); negative dt integrates backward.

    ``force`` is either an object with ``at(t) -> kernel(r, v)`` (e.g.
    :class:`IKTForce`) or a plain callable ``force(t, r, v)``. The domain is
    the node hull of ``grid`` (default: the force source's grid).
    """
    if dt == 0:
        raise ValueError("dt must be non-zero")
    consts = consts or getattr(force, "consts", None) or PhysicalConstants()
    m = consts.m
    if grid is None and hasattr(force, "source"):
        grid = force.source.grid
    hull = grid.node_hull() if grid is not None else None
    r, v, t = ens.positions.copy(), ens.velocities.copy(), float(ens.t)

    def accel(kernel, rr, vv):
        parts = _map_chunks(lambda s: kernel(rr[s], vv[s]), rr.shape[0], PUSH_CHUNK, threads)
        return np.concatenate(parts) / m

    for step in range(int(n_steps)):
        if hasattr(force, "begin_step"):
            force.begin_step(replace(ens, positions=r, velocities=v, t=t))
        try:
            k_mid = _kernel_at(force, t + 0.5 * dt)
            a1 = accel(_kernel_at(force, t), r, v)
            r2, v2 = r + 0.5 * dt * v, v + 0.5 * dt * a1
            a2 = accel(k_mid, r2, v2)
            r3, v3 = r + 0.5 * dt * v2, v + 0.5 * dt * a2
            a3 = accel(k_mid, r3, v3)
            r4, v4 = r + dt * v3, v + dt * a3
            a4 = accel(_kernel_at(force, t + dt), r4, v4)
        except OutOfDomain as exc:
            raise ParticleEscapedDomain(f"particle left the domain during step {step}") from exc
        r = r + dt / 6.0 * (v + 2 * v2 + 2 * v3 + v4)
        v = v + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        t = float(ens.t + (step + 1) * dt)
        if hull is not None and (np.any(r < hull[0]) or np.any(r > hull[1])):
            raise ParticleEscapedDomain(f"particle left the domain at t={t}")
    return ParticleEnsemble(r, v, t, ens.rng_seed)


@dataclass
class MomentEstimate:
    edges: list
    counts: np.ndarray
    rho_hat: np.ndarray
    V_hat: np.ndarray
    T_hat: np.ndarray
    se_rho: np.ndarray
    se_V: np.ndarray
    Pi_hat: np.ndarray
    Q_hat: np.ndarray
    n: int

    @property
    def centers(self) -> list:
        return [0.5 * (e[1:] + e[:-1]) for e in self.edges]

    @property
    def bin_volume(self) -> float:
        return float(np.prod([e[1] - e[0] for e in self.edges]))

    def on_grid(self, grid: SpatialGrid):
        """Empirical moments mapped onto the field grid (for the self-consistent closure)."""
        from .kinetic import KineticMoments

        pts = np.stack([m.ravel() for m in grid.mesh()], axis=1)
        cgrid = _bin_grid(self.edges)
        lo, hi = cgrid.node_hull()
        pts = np.clip(pts, lo, hi)

        def lift(a):
            a = np.nan_to_num(a)
            return interpolate(cgrid, a, pts).reshape(a.shape[: a.ndim - grid.dim] + grid.shape)

        rho = lift(self.rho_hat)
        dim = grid.dim
        T = np.broadcast_to(self.T_hat.reshape((dim,) + (1,) * dim), (dim,) + grid.shape)
        mask = rho > 0
        return KineticMoments(rho, lift(self.V_hat), T.copy(), self.T_hat, lift(self.Q_hat), lift(self.Pi_hat), mask)


def _bin_grid(edges):
    centers = [0.5 * (e[1:] + e[:-1]) for e in edges]
    w = [e[1] - e[0] for e in edges]
    # SpatialGrid nodes sit at lower + k*h, upper excluded.
    return SpatialGrid(tuple(c[0] for c in centers), tuple(c[-1] + wi for c, wi in zip(centers, w)),
                       tuple(len(c) for c in centers))


def bin_edges(grid: SpatialGrid, bins=None) -> list:
    """Bin edges aligned with field nodes; default coarsens the grid 4x."""
    if bins is None:
        bins = tuple(k // 4 for k in grid.n)
    bins = np.broadcast_to(np.asarray(bins, dtype=int), (grid.dim,))
    if np.any(bins < 16):
        raise ValueError("need at least 16 bins per axis")
    return [np.linspace(a, b, int(k) + 1) for a, b, k in zip(grid.lower, grid.upper, bins)]


def estimate_moments(
    ens: ParticleEnsemble,
    grid: SpatialGrid,
    bins=None,
    consts: PhysicalConstants | None = None,
    warn: bool = True,
) -> MomentEstimate:
    consts = consts or PhysicalConstants()
    edges = bin_edges(grid, bins)
    dim, n = ens.dim, ens.n
    nb = tuple(len(e) - 1 for e in edges)
    idx = np.stack(
        [np.clip(((ens.positions[:, j] - e[0]) // (e[1] - e[0])).astype(np.int64), 0, nb[j] - 1)
         for j, e in enumerate(edges)]
    )
    flat = np.ravel_multi_index(tuple(idx), nb)
    size = int(np.prod(nb))
    counts = np.bincount(flat, minlength=size).astype(float)
    vol = float(np.prod([e[1] - e[0] for e in edges]))
    occupied = counts > 0
    safe = np.where(occupied, counts, 1.0)
    vsum = np.stack([np.bincount(flat, ens.velocities[:, j], size) for j in range(dim)])
    V_hat = vsum / safe
    u = ens.velocities - V_hat[:, flat].T
    usq = np.stack([np.bincount(flat, u[:, j] ** 2, size) for j in range(dim)])
    n_occ = int(occupied.sum())
    T_hat = consts.m * usq.sum(axis=1) / max(n - n_occ, 1)
    var_bin = usq / np.where(counts > 1, counts - 1, np.nan)
    se_V = np.sqrt(var_bin / safe)
    rho_hat = counts / (n * vol)
    se_rho = np.sqrt(counts * (1 - counts / n)) / (n * vol)
    u2 = np.sum(u**2, axis=1)
    Pi = np.stack([np.stack([np.bincount(flat, u[:, i] * u[:, j], size) for j in range(dim)]) for i in range(dim)])
    Q = np.stack([np.bincount(flat, u[:, i] * u2, size) for i in range(dim)]) / 3.0
    V_hat = np.where(occupied, V_hat, np.nan)
    if warn and np.any(occupied & (counts < 10)):
        warnings.warn("some occupied bins hold fewer than 10 particles", SparseBins, stacklevel=2)
    shape = nb
    return MomentEstimate(
        edges,
        counts.reshape(shape),
        rho_hat.reshape(shape),
        V_hat.reshape((dim,) + shape),
        T_hat,
        se_rho.reshape(shape),
        se_V.reshape((dim,) + shape),
        (Pi / (n * vol)).reshape((dim, dim) + shape),
        (Q / (n * vol)).reshape((dim,) + shape),
        n,
    )


def _bin_weights(grid: SpatialGrid, edges) -> list:
    """Per-axis trapezoid weights mapping node values to bin integrals."""
    out = []
    for j, e in enumerate(edges):
        x = grid.axis(j)
        h = grid.spacing[j]
        W = np.zeros((len(e) - 1, len(x)))
        for b in range(len(e) - 1):
            inside = np.nonzero((x >= e[b] - 1e-9 * h) & (x <= e[b + 1] + 1e-9 * h))[0]
            W[b, inside] = h
            W[b, inside[0]] = W[b, inside[-1]] = 0.5 * h
        out.append(W)
    return out


def _apply_axis_weights(a, weights):
    for j, W in enumerate(weights):
        a = np.moveaxis(np.tensordot(W, np.moveaxis(a, j, 0), axes=1), 0, j)
    return a


def reference_bins(fields: FluidFields, edges) -> tuple:
    """Bin-averaged density and density-weighted velocity of the fluid fields."""
    W = _bin_weights(fields.grid, edges)
    vol = float(np.prod([e[1] - e[0] for e in edges]))
    mass = _apply_axis_weights(fields.rho, W)
    flux = np.stack([_apply_axis_weights(fields.rho * fields.V[j], W) for j in range(fields.grid.dim)])
    return mass / vol, flux / np.where(mass > 0, mass, 1.0)


def moment_check(est: MomentEstimate, fields: FluidFields, T, consts=None, z_max: float = 3.0) -> dict:
    """Compare binned estimates with the fluid fields in predicted standard-error units.

    Density bands use the binomial error of the reference bin probability;
    velocity bands use sqrt(T/(m c)) for a bin holding c particles.
    """
    consts = consts or fields.consts
    rho_ref, V_ref = reference_bins(fields, est.edges)
    vol = est.bin_volume
    p = np.clip(rho_ref * vol, 0.0, 1.0)
    sig_rho = np.sqrt(est.n * p * (1 - p)) / (est.n * vol)
    occ = est.counts > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        z_rho = np.abs(est.rho_hat - rho_ref) / sig_rho
        z_rho = np.where(sig_rho > 0, z_rho, np.where(est.rho_hat == rho_ref, 0.0, np.inf))
        sig_V = np.sqrt(np.asarray(T, dtype=float).reshape((-1,) + (1,) * est.counts.ndim) / consts.m
                        / np.where(occ, est.counts, 1.0))
        z_V = np.abs(est.V_hat - V_ref) / sig_V
    ok_rho = z_rho[occ] <= z_max
    ok_V = np.all(z_V[:, occ] <= z_max, axis=0)
    return {
        "rho_ref": rho_ref,
        "V_ref": V_ref,
        "sig_rho": sig_rho,
        "sig_V": sig_V,
        "z_rho": z_rho,
        "z_V": z_V,
        "occupied": int(occ.sum()),
        "rho_pass": int(ok_rho.sum()),
        "V_pass": int(ok_V.sum()),
    }


def estimate_entropy(ens: ParticleEnsemble, k: int = 4, blocks: int = 20, workers: int = 1) -> tuple:
    """Kozachenko-Leonenko k-NN differential entropy of the phase-space cloud.

    Returns ``(estimate, error)`` where the error is the delete-one-block
    jackknife standard error over ``blocks`` contiguous index blocks.
    """
    X = np.hstack([ens.positions, ens.velocities])
    X = _dedup(X, ens.rng_seed)
    est = _kl(X, k, workers)
    n = X.shape[0]
    edges = np.linspace(0, n, blocks + 1).astype(int)
    reps = np.array([_kl(np.delete(X, np.s_[edges[b] : edges[b + 1]], axis=0), k, workers) for b in range(blocks)])
    err = np.sqrt((blocks - 1) / blocks * np.sum((reps - reps.mean()) ** 2))
    return est, float(err)


def _dedup(X, seed):
    tree = cKDTree(X)
    d, _ = tree.query(X, k=2)
    if np.all(d[:, 1] > 0):
        return X
    rng = np.random.default_rng(int(seed) & (2**64 - 1))
    dup = d[:, 1] == 0
    X = X.copy()
    X[dup] += 1e-9 * X.std(axis=0) * rng.standard_normal((dup.sum(), X.shape[1]))
    d, _ = cKDTree(X).query(X, k=2)
    if np.any(d[:, 1] == 0):
        raise DegenerateCloud("coincident phase-space samples survive deduplication jitter")
    return X


def _kl(X, k, workers):
    n, d = X.shape
    dist, _ = cKDTree(X).query(X, k=k + 1, workers=workers)
    eps = dist[:, k]
    if np.any(eps == 0):
        raise DegenerateCloud("zero k-th neighbour distance")
    log_unit_ball = 0.5 * d * np.log(np.pi) - gammaln(0.5 * d + 1)
    return float(digamma(n) - digamma(k) + log_unit_ball + d * np.mean(np.log(eps)))
