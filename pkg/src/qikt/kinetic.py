"""Kinetic side of the inverse kinetic theory.

* :class:`LocalMaxwellian` -- the equilibrium g(r, v) carrying rho, V and T_i.
* :func:`correspondence_moments` -- density, velocity and directional
  temperature moments plus heat flux Q = int (1/3) u u^2 g dv and pressure
  tensor Pi = int u u g dv, either in closed form or by Gauss-Hermite
  quadrature in velocity space.
* :class:`ForceKernel` / :func:`mean_field_force` -- the mean-field force

      K = m (u . grad) V + (m/2) u_i e_i [d_t ln T_i + div Q / (rho T_i)]
          + F + (m/rho) div Pi

  with the Maxwellian closure (Q = 0, Pi = rho T/m) as the fast path.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import DegenerateDensity, EmptyDensity, NonPositiveTemperature
from .grid import (
    RHO_FLOOR_REL,
    PhysicalConstants,
    density_mask,
    derivative,
    divergence,
    gradient,
    integrate,
    interpolate,
)
from .madelung import FluidFields, _log_density
from .temperatures import DirectionalTemperatures

MAXWELLIAN = "maxwellian"
EMPIRICAL = "empirical"


def _check_temperatures(T):
    T = np.asarray(T, dtype=float)
    if np.any(~(T > 0)):
        raise NonPositiveTemperature(f"directional temperatures must be > 0, got {T}")
    return T


@dataclass
class LocalMaxwellian:
    fields: FluidFields
    temps: DirectionalTemperatures
    consts: PhysicalConstants | None = None

    def __post_init__(self):
        self.consts = self.consts or self.fields.consts
        _check_temperatures(self.temps.T)

    @property
    def T(self) -> np.ndarray:
        return np.asarray(self.temps.T, dtype=float)

    def _gaussian(self, rho, V, v):
        m = self.consts.m
        T = self.T.reshape((-1,) + (1,) * (np.ndim(v) - 1))
        norm = np.prod(np.sqrt(m / (2 * np.pi * T)), axis=0)
        return rho * norm * np.exp(-np.sum(m * (v - V) ** 2 / (2 * T), axis=0))

    def __call__(self, r, v) -> np.ndarray:
        """g at points r (npts, dim), velocities v (npts, dim); rho, V linearly interpolated."""
        r = np.atleast_2d(r)
        v = np.atleast_2d(np.asarray(v, dtype=float))
        vals = interpolate(self.fields.grid, np.concatenate([self.fields.rho[None], self.fields.V]), r)
        rho, V = vals[0], vals[1:]
        return self._gaussian(rho, V, v.T)

    def on_nodes(self, v: np.ndarray) -> np.ndarray:
        """g at every grid node for velocity samples ``v`` of shape (dim, nnodes, nq)."""
        rho = self.fields.rho.reshape(-1, 1)
        V = self.fields.V.reshape(self.fields.grid.dim, -1, 1)
        return self._gaussian(rho, V, v)


@dataclass
class KineticMoments:
    """Velocity moments on the field grid; vectors carry the axis first."""

    density: np.ndarray
    velocity: np.ndarray
    M3: np.ndarray
    T: np.ndarray
    Q: np.ndarray
    Pi: np.ndarray
    mask: np.ndarray

    def to_rows(self, grid):
        dim = grid.dim
        cols = [m.ravel() for m in grid.mesh()] + [self.density.ravel()]
        cols += [self.velocity[j].ravel() for j in range(dim)]
        cols += [self.M3[j].ravel() for j in range(dim)]
        cols += [self.Q[j].ravel() for j in range(dim)]
        pairs = [(i, i) for i in range(dim)] + [(i, j) for i in range(dim) for j in range(i + 1, dim)]
        cols += [self.Pi[i, j].ravel() for i, j in pairs]
        names = ["x", "y", "z"][:dim] + ["M1"] + [f"M2_{a}" for a in "xyz"[:dim]]
        names += [f"M3_{i + 1}" for i in range(dim)] + [f"Q_{a}" for a in "xyz"[:dim]]
        names += [f"Pi_{i + 1}{j + 1}" for i, j in pairs]
        return names, np.column_stack(cols)


def gauss_hermite_rule(order: int):
    """Nodes and weights for the weight exp(-xi^2)."""
    return np.polynomial.hermite.hermgauss(order)


def quadrature_moments(density_on_nodes, grid, center, scale, consts=PhysicalConstants(), order=32):
    """Moments of an arbitrary g by tensor Gauss-Hermite quadrature in v.

    ``density_on_nodes(v)`` receives v of shape (dim, nnodes, nq) and returns
    g of shape (nnodes, nq). Nodes are placed at center + sqrt(2)*scale*xi.
    """
    dim = grid.dim
    xi, w = gauss_hermite_rule(order)
    mesh = np.array(list(product(range(order), repeat=dim))).T  # (dim, nq)
    xi_t = xi[mesh]
    weight = np.prod(w[mesh] * np.exp(xi[mesh] ** 2), axis=0)
    center = np.asarray(center, dtype=float).reshape(dim, -1, 1)
    scale = np.broadcast_to(np.asarray(scale, dtype=float).reshape(dim, -1, 1), (dim, center.shape[1], 1))
    v = center + np.sqrt(2.0) * scale * xi_t[:, None, :]
    W = weight[None, :] * np.prod(np.sqrt(2.0) * scale, axis=0)
    g = density_on_nodes(v) * W
    return _moments_from_weighted(g, v, grid, consts)


def _moments_from_weighted(g, v, grid, consts):
    dim, shape = grid.dim, grid.shape
    M1 = g.sum(axis=-1)
    mask = density_mask(M1.reshape(shape)).ravel()
    if not np.any(mask):
        raise EmptyDensity("density is below the floor everywhere")
    safe = np.where(mask, M1, 1.0)
    M2 = np.sum(v * g, axis=-1) / safe
    u = v - M2[..., None]
    M3 = consts.m * np.sum(u**2 * g, axis=-1) / safe
    u2 = np.sum(u**2, axis=0)
    Q = np.sum(u * u2 * g, axis=-1) / 3.0
    Pi = np.einsum("iaq,jaq,aq->ija", u, u, g)
    nan = np.where(mask, 1.0, np.nan)
    M2, M3 = M2 * nan, M3 * nan
    rho = M1.reshape(shape)
    T = np.array([_weighted_mean(M3[j], M1, mask, grid) for j in range(dim)])
    return KineticMoments(
        rho,
        M2.reshape((dim,) + shape),
        M3.reshape((dim,) + shape),
        T,
        Q.reshape((dim,) + shape),
        Pi.reshape((dim, dim) + shape),
        mask.reshape(shape),
    )


def _weighted_mean(a, weight, mask, grid):
    a = np.where(mask, a, 0.0).reshape(grid.shape)
    wt = np.where(mask, weight, 0.0).reshape(grid.shape)
    return integrate(a * wt, grid) / integrate(wt, grid)


def correspondence_moments(g: LocalMaxwellian, method: str = "analytic", order: int = 32) -> KineticMoments:
    """Kinetic moments of a local Maxwellian.

    ``analytic`` uses the Gaussian moment identities; ``gauss_hermite``
    integrates g numerically with nodes scaled by sqrt(T_i/m) about V.
    """
    f, consts = g.fields, g.consts
    grid = f.grid
    dim = grid.dim
    T = g.T
    if method == "gauss_hermite":
        return quadrature_moments(
            g.on_nodes, grid, f.V.reshape(dim, -1), np.sqrt(T / consts.m), consts, order
        )
    if method != "analytic":
        raise ValueError(f"unknown method {method!r}")
    mask = density_mask(f.rho)
    if not np.any(mask):
        raise EmptyDensity("density is below the floor everywhere")
    nan = np.where(mask, 1.0, np.nan)
    # int dv N(V, T/m) = 1; int v N = V; int m u_i^2 N = T_i; odd central moments vanish.
    M3 = np.stack([np.full(grid.shape, T[j]) for j in range(dim)]) * nan
    Pi = np.zeros((dim, dim) + grid.shape)
    for j in range(dim):
        Pi[j, j] = f.rho * T[j] / consts.m
    return KineticMoments(f.rho.copy(), f.V * nan, M3, T.copy(), np.zeros((dim,) + grid.shape), Pi, mask)


class ForceKernel:
    """Grid-precomputed mean-field force for one fields/temperature snapshot.

    ``T`` and ``dTdt`` are the directional temperatures and their time
    derivatives (supplied externally). ``moments=None`` selects the
    Maxwellian closure; a :class:`KineticMoments` selects the empirical one.
    """

    def __init__(self, fields: FluidFields, T, dTdt, consts=None, moments: KineticMoments | None = None):
        self.fields = fields
        self.consts = consts or fields.consts
        self.T = _check_temperatures(T)
        self.dTdt = np.asarray(dTdt, dtype=float)
        self.moments = moments
        grid = fields.grid
        dim = grid.dim
        m = self.consts.m
        mask = fields.support
        self.floor = RHO_FLOOR_REL * float(np.max(fields.rho))
        grad_v = np.stack([gradient(fields.V[i], grid) for i in range(dim)])  # [i, j] = d_j V_i
        exp_dims = (slice(None),) + (None,) * dim
        dlnT = (self.dTdt / self.T)[exp_dims]
        if moments is None:
            dln = gradient(_log_density(fields.rho), grid)
            drift = fields.F + self.T[exp_dims] * dln
            heat = np.broadcast_to(dlnT, (dim,) + grid.shape)
        else:
            safe = np.where(mask, fields.rho, 1.0)
            div_pi = np.stack([sum(derivative(moments.Pi[i, j], grid.spacing[j], j) for j in range(dim))
                               for i in range(dim)])
            div_q = divergence(moments.Q, grid)
            drift = fields.F + np.where(mask, m * div_pi / safe, 0.0)
            heat = dlnT + np.where(mask, div_q / safe, 0.0) / self.T[exp_dims]
        self._dim = dim
        self._stack = np.concatenate(
            [fields.rho[None], fields.V, grad_v.reshape((dim * dim,) + grid.shape), drift, heat]
        )

    def coefficients(self, r):
        vals = interpolate(self.fields.grid, self._stack, r)
        d = self._dim
        rho = vals[0]
        if np.any(rho <= self.floor):
            raise DegenerateDensity("mean-field force evaluated where the density is below the floor")
        V = vals[1 : 1 + d]
        grad_v = vals[1 + d : 1 + d + d * d].reshape(d, d, -1)
        drift = vals[1 + d + d * d : 1 + 2 * d + d * d]
        heat = vals[1 + 2 * d + d * d :]
        return V, grad_v, drift, heat

    def __call__(self, r, v) -> np.ndarray:
        """K at points r, velocities v, both (npts, dim); returns (npts, dim)."""
        r = np.atleast_2d(r)
        v = np.atleast_2d(v)
        V, grad_v, drift, heat = self.coefficients(r)
        u = v.T - V
        m = self.consts.m
        K = m * np.einsum("ijn,jn->in", grad_v, u) + 0.5 * m * u * heat + drift
        return K.T

    def velocity_divergence(self, r) -> np.ndarray:
        """d/dv . (K/m), which does not depend on v."""
        _, grad_v, _, heat = self.coefficients(np.atleast_2d(r))
        return np.einsum("iin->n", grad_v) + 0.5 * heat.sum(axis=0)


@dataclass
class MeanFieldForceInput:
    r: np.ndarray
    v: np.ndarray
    fields: FluidFields
    temps: DirectionalTemperatures
    temp_rates: np.ndarray
    closure: object = MAXWELLIAN

    def kernel(self) -> ForceKernel:
        moments = None if (isinstance(self.closure, str) and self.closure == MAXWELLIAN) else self.closure
        if isinstance(moments, str):
            raise ValueError(f"unknown closure {moments!r}")
        return ForceKernel(self.fields, self.temps.T, self.temp_rates, self.fields.consts, moments)


def mean_field_force(inp: MeanFieldForceInput) -> np.ndarray:
    return inp.kernel()(inp.r, inp.v)


def velocity_divergence_of_K(inp: MeanFieldForceInput) -> np.ndarray:
    return inp.kernel().velocity_divergence(inp.r)


def shannon_entropy_discrete(g, cell):
    g = np.asarray(g)
    return float(-np.sum(np.where(g > 0, g * np.log(np.where(g > 0, g, 1.0)), 0.0)) * cell)


def pem_perturbation_test(
    fields: FluidFields,
    temps: DirectionalTemperatures,
    n_trials: int = 5,
    eps: float = 1e-2,
    seed: int = 0,
    n_v: int = 161,
    xi_max: float = 8.0,
) -> list:
    """Entropy deficits of random moment-preserving perturbations g(1 + eps*phi).

    Works on a discrete 1-D phase space: the supported field nodes times a
    uniform velocity grid V(x) + sqrt(T/m)*xi, |xi| <= xi_max. At every node
    phi is made orthogonal to {1, u, u^2} under the weight g, so density,
    velocity and temperature moments are preserved exactly. Returns one dict
    per trial with the measured deficit, its second-order prediction
    (eps^2/2) sum g phi^2, and the largest moment drift.
    """
    if fields.grid.dim != 1:
        raise ValueError("the PEM perturbation test runs on 1-D fields")
    consts = fields.consts
    grid = fields.grid
    mask = fields.support
    x = grid.axis(0)[mask]
    rho = fields.rho[mask]
    T = float(temps.T[0])
    s = np.sqrt(T / consts.m)
    xi = np.linspace(-xi_max, xi_max, n_v)
    dxi = xi[1] - xi[0]
    cell = grid.spacing[0] * s * dxi
    g = rho[:, None] * np.exp(-0.5 * xi**2)[None, :] / np.sqrt(2 * np.pi) / s
    basis = np.stack([np.ones_like(xi), xi, xi**2])  # u = s*xi, so span{1,u,u^2} = span{1,xi,xi^2}
    rng = np.random.default_rng(seed)
    S0 = shannon_entropy_discrete(g, cell)
    lo_x, hi_x = x.min(), x.max()
    out = []
    for _ in range(n_trials):
        # compact bump in x times compact random bumps in xi
        c = rng.uniform(lo_x + 0.3 * (hi_x - lo_x), hi_x - 0.3 * (hi_x - lo_x))
        half = rng.uniform(0.5, 2.0)
        bx = np.where(np.abs(x - c) < half, np.cos(0.5 * np.pi * (x - c) / half) ** 2, 0.0)
        phi_v = np.zeros_like(xi)
        for _k in range(4):
            cv, wv = rng.uniform(-3, 3), rng.uniform(0.5, 2.0)
            phi_v += rng.normal() * np.where(np.abs(xi - cv) < wv, np.cos(0.5 * np.pi * (xi - cv) / wv) ** 2, 0.0)
        phi = bx[:, None] * phi_v[None, :]
        # weighted projection at every node
        G = np.einsum("ak,nk,bk->nab", basis, g, basis)
        rhs = np.einsum("ak,nk,nk->na", basis, g, phi)
        coef = np.linalg.solve(G, rhs[..., None])[..., 0]
        phi = phi - coef @ basis
        phi /= np.max(np.abs(phi))
        gp = g * (1 + eps * phi)
        drift = np.max(np.abs(np.einsum("ak,nk->na", basis, gp - g))) * s * dxi
        deficit = S0 - shannon_entropy_discrete(gp, cell)
        predicted = 0.5 * eps**2 * float(np.sum(g * phi**2)) * cell
        out.append({"deficit": deficit, "predicted": predicted, "moment_drift": float(drift)})
    return out
