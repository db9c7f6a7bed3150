"""Uniform grids, physical constants and the shared numerical kernels.

Every spatial derivative in the package goes through :func:`derivative`
(4th-order central differences, 4th-order one-sided closures on the two
outermost nodes of each axis) and every spatial integral through
:func:`integrate` (trapezoid rule on the periodic node set, which reduces to
``h * sum``; numpy's pairwise summation fixes the reduction order).
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import GridError, OutOfDomain

# Relative density floor: nodes with rho <= RHO_FLOOR_REL * max(rho) are vacuum.
RHO_FLOOR_REL = 1e-12

_D1_CENTER = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D1_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_D1_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0
_D2_CENTER = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_D2_EDGE0 = np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0
_D2_EDGE1 = np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    m: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.m > 0):
            raise ValueError("hbar and m must be > 0")


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid: node k on axis j sits at lower[j] + k*h[j]; upper is excluded.

    The last node is ``upper - h``; the node set is periodic-representable,
    which is what the spectral solver needs.
    """

    lower: tuple
    upper: tuple
    n: tuple

    def __post_init__(self):
        lower = tuple(float(a) for a in np.atleast_1d(self.lower))
        upper = tuple(float(b) for b in np.atleast_1d(self.upper))
        n = tuple(int(k) for k in np.atleast_1d(self.n))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "n", n)
        if not (len(lower) == len(upper) == len(n)) or len(n) not in (1, 2, 3):
            raise GridError("grid dimension must be 1, 2 or 3 with matching bounds")
        for a, b, k in zip(lower, upper, n):
            if k < 16 or k & (k - 1):
                raise GridError(f"point count {k} must be a power of two >= 16")
            if not b > a:
                raise GridError("upper bound must exceed lower bound")

    @classmethod
    def uniform(cls, n: int = 512, extent: float = 20.0, dim: int = 1) -> "SpatialGrid":
        """Symmetric grid [-extent, extent) with n points on each of dim axes."""
        return cls((-extent,) * dim, (extent,) * dim, (n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple:
        return self.n

    @property
    def spacing(self) -> tuple:
        return tuple((b - a) / k for a, b, k in zip(self.lower, self.upper, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, j: int) -> np.ndarray:
        return self.lower[j] + self.spacing[j] * np.arange(self.n[j])

    def axes(self) -> list:
        return [self.axis(j) for j in range(self.dim)]

    def mesh(self) -> list:
        return np.meshgrid(*self.axes(), indexing="ij")

    def refined(self, factor: int = 2) -> "SpatialGrid":
        return SpatialGrid(self.lower, self.upper, tuple(k * factor for k in self.n))

    def coarsened(self, factor: int = 4) -> "SpatialGrid":
        return SpatialGrid(self.lower, self.upper, tuple(k // factor for k in self.n))

    def node_hull(self) -> tuple:
        """Lower and upper limits of the region covered by interpolation."""
        return np.array(self.lower), np.array(self.upper) - np.array(self.spacing)


def density_mask(rho: np.ndarray, floor_rel: float = RHO_FLOOR_REL) -> np.ndarray:
    return rho > floor_rel * float(np.max(rho))


def _apply_stencil(f, h, axis, center, edge0, edge1, power):
    f = np.moveaxis(np.asarray(f), axis, 0)
    n = f.shape[0]
    out = np.empty(f.shape, dtype=np.result_type(f.dtype, float))
    out[2:-2] = sum(c * f[k : n - 4 + k] for k, c in enumerate(center))
    closure = lambda w, g: sum(c * g[k] for k, c in enumerate(w))
    out[0] = closure(edge0, f)
    out[1] = closure(edge1, f)
    # Mirror the closures onto the upper end; odd derivatives flip sign.
    sign = -1.0 if power == 1 else 1.0
    out[-1] = sign * closure(edge0, f[::-1])
    out[-2] = sign * closure(edge1, f[::-1])
    return np.moveaxis(out / h**power, 0, axis)


def derivative(f: np.ndarray, h: float, axis: int = 0, order: int = 1) -> np.ndarray:
    """First or second derivative along ``axis`` at 4th order in h."""
    if order == 1:
        return _apply_stencil(f, h, axis, _D1_CENTER, _D1_EDGE0, _D1_EDGE1, 1)
    if order == 2:
        return _apply_stencil(f, h, axis, _D2_CENTER, _D2_EDGE0, _D2_EDGE1, 2)
    raise ValueError("order must be 1 or 2")


def gradient(f: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    return np.stack([derivative(f, h, axis=j) for j, h in enumerate(grid.spacing)])


def laplacian(f: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    return sum(derivative(f, h, axis=j, order=2) for j, h in enumerate(grid.spacing))


def divergence(vec: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    return sum(derivative(vec[j], h, axis=j) for j, h in enumerate(grid.spacing))


def integrate(f: np.ndarray, grid: SpatialGrid) -> float:
    """Trapezoid quadrature over the periodic node set of ``grid``."""
    return float(np.sum(f) * grid.cell_volume)


def interpolate(grid: SpatialGrid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of node data at arbitrary points.

    ``values`` has shape ``(..., *grid.shape)``; ``points`` has shape
    ``(npts, dim)``. Returns ``(..., npts)``. Points outside the node hull
    raise :class:`OutOfDomain`.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != grid.dim:
        raise ValueError("points must have shape (npts, dim)")
    lo, hi = grid.node_hull()
    if np.any(points < lo) or np.any(points > hi) or not np.all(np.isfinite(points)):
        raise OutOfDomain("interpolation point outside the grid node hull")
    h = np.array(grid.spacing)
    s = (points - lo) / h
    idx = np.minimum(np.floor(s).astype(np.int64), np.array(grid.n) - 2)
    frac = s - idx
    lead = values.shape[: values.ndim - grid.dim]
    flat = values.reshape((-1, int(np.prod(grid.n))))
    strides = np.cumprod((1,) + grid.n[::-1])[:-1][::-1]
    base = idx @ strides
    out = np.zeros((flat.shape[0], points.shape[0]))
    for corner in product((0, 1), repeat=grid.dim):
        c = np.array(corner)
        weight = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
        out += np.take(flat, base + int(c @ strides), axis=1) * weight
    return out.reshape(lead + (points.shape[0],))
