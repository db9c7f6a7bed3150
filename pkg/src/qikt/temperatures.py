"""Heisenberg momentum-fluctuation split and directional temperatures.

The per-axis momentum variance separates into an osmotic part built from
the density gradient and a convective part built from the phase gradient:

    <dp_i^2> = (hbar^2/4) int rho (d_i ln rho)^2  +  Var_rho(m V_i)

The osmotic part divided by m is the quantum temperature T_QM,i, and the
directional temperature is T_i = T0 + T_QM,i. Temperatures carry energy
units.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveTemperature, QuadratureUnderflow
from .grid import PhysicalConstants, derivative, integrate
from .madelung import FluidFields, Wavefunction, _log_density

_MIN_SUPPORT_NODES = 8
# relative to hbar^2/L^2, the smallest physical osmotic term a box of width L supports
_OSMOTIC_MIN = 1e-14


@dataclass(frozen=True)
class MomentumFluctuations:
    osmotic: np.ndarray
    convective: np.ndarray
    position_spread: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.osmotic + self.convective


@dataclass(frozen=True)
class DirectionalTemperatures:
    t: float
    T0: float
    T_qm: np.ndarray
    T: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.T)


def osmotic_fluctuation(fields: FluidFields, axis: int = 0, consts: PhysicalConstants | None = None) -> float:
    consts = consts or fields.consts
    grid = fields.grid
    mask = fields.support
    if np.count_nonzero(np.any(mask, axis=tuple(j for j in range(grid.dim) if j != axis))) < _MIN_SUPPORT_NODES:
        raise QuadratureUnderflow("density support too narrow for the osmotic quadrature")
    dln = derivative(_log_density(fields.rho), grid.spacing[axis], axis)
    val = 0.25 * consts.hbar**2 * integrate(np.where(mask, fields.rho * dln**2, 0.0), grid)
    width = grid.upper[axis] - grid.lower[axis]
    if not val > _OSMOTIC_MIN * consts.hbar**2 / width**2:
        raise QuadratureUnderflow("osmotic fluctuation is not strictly positive (flat or degenerate density)")
    return val


def convective_fluctuation(fields: FluidFields, axis: int = 0, consts: PhysicalConstants | None = None) -> float:
    consts = consts or fields.consts
    p = consts.m * fields.V[axis]
    mean = integrate(fields.rho * p, fields.grid)
    var = integrate(fields.rho * p**2, fields.grid) - mean**2
    return max(var, 0.0)


def position_spread(fields: FluidFields, axis: int = 0) -> float:
    x = fields.grid.mesh()[axis]
    mean = integrate(fields.rho * x, fields.grid)
    return integrate(fields.rho * (x - mean) ** 2, fields.grid)


def momentum_fluctuations(fields: FluidFields, consts: PhysicalConstants | None = None) -> MomentumFluctuations:
    axes = range(fields.grid.dim)
    return MomentumFluctuations(
        np.array([osmotic_fluctuation(fields, j, consts) for j in axes]),
        np.array([convective_fluctuation(fields, j, consts) for j in axes]),
        np.array([position_spread(fields, j) for j in axes]),
    )


def spectral_momentum_variance(psi: Wavefunction, consts: PhysicalConstants = PhysicalConstants()) -> np.ndarray:
    """<p_i^2> - <p_i>^2 from the discrete Fourier transform of psi.

    Independent of the Madelung route: it never touches the density or the
    phase separately.
    """
    grid = psi.grid
    phi2 = np.abs(np.fft.fftn(psi.values)) ** 2
    phi2 /= phi2.sum()
    out = []
    for j in range(grid.dim):
        k = 2 * np.pi * np.fft.fftfreq(grid.n[j], d=grid.spacing[j])
        shape = [1] * grid.dim
        shape[j] = -1
        p = consts.hbar * k.reshape(shape)
        mean = float(np.sum(phi2 * p))
        out.append(float(np.sum(phi2 * (p - mean) ** 2)))
    return np.array(out)


def wavefunction_of(fields: FluidFields) -> Wavefunction:
    return Wavefunction(fields.grid, np.sqrt(fields.rho) * np.exp(1j * fields.S / fields.consts.hbar), fields.t)


def heisenberg_check(fl: MomentumFluctuations, consts: PhysicalConstants = PhysicalConstants()) -> dict:
    product = fl.position_spread * fl.total
    bound = consts.hbar**2 / 4
    return {"product": product, "satisfied": product >= bound * (1 - 1e-8), "bound": bound}


def assemble_temperatures(
    t: float, T0: float, fields: FluidFields, consts: PhysicalConstants | None = None
) -> DirectionalTemperatures:
    if not T0 > 0:
        raise NonPositiveTemperature(f"T0 must be > 0, got {T0!r}")
    consts = consts or fields.consts
    fl = np.array([osmotic_fluctuation(fields, j, consts) for j in range(fields.grid.dim)])
    T_qm = fl / consts.m
    return DirectionalTemperatures(t, float(T0), T_qm, T0 + T_qm)


def quantum_temperature(fields: FluidFields, consts: PhysicalConstants | None = None) -> np.ndarray:
    consts = consts or fields.consts
    return np.array([osmotic_fluctuation(fields, j, consts) for j in range(fields.grid.dim)]) / consts.m


def temperatures_row(temps: DirectionalTemperatures, fl: MomentumFluctuations, consts) -> list:
    """One ``temperatures.csv`` row."""
    heis = fl.position_spread * fl.total
    return [temps.t, temps.T0, *temps.T_qm, *temps.T, *fl.osmotic, *fl.convective, *heis]


def temperatures_header(dim: int) -> list:
    idx = range(1, dim + 1)
    return (["t", "T0"] + [f"T_qm_{i}" for i in idx] + [f"T_{i}" for i in idx]
            + [f"osmotic_{i}" for i in idx] + [f"convective_{i}" for i in idx]
            + [f"heis_prod_{i}" for i in idx])
