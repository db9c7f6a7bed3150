"""Shannon kinetic entropy, its production, and the T0 equation.

For a local Maxwellian the entropy is

    S = -int rho ln rho dr + dim/2 + 1/2 sum_i ln(2 pi T_i / m)

and its rate splits into I1 = int rho div V, the T_QM term
1/2 sum_i dT_QM,i/dt / T_i, the heat-flux term I2 and dT0/dt times
1/2 sum_i 1/T_i. Requiring a zero rate fixes dT0/dt.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveTemperature, StiffnessWarning, TemperatureCollapse
from .grid import divergence, integrate
from .madelung import FluidFields, write_csv
from .sources import TraceSchedule
from .temperatures import DirectionalTemperatures

T_MIN = 1e-10


def shannon_entropy_maxwellian(fields: FluidFields, temps: DirectionalTemperatures, consts=None) -> float:
    consts = consts or fields.consts
    T = np.asarray(temps.T, dtype=float)
    if np.any(~(T > 0)):
        raise NonPositiveTemperature("temperatures must be > 0")
    rho = np.where(fields.support, fields.rho, 1.0)
    spatial = -integrate(np.where(fields.support, fields.rho * np.log(rho), 0.0), fields.grid)
    return spatial + 0.5 * len(T) + 0.5 * float(np.sum(np.log(2 * np.pi * T / consts.m)))


@dataclass(frozen=True)
class EntropyProductionTerms:
    I1: float
    I2: float
    tqm_term: float
    t0_coeff: float
    surface_flux: float = 0.0

    def rate(self, dT0_dt: float) -> float:
        """dS/dt with the proof-line grouping I1 + 1/2[...] + T0' * 1/2 sum 1/T."""
        bracket = 2.0 * self.tqm_term + 2.0 * self.I2  # sum T'_QM/T + int div Q sum 1/T
        return self.I1 + 0.5 * bracket + dT0_dt * self.t0_coeff

    def rate_hypothesis_grouping(self, dT0_dt: float) -> float:
        """dS/dt with I2 taken as the stand-alone integral (its own 1/2 included)."""
        return self.I1 + self.I2 + self.tqm_term + dT0_dt * self.t0_coeff


def entropy_production_terms(
    fields: FluidFields,
    temps: DirectionalTemperatures,
    dT_qm_dt,
    moments=None,
) -> EntropyProductionTerms:
    """Production terms at one instant; ``moments=None`` means Maxwellian closure (I2 = 0)."""
    T = np.asarray(temps.T, dtype=float)
    if np.any(~(T > 0)):
        raise NonPositiveTemperature("temperatures must be > 0")
    grid = fields.grid
    mask = fields.support
    I1 = integrate(np.where(mask, fields.rho * divergence(fields.V, grid), 0.0), grid)
    inv = float(np.sum(1.0 / T))
    tqm_term = 0.5 * float(np.sum(np.asarray(dT_qm_dt, dtype=float) / T))
    I2 = 0.0
    surface = 0.0
    if moments is not None and np.any(moments.Q):
        divq = divergence(moments.Q, grid)
        I2 = 0.5 * integrate(divq, grid) * inv
        surface = 0.5 * inv * _boundary_flux(moments.Q, grid)
    return EntropyProductionTerms(I1, I2, tqm_term, 0.5 * inv, surface)


def _boundary_flux(Q, grid):
    total = 0.0
    for j in range(grid.dim):
        face = grid.cell_volume / grid.spacing[j]
        q = np.moveaxis(Q[j], j, 0)
        total += float(np.sum(q[-1]) - np.sum(q[0])) * face
    return total


def t0_ode_rhs(terms: EntropyProductionTerms) -> float:
    return -(terms.I1 + terms.tqm_term + terms.I2) / terms.t0_coeff


@dataclass
class T0State:
    t: float
    T0: float
    dT0_dt: float
    S_analytic: float


@dataclass
class EntropyTrace:
    t: np.ndarray
    S_analytic: np.ndarray
    T0: np.ndarray
    T: np.ndarray
    T_qm: np.ndarray
    dT_qm_dt: np.ndarray
    I1: np.ndarray
    I2: np.ndarray
    tqm_term: np.ndarray
    dT0_dt: np.ndarray
    production_residual: np.ndarray
    frozen: bool = False
    S_particle: dict = field(default_factory=dict)

    @property
    def dTdt(self) -> np.ndarray:
        return self.dT0_dt[:, None] + self.dT_qm_dt

    def schedule(self) -> TraceSchedule:
        return TraceSchedule(self.t, self.T, self.dTdt)

    def state(self, k: int = -1) -> T0State:
        return T0State(float(self.t[k]), float(self.T0[k]), float(self.dT0_dt[k]), float(self.S_analytic[k]))

    @property
    def max_entropy_drift(self) -> float:
        return float(np.max(np.abs(self.S_analytic - self.S_analytic[0])))

    def production_integral(self) -> float:
        """Time integral of the assembled production rate (Simpson)."""
        from scipy.integrate import simpson

        return float(simpson(self.production_residual, x=self.t))

    def to_csv(self, path, every: int = 1) -> None:
        dim = self.T.shape[1]
        header = ["t", "S_analytic", "S_particle", "S_particle_err", "T0"]
        header += [f"T_{i + 1}" for i in range(dim)]
        header += ["I1", "I2", "tqm_term", "dT0_dt", "production_residual"]
        rows = []
        keys = {round(float(k), 12): v for k, v in self.S_particle.items()}
        idx = set(range(0, len(self.t), every)) | {len(self.t) - 1}
        idx |= {int(np.argmin(np.abs(self.t - k))) for k in keys}
        for k in sorted(idx):
            sp = keys.get(round(float(self.t[k]), 12), (np.nan, np.nan))
            rows.append([self.t[k], self.S_analytic[k], sp[0], sp[1], self.T0[k], *self.T[k],
                         self.I1[k], self.I2[k], self.tqm_term[k], self.dT0_dt[k], self.production_residual[k]])
        write_csv(path, header, np.array(rows))


def integrate_t0(
    source,
    t_span: tuple,
    T_o: float,
    dt: float = 1e-3,
    frozen: bool = False,
    moments_fn=None,
) -> EntropyTrace:
    """RK4 integration of dT0/dt from the zero-production condition.

    ``source`` supplies ``at(t)``, ``tqm(t)`` and ``tqm_rate(t)``. With
    ``frozen=True`` T0 stays at T_o and the trace records the production that
    the constant-H condition would have cancelled. ``moments_fn(t, fields,
    temps)`` may return empirical moments for the I2 term.
    """
    if not T_o > 0:
        raise NonPositiveTemperature("T_o must be > 0")
    t0, t1 = map(float, t_span)
    n = int(round((t1 - t0) / dt))
    if n <= 0:
        raise ValueError("empty time span")
    consts = source.consts

    def terms_at(t, T0):
        fields = source.at(t)
        T_qm = np.asarray(source.tqm(t), dtype=float)
        T = T0 + T_qm
        if not T0 > 0 or np.any(T <= T_MIN):
            raise TemperatureCollapse(f"temperature collapse at t={t}: T0={T0}, T={T}")
        temps = DirectionalTemperatures(t, T0, T_qm, T)
        rate = np.asarray(source.tqm_rate(t), dtype=float)
        mom = moments_fn(t, fields, temps) if moments_fn else None
        return entropy_production_terms(fields, temps, rate, mom), fields, temps, rate

    def rhs(t, T0):
        return 0.0 if frozen else t0_ode_rhs(terms_at(t, T0)[0])

    rec = {k: [] for k in ("t", "S", "T0", "T", "Tqm", "rate", "I1", "I2", "tqm", "dT0", "res")}
    warned = False

    def record(t, T0):
        terms, fields, temps, rate = terms_at(t, T0)
        d = 0.0 if frozen else t0_ode_rhs(terms)
        rec["t"].append(t)
        rec["S"].append(shannon_entropy_maxwellian(fields, temps, consts))
        rec["T0"].append(T0)
        rec["T"].append(temps.T)
        rec["Tqm"].append(temps.T_qm)
        rec["rate"].append(rate)
        rec["I1"].append(terms.I1)
        rec["I2"].append(terms.I2)
        rec["tqm"].append(terms.tqm_term)
        rec["dT0"].append(d)
        rec["res"].append(terms.rate(d))
        return d

    T0 = float(T_o)
    for k in range(n):
        t = t0 + k * dt
        d = record(t, T0)
        if not warned and abs(d) * dt / T0 > 0.1:
            warnings.warn("T0 changes by more than 10% per step", StiffnessWarning, stacklevel=2)
            warned = True
        if not frozen:
            k1 = d
            k2 = rhs(t + 0.5 * dt, T0 + 0.5 * dt * k1)
            k3 = rhs(t + 0.5 * dt, T0 + 0.5 * dt * k2)
            k4 = rhs(t + dt, T0 + dt * k3)
            T0 = T0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    record(t0 + n * dt, T0)
    a = {k: np.array(v) for k, v in rec.items()}
    return EntropyTrace(a["t"], a["S"], a["T0"], np.atleast_2d(a["T"]), a["Tqm"], a["rate"], a["I1"], a["I2"],
                        a["tqm"], a["dT0"], a["res"], frozen)
