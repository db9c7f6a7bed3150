"""Time-dependent providers of fluid fields and directional temperatures.

A field source answers ``at(t) -> FluidFields``, ``tqm(t)`` (quantum
temperatures) and ``tqm_rate(t)`` (their time derivative). Temperature
schedules answer ``schedule(t) -> (T, dT/dt)`` for the mean-field force.
"""
from __future__ import annotations

from collections import OrderedDict
from threading import Lock

import numpy as np

from .grid import PhysicalConstants, SpatialGrid
from .madelung import (
    AnalyticBenchmark,
    FluidFields,
    benchmark_fields,
    benchmark_potential,
    benchmark_wavefunction,
    evolve_schrodinger,
    solver_fields,
)
from .temperatures import quantum_temperature


class _Cache:
    def __init__(self, size=16):
        self._data = OrderedDict()
        self._size = size
        self._lock = Lock()

    def get(self, key, make):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        value = make()
        with self._lock:
            self._data[key] = value
            while len(self._data) > self._size:
                self._data.popitem(last=False)
        return value


def _key(t: float) -> float:
    # RK stage times reached by different float paths share one cache entry
    return round(t, 12)


class AnalyticSource:
    """Closed-form benchmark fields at any time; T_QM rate by a 4th-order time stencil.

    With ``rate_step`` equal to half the ODE step the stencil points land on
    RK stage times and the T_QM cache serves most of them.
    """

    def __init__(self, bench: AnalyticBenchmark, grid: SpatialGrid, consts=PhysicalConstants(), rate_step=1e-3):
        self.bench = bench
        self.grid = grid
        self.consts = consts
        self.rate_step = rate_step
        self._fields = _Cache(32)
        self._tqm = _Cache(64)
        self._rate = _Cache(64)

    @property
    def stationary(self) -> bool:
        return self.bench.stationary

    def at(self, t: float) -> FluidFields:
        t = float(t)
        return self._fields.get(_key(t), lambda: benchmark_fields(self.bench, self.grid, t, self.consts))

    def tqm(self, t: float) -> np.ndarray:
        t = float(t)
        # shifted stencil times are not cached as full field sets
        return self._tqm.get(_key(t), lambda: quantum_temperature(
            benchmark_fields(self.bench, self.grid, t, self.consts), self.consts))

    def tqm_rate(self, t: float) -> np.ndarray:
        t = float(t)
        return self._rate.get(_key(t), lambda: self._stencil_rate(t))

    def _stencil_rate(self, t):
        d = self.rate_step
        f = lambda s: self.tqm(t + s)
        return (f(-2 * d) - 8 * f(-d) + 8 * f(d) - f(2 * d)) / (12 * d)


class SnapshotSource:
    """Fields interpolated linearly in time between stored snapshots.

    T_QM is evaluated on the snapshots themselves and its rate by centred
    differences of that series (one-sided second order at the ends).
    """

    def __init__(self, snapshots: list):
        if len(snapshots) < 3:
            raise ValueError("need at least three snapshots")
        self.snapshots = list(snapshots)
        self.times = np.array([s.t for s in snapshots])
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must increase")
        self.grid = snapshots[0].grid
        self.consts = snapshots[0].consts
        self._tqm = np.array([quantum_temperature(s, self.consts) for s in snapshots])
        self._rate = np.gradient(self._tqm, self.times, axis=0, edge_order=2)
        self.stationary = False

    def _bracket(self, t):
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ValueError(f"t={t} outside the snapshot span")
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2))
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return k, float(np.clip(w, 0.0, 1.0))

    def at(self, t: float) -> FluidFields:
        k, w = self._bracket(t)
        a, b = self.snapshots[k], self.snapshots[k + 1]
        if w == 0.0:
            return a
        if w == 1.0:
            return b
        mix = lambda p, q: (1 - w) * p + w * q
        return FluidFields(a.grid, mix(a.rho, b.rho), mix(a.S, b.S), mix(a.V, b.V), mix(a.U_qm, b.U_qm),
                           mix(a.F, b.F), float(t), a.U, a.consts)

    def tqm(self, t: float) -> np.ndarray:
        k, w = self._bracket(t)
        return (1 - w) * self._tqm[k] + w * self._tqm[k + 1]

    def tqm_rate(self, t: float) -> np.ndarray:
        k, w = self._bracket(t)
        return (1 - w) * self._rate[k] + w * self._rate[k + 1]


def solver_source(bench: AnalyticBenchmark, grid: SpatialGrid, t_end: float, dt: float,
                  every: int = 1, consts=PhysicalConstants()) -> SnapshotSource:
    """Run the split-step solver from the benchmark's t=0 state and keep snapshots."""
    U = benchmark_potential(bench, grid, consts)
    psi = benchmark_wavefunction(bench, grid, 0.0, consts)
    n = int(round(t_end / dt))
    snaps = [solver_fields(psi, U, consts)]
    for k in range(0, n, every):
        steps = min(every, n - k)
        psi = evolve_schrodinger(psi, U, dt, steps, consts)
        snaps.append(solver_fields(psi, U, consts))
    return SnapshotSource(snaps)


class ConstantTemperature:
    def __init__(self, T):
        self.T = np.atleast_1d(np.asarray(T, dtype=float))

    def __call__(self, t):
        return self.T, np.zeros_like(self.T)


class TraceSchedule:
    """T_i(t) and dT_i/dt linearly interpolated between recorded times."""

    def __init__(self, times, T, dTdt):
        self.times = np.asarray(times, dtype=float)
        self.T = np.atleast_2d(np.asarray(T, dtype=float))
        self.dTdt = np.atleast_2d(np.asarray(dTdt, dtype=float))

    def __call__(self, t):
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ValueError(f"t={t} outside the temperature trace")
        T = np.array([np.interp(t, self.times, self.T[:, j]) for j in range(self.T.shape[1])])
        r = np.array([np.interp(t, self.times, self.dTdt[:, j]) for j in range(self.dTdt.shape[1])])
        return T, r
