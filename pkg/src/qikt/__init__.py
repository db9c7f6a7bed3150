"""Inverse kinetic theory for the quantum hydrodynamic equations.

The package builds the Madelung fluid fields of a Schrodinger solution,
splits the momentum fluctuations into directional temperatures, constructs
the phase-space Maxwellian and mean-field force whose moments reproduce the
fluid equations, pushes Lagrangian particles under that force, and
integrates the T0 equation that keeps the Shannon entropy constant.
"""
__version__ = "0.1.0"

from .grid import PhysicalConstants, SpatialGrid
from .madelung import AnalyticBenchmark, FluidFields, Wavefunction, benchmark_fields, decompose_wavefunction
from .temperatures import DirectionalTemperatures, assemble_temperatures, momentum_fluctuations
from .kinetic import ForceKernel, LocalMaxwellian, correspondence_moments
from .particles import ParticleEnsemble, push, sample_initial
from .entropy import integrate_t0, shannon_entropy_maxwellian

__all__ = [
    "PhysicalConstants", "SpatialGrid", "AnalyticBenchmark", "FluidFields", "Wavefunction",
    "benchmark_fields", "decompose_wavefunction", "DirectionalTemperatures", "assemble_temperatures",
    "momentum_fluctuations", "ForceKernel", "LocalMaxwellian", "correspondence_moments",
    "ParticleEnsemble", "push", "sample_initial", "integrate_t0", "shannon_entropy_maxwellian",
]
