"""Monte Carlo integration of the thermostatted oscillator network."""

from ._backend import BACKEND, KERNELS, get_kernel
from .ensemble import (
    ComparisonRow,
    EnsembleStats,
    IntegrationDiverged,
    IntegratorConfig,
    NumericalInstability,
    Scheme,
    StepSizeError,
    check_step_size,
    discrete_moments,
    empirical_vs_exact,
    sample_energies,
    simulate_ensemble,
    step,
    trajectory_stream,
)

__all__ = [
    "BACKEND", "KERNELS", "get_kernel", "ComparisonRow", "EnsembleStats",
    "IntegrationDiverged", "IntegratorConfig", "NumericalInstability", "Scheme",
    "StepSizeError", "check_step_size", "discrete_moments", "empirical_vs_exact",
    "sample_energies", "simulate_ensemble", "step", "trajectory_stream",
]
