"""Hawkes processes near criticality: kernels, Volterra solvers, Monte Carlo and limit diagnostics."""
from . import kernels, limits, metrics, simulate, volterra  # noqa: F401
from .errors import (  # noqa: F401
    BlowUpError,
    ConvergenceError,
    DomainError,
    HawkesError,
    RegimeError,
    StepSizeError,
)

__version__ = "0.1.0"
