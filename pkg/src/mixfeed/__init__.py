"""Periodic solutions of mixed-feedback systems by monotone operator splitting."""

from .mixed_solver import (
    OuterConfig,
    SolveReport,
    adapt_period,
    estimate_contraction,
    scalar_mixed_solve,
    solve_mixed,
)
from .signal import PeriodicGrid, PeriodicSignal
from .splitting import DrConfig, dr_solve
from .systems import MixedFeedbackSystem, double_well, load_system, period_guess, van_der_pol

__version__ = "0.1.0"

__all__ = [
    "DrConfig",
    "MixedFeedbackSystem",
    "OuterConfig",
    "PeriodicGrid",
    "PeriodicSignal",
    "SolveReport",
    "adapt_period",
    "double_well",
    "dr_solve",
    "estimate_contraction",
    "load_system",
    "period_guess",
    "scalar_mixed_solve",
    "solve_mixed",
    "van_der_pol",
]
