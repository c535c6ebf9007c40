"""Pulse-level simulation and analysis of single-qubit randomized benchmarking
on a microwave-driven neutral-atom qubit."""

from .analysis import (
    BudgetReport,
    FitResult,
    error_budget,
    fit_echo_decay,
    fit_eta,
    fit_gaussian,
    fit_least_squares,
    fit_rb_decay,
    fit_sinusoid,
)
from .clifford import CliffordElement, CliffordTable, generate_group
from .engine import (
    ExperimentTrace,
    RBConfig,
    RBDataset,
    run_pulse_calibration,
    run_ramsey,
    run_rb,
    run_spin_echo,
)
from .noise import NoiseConfig, ShotNoise, TrapDepthModel, apply_spam, coherence_time_rb, t2s_of_depth
from .pulse import PulsePrimitive, PulseSchedule, decompose, mean_clifford_duration

__version__ = "0.1.0"
