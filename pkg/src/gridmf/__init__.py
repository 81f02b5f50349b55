"""Median-filter detection of stealthy measurement attacks on PMU grids.

The package simulates per-unit PMU measurement snapshots on a small
transmission grid, estimates the state by complex weighted least squares,
constructs residual-invariant attack vectors, and detects them with one- and
two-dimensional median filtering plus current-balance criteria, followed by a
false-alarm refinement stage and a Monte Carlo evaluation harness.
"""

from .attack import AttackInstance, AttackSpec, apply_attack, make_attack, verify_stealth
from .detection import (
    DetectionVerdict,
    MfElement,
    MfSequence,
    NodeCriteria,
    Thresholds,
    build_sequence_1d,
    build_sequence_2d,
    detect,
    kappa_i_calc,
    kappa_i_direct,
    kappa_v,
    median_phasor,
    reconstruct_voltage,
)
from .estimation import (
    EstimationResult,
    MeasurementLayout,
    ObservabilityError,
    build_h,
    chi_square_test,
    largest_normalized_residual,
    uniform_weights,
    wls_estimate,
    wls_estimate_for,
)
from .grid import (
    Branch,
    Bus,
    GridParseError,
    GridTopology,
    GridValidationError,
    adjacency_of,
    default_grid,
    dumps_grid,
    load_grid,
    parse_grid,
    validate,
)
from .montecarlo import ConfusionStats, TrialConfig, TrialOutcome, run_montecarlo, run_trial
from .refine import RefinementResult, refine
from .simulate import (
    MeasurementSet,
    NoiseModel,
    TrueState,
    branch_current,
    evolve_state,
    injection_current,
    snapshot,
    synthesize_true_state,
    time_series,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
