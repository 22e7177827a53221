"""Moment-constraint control variates for stochastic reaction networks."""

from .control_variates import (
    EfficiencyReport,
    LcvEstimate,
    LinearControlVariates,
    efficiency,
    estimate_beta,
    improvement_ratio,
    lcv_estimate,
)
from .core import (
    MassAction,
    Mean,
    Model,
    RateExpression,
    Reaction,
    ThresholdProbability,
    Trajectory,
    mass_action_propensity,
    stoich_change,
    target_value,
)
from .benchmark import BenchSummary, bench
from .dsl import ParseError, format_model, load_model, parse_model
from .models import builtin_model, builtin_models
from .moments import ControlVariateId, ConstraintExpansion, accumulator_keys, constraint_expansion, moment_drift
from .oracle import FiniteStateProjection, TruncationBox, TruncationError, bd_mean_closed_form, fsp_transient
from .polynomial import Polynomial, shift_polynomial
from .rates import PolynomialityError, StackProgram, compile_expr, evaluate, to_polynomial
from .selection import GreedyCVSelector, MomentControlVariates, PipelineResult, SelectionConfig, run_pipeline
from .simulation import SimConfig, run_batch, simulate, simulate_with_accumulators
from .stats import RunningStats

__version__ = "0.1.0"
