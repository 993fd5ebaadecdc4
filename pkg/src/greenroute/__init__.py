"""Carbon-aware routing of LLM requests under accuracy and latency targets."""

from .budget import CarbonLedger, DualState, dual_update
from .domain import (
    FallbackReason,
    ModelPool,
    ModelProfile,
    PredictionBundle,
    RealizedOutcome,
    RequestInstance,
    RoutingDecision,
    SafetyMargins,
    SLOConfig,
    validate_trace,
)
from .engine import Ablations, RunConfig, RunResult, run
from .errors import ConfigError, DataError, EstimationError, GreenRouteError
from .estimators import FittedEstimators, fit_estimators, make_oracle_estimators, predict
from .feasibility import FeasibleSet, fallback_select, feasible_set
from .grid import GridIntensitySeries, constant_grid, intensity_at
from .metrics import ComparisonTable, MetricsReport, compare, summarize
from .policies import PDConfig, PolicyConfig, Variant

__version__ = "0.1.0"

__all__ = [
    "Ablations", "CarbonLedger", "ComparisonTable", "ConfigError", "DataError", "DualState",
    "EstimationError", "FallbackReason", "FeasibleSet", "FittedEstimators", "GreenRouteError",
    "GridIntensitySeries", "MetricsReport", "ModelPool", "ModelProfile", "PDConfig", "PolicyConfig",
    "PredictionBundle", "RealizedOutcome", "RequestInstance", "RoutingDecision", "RunConfig",
    "RunResult", "SLOConfig", "SafetyMargins", "Variant", "compare", "constant_grid", "dual_update",
    "fallback_select", "feasible_set", "fit_estimators", "intensity_at", "make_oracle_estimators",
    "predict", "run", "summarize", "validate_trace",
]
