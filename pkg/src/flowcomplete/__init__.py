"""Numerical flow completion of vector fields on open subsets of R^n."""

from .completion import (
    ChartHandle,
    Completion,
    CompletionConfig,
    CompletionPoint,
    MorphismSpec,
    NotInChartError,
    NotInOverlapError,
    TargetNotCompleteError,
    UnknownVerdictError,
)
from .expr import EvaluationError, ParseError, parse_expression, parse_predicate
from .geometry import (
    ExistenceWindow,
    ManifoldSpec,
    OutsideDomainError,
    TaggedPoint,
    VectorFieldSpec,
)
from .integrator import (
    FlowOutcome,
    FlowStatus,
    IntegratorConfig,
    existence_window,
    flow,
    order_check,
)
from .scenarios import BUILTIN_NAMES, Scenario, builtin, load_scenario, save_scenario
from .separability import (
    IdentificationReport,
    ProbeConfig,
    SeparabilityVerdict,
    identification_report,
    nonseparability_flow_invariance,
    separability_test,
)

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_NAMES",
    "ChartHandle",
    "Completion",
    "CompletionConfig",
    "CompletionPoint",
    "EvaluationError",
    "ExistenceWindow",
    "FlowOutcome",
    "FlowStatus",
    "IdentificationReport",
    "IntegratorConfig",
    "ManifoldSpec",
    "MorphismSpec",
    "NotInChartError",
    "NotInOverlapError",
    "OutsideDomainError",
    "ParseError",
    "ProbeConfig",
    "Scenario",
    "SeparabilityVerdict",
    "TaggedPoint",
    "TargetNotCompleteError",
    "UnknownVerdictError",
    "VectorFieldSpec",
    "builtin",
    "existence_window",
    "flow",
    "identification_report",
    "load_scenario",
    "nonseparability_flow_invariance",
    "order_check",
    "parse_expression",
    "parse_predicate",
    "save_scenario",
    "separability_test",
]
