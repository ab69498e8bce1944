"""Unfitted finite element solver for two-phase Oseen flow with a moving interface."""

from ._core import (
    EocRow,
    EocTable,
    MarkerChain,
    RunConfig,
    RunResult,
    Side,
    SplineInterface,
    StepDiagnostics,
    case_functions,
    circle_markers,
    convergence_study,
    fit_periodic_spline,
    redistribute_markers,
    run_case,
    tracking_order_study,
)

__all__ = [
    "EocRow",
    "EocTable",
    "MarkerChain",
    "RunConfig",
    "RunResult",
    "Side",
    "SplineInterface",
    "StepDiagnostics",
    "case_functions",
    "circle_markers",
    "convergence_study",
    "fit_periodic_spline",
    "redistribute_markers",
    "run_case",
    "tracking_order_study",
]
