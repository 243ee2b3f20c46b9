"""Pareto fronts, trade-off selection, deployment scenarios, random search
and cross-validation over trained mappings."""

from .crossval import aggregate_folds, crossval
from .pareto import (
    PERSPECTIVES,
    ParetoPoint,
    Perspective,
    pareto_front,
    perspective,
    reevaluate_perspective,
)
from .scenarios import SCENARIOS, ScenarioResult, ScenarioSpec, run_all_scenarios, run_scenario
from .scoring import CROSSVAL_ROWS, score_mapping
from .selection import SelectionCoefficients, select_tradeoff, selection_score
from .sweep import SearchSpace, read_pareto_csv, sweep, write_pareto_csv

__all__ = [
    "CROSSVAL_ROWS", "PERSPECTIVES", "SCENARIOS", "ParetoPoint", "Perspective",
    "ScenarioResult", "ScenarioSpec", "SearchSpace", "SelectionCoefficients",
    "aggregate_folds", "crossval", "pareto_front", "perspective", "read_pareto_csv",
    "reevaluate_perspective", "run_all_scenarios", "run_scenario", "score_mapping",
    "select_tradeoff", "selection_score", "sweep", "write_pareto_csv",
]
