"""Wildfire-aware distribution planning under decision-dependent failure risk."""

__version__ = "0.1.0"

from .ambiguity import AmbiguityParams, Scenario, enumerate_support, mu_bar, worst_distribution_oracle  # noqa: E402
from .decomposition import PlanResult, RunOptions, load_cuts, run, save_cuts  # noqa: E402
from .grid import GridError, GridModel, bundled_fixture, enumerate_forbidden_patterns, load_grid  # noqa: E402
from .master import InvestmentPlan, MasterOptions, TopologyDecision  # noqa: E402
from .simulate import MCConfig, MCReport, cvar, evaluate_plan  # noqa: E402

__all__ = [
    "AmbiguityParams", "GridError", "GridModel", "InvestmentPlan", "MCConfig", "MCReport", "MasterOptions",
    "PlanResult", "RunOptions", "Scenario", "TopologyDecision", "bundled_fixture", "cvar", "enumerate_forbidden_patterns",
    "enumerate_support", "evaluate_plan", "load_cuts", "load_grid", "mu_bar", "run", "save_cuts",
    "worst_distribution_oracle",
]
