"""Testing-guided multi-objective hyperparameter selection with certified risk limits."""

from .core import Bound, Configuration, EvalRecord, LossSamples, RiskSpec, SearchSpace, Split
from .guided_bo import BOConfig, run_bo
from .objectives import get_problem, provider_from_descriptor
from .pareto import hvi, hypervolume, pareto_front
from .stats import alpha_max, hb_p_value, hoeffding_p_value, region_of_interest
from .testing import SelectionResult, certify, select

__all__ = [
    "BOConfig",
    "Bound",
    "Configuration",
    "EvalRecord",
    "LossSamples",
    "RiskSpec",
    "SearchSpace",
    "SelectionResult",
    "Split",
    "alpha_max",
    "certify",
    "get_problem",
    "hb_p_value",
    "hoeffding_p_value",
    "hvi",
    "hypervolume",
    "pareto_front",
    "provider_from_descriptor",
    "region_of_interest",
    "run_bo",
    "select",
]
