"""Evaluation: Pareto filtering, hypervolume metrics, exact oracles, and
submodel-set inference."""

from .pareto import ParetoSet, dominates, pareto_filter
from .hypervolume import gap, hv_ratio, hypervolume, mc_hypervolume
from .refpoints import load_table, refpoints
from .oracle import ORACLE_LIMITS, brute_force_pareto
from .inference import solve_instance

__all__ = [
    "ParetoSet", "dominates", "pareto_filter",
    "hypervolume", "hv_ratio", "mc_hypervolume", "gap",
    "refpoints", "load_table",
    "brute_force_pareto", "ORACLE_LIMITS",
    "solve_instance",
]
