"""Newsvendor cost games: expected, realization and dynamic realization games,
their least-square values and cores, and repeated allocation processes."""

from .core import core_membership, is_balanced, least_core, max_excess, phi_quantile
from .demand import DemandModel, MarginalSpec, Regime, Temporal, normal_model
from .errors import ConfigError, DomainError, LPError
from .game import CostGame, Estimator, build_dr_game, build_expected_game, build_realization_game, from_values
from .processes import run, run_least_core_variant
from .solutions import WeightProfile, ls_value, shapley_value, shapley_weight_profile, uniform_weights

__all__ = [
    "ConfigError", "CostGame", "DemandModel", "DomainError", "Estimator", "LPError", "MarginalSpec",
    "Regime", "Temporal", "WeightProfile", "build_dr_game", "build_expected_game",
    "build_realization_game", "core_membership", "from_values", "is_balanced", "least_core",
    "ls_value", "max_excess", "normal_model", "phi_quantile", "run", "run_least_core_variant",
    "shapley_value", "shapley_weight_profile", "uniform_weights",
]
