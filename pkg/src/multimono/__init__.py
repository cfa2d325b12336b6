"""Numerical checks for multi-marginal c-monotonicity with the pairwise inner-product cost."""

from .core import (
    ConfigError,
    GammaSet,
    Grid,
    IndexSubset,
    MultiPoint,
    SpaceConfig,
    UnsupportedRepresentation,
    cost_eval,
    delta_perp_project,
    project_marginal,
    project_pair,
    shift_gamma,
    sum_map,
)
from .report import CheckReport, Verdict

__version__ = "0.1.0"

__all__ = [
    "CheckReport",
    "ConfigError",
    "GammaSet",
    "Grid",
    "IndexSubset",
    "MultiPoint",
    "SpaceConfig",
    "UnsupportedRepresentation",
    "Verdict",
    "cost_eval",
    "delta_perp_project",
    "project_marginal",
    "project_pair",
    "shift_gamma",
    "sum_map",
]
