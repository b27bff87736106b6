"""Grouped sparse projections onto an average Hoyer-sparsity constraint.

The core entry points are :func:`project_group` (all vectors share one
sparsity budget), :func:`project_each` (every vector on its own) and
:func:`project_group_weighted`. Sparse NMF lives in :mod:`gsproj.nmf`, projected
network training in :mod:`gsproj.training` and file formats and synthetic data
in :mod:`gsproj.data_io`.
"""

from .exceptions import ConfigurationError, ConvergenceError, DomainError, ParseError
from .gsp import (
    GroupConstants,
    IndependentResult,
    ProjectionConfig,
    ProjectionResult,
    candidate_direction,
    discontinuity_points,
    g_eval,
    group_constants,
    mu_tilde,
    project_each,
    project_group,
    project_group_relative,
    project_single,
)
from .sparsity import (
    VectorGroup,
    average_sparsity,
    average_weighted_sparsity,
    soft_threshold,
    spar,
    spar_weighted,
)
from .wgsp import (
    WeightedConstants,
    WeightGroup,
    candidate_direction_weighted,
    gw_eval,
    mu_tilde_weighted,
    project_group_weighted,
    weighted_constants,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ConvergenceError",
    "DomainError",
    "ParseError",
    "GroupConstants",
    "IndependentResult",
    "ProjectionConfig",
    "ProjectionResult",
    "candidate_direction",
    "discontinuity_points",
    "g_eval",
    "group_constants",
    "mu_tilde",
    "project_each",
    "project_group",
    "project_group_relative",
    "project_single",
    "VectorGroup",
    "average_sparsity",
    "average_weighted_sparsity",
    "soft_threshold",
    "spar",
    "spar_weighted",
    "WeightedConstants",
    "WeightGroup",
    "candidate_direction_weighted",
    "gw_eval",
    "mu_tilde_weighted",
    "project_group_weighted",
    "weighted_constants",
]
