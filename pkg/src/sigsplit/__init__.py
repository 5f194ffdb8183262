"""Separation of signals into nearly-coincident complementary subspaces.

Builds oblique projectors from dual measurement vectors and, when the full
construction is ill posed, selects a sparse sub-subspace adaptively by
forward/backward/swap pursuit.
"""

from .core import (
    DEFAULT_ACCEPT_TOL,
    DEFAULT_PINV_RTOL,
    ExpansionOutcome,
    GramMatrix,
    GridMismatchError,
    OrthoBasis,
    SampledSignal,
    SamplingGrid,
    inner,
    orthonormal_expand,
    pinv_gram,
    project_onto_basis,
)
from .oblique import (
    ConditionReport,
    Dictionary,
    ObliqueProjector,
    apply_oblique,
    build_oblique_batch,
    build_u_atoms,
    orthonormalize_wperp,
)
from .pursuit import (
    DecompositionResult,
    DegenerateAtomError,
    PursuitParams,
    PursuitState,
    TerminationReason,
    init_state,
    nonneg_constraint,
    refine_by_swapping,
    remove_atom,
    run_pursuit,
    select_backward,
    select_forward,
    select_swap_forward,
    step_forward,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_ACCEPT_TOL",
    "DEFAULT_PINV_RTOL",
    "ConditionReport",
    "DecompositionResult",
    "DegenerateAtomError",
    "Dictionary",
    "ExpansionOutcome",
    "GramMatrix",
    "GridMismatchError",
    "ObliqueProjector",
    "OrthoBasis",
    "PursuitParams",
    "PursuitState",
    "SampledSignal",
    "SamplingGrid",
    "TerminationReason",
    "apply_oblique",
    "build_oblique_batch",
    "build_u_atoms",
    "init_state",
    "inner",
    "nonneg_constraint",
    "orthonormal_expand",
    "orthonormalize_wperp",
    "pinv_gram",
    "project_onto_basis",
    "refine_by_swapping",
    "remove_atom",
    "run_pursuit",
    "select_backward",
    "select_forward",
    "select_swap_forward",
    "step_forward",
]
