"""Adaptive subspace selection by greedy forward/backward/swap pursuit.

Forward selection picks, at each step, the candidate atom whose component
orthogonal to the already-selected subspace best matches the data; dual
measurement vectors and expansion coefficients are maintained by rank-one
recursions rather than refactorizations. When the rank budget is exhausted
without convergence, backward deletions paired with forward reselections
(swaps) refine the selected subspace, escalating to multi-atom exchanges.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    DEFAULT_ACCEPT_TOL,
    GridMismatchError,
    OrthoBasis,
    SampledSignal,
)
from .oblique import Dictionary, build_u_atoms, orthonormalize_wperp


class DegenerateAtomError(ValueError):
    """The requested atom is numerically dependent on the selected subspace."""


class PursuitNumericsError(RuntimeError):
    """The selected subspace lost numerical rank during an update."""


class TerminationReason(enum.Enum):
    RESIDUAL_BELOW_DELTA = "residual_below_delta"
    RANK_BUDGET_EXHAUSTED = "rank_budget_exhausted"
    SWAP_CONVERGED = "swap_converged"
    CONSTRAINT_BLOCKED = "constraint_blocked"


@dataclass(frozen=True)
class PursuitParams:
    """Knobs of a pursuit run.

    max_rank is the computability budget (largest selection size); sparsity
    is an optional expected-sparsity hint and must not exceed max_rank; delta
    is the residual-norm stopping level. Candidates whose orthogonal
    component falls below accept_tol (relative to the atom norm) are screened
    out for the current basis. The optional constraint predicate receives the
    tentative reconstruction after a candidate step and may veto it. All
    argmax/argmin ties resolve to the lowest index.
    """

    max_rank: int
    sparsity: int | None = None
    delta: float = 0.0
    accept_tol: float = DEFAULT_ACCEPT_TOL
    max_swap_stage: int = 2
    constraint: Optional[Callable[[np.ndarray], bool]] = None
    improvement_rel: float = 1e-12
    zero_residual_rel: float = 1e-12

    def __post_init__(self):
        if self.max_rank < 1:
            raise ValueError("max_rank must be >= 1")
        if self.sparsity is not None and self.sparsity > self.max_rank:
            raise ValueError("sparsity must not exceed max_rank")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.max_swap_stage < 0:
            raise ValueError("max_swap_stage must be >= 0")

    def stop_threshold_sq(self, f_norm: float) -> float:
        """Squared residual level at which selection stops.

        The configured delta, floored at zero_residual_rel * ||f|| so that a
        signal numerically inside the nuisance subspace yields an empty
        selection even with delta = 0.
        """
        floor = self.zero_residual_rel * f_norm
        return max(self.delta**2, floor * floor)


class PursuitState:
    """Mutable record of one pursuit run (single writer).

    Tracks the selected index list, an orthonormal basis of the selected
    subspace, the dual measurement vectors, expansion coefficients, the
    data's component in the search space (pw_f), and the squared residual
    norm. Cached cross products keep candidate scoring at O(k M) per step.
    """

    def __init__(
        self,
        v_atoms: Dictionary,
        u_atoms: Dictionary,
        wperp_basis: OrthoBasis,
        f: SampledSignal,
        pw_f: SampledSignal,
        accept_tol: float,
    ):
        self.v_atoms = v_atoms
        self.u_atoms = u_atoms
        self.wperp_basis = wperp_basis
        self.f = f
        self.pw_f = pw_f
        self.f_norm = f.norm()
        self.accept_tol = accept_tol
        self.selected: list[int] = []
        self.w_basis = OrthoBasis(v_atoms.grid)
        n = v_atoms.grid.count
        self.duals = np.empty((n, 0))
        self.coeffs = np.empty(0)
        self.residual_sq = float(np.dot(pw_f.values, pw_f.values))
        self.swaps_performed = 0
        self.stage_reached = 0
        self._uf = u_atoms.atoms.T @ pw_f.values
        self._u_norms_sq = np.einsum("ij,ij->j", u_atoms.atoms, u_atoms.atoms)
        self._cu = np.empty((0, len(u_atoms)))
        self._qf = np.empty(0)

    @property
    def k(self) -> int:
        return len(self.selected)

    def copy(self) -> "PursuitState":
        other = object.__new__(PursuitState)
        other.v_atoms = self.v_atoms
        other.u_atoms = self.u_atoms
        other.wperp_basis = self.wperp_basis
        other.f = self.f
        other.pw_f = self.pw_f
        other.f_norm = self.f_norm
        other.accept_tol = self.accept_tol
        other.selected = list(self.selected)
        other.w_basis = self.w_basis.copy()
        other.duals = self.duals.copy()
        other.coeffs = self.coeffs.copy()
        other.residual_sq = self.residual_sq
        other.swaps_performed = self.swaps_performed
        other.stage_reached = self.stage_reached
        other._uf = self._uf
        other._u_norms_sq = self._u_norms_sq
        other._cu = self._cu.copy()
        other._qf = self._qf.copy()
        return other

    def reconstruction_values(self) -> np.ndarray:
        """Current component-in-V estimate: sum_i c_i v_{selected_i}."""
        if not self.selected:
            return np.zeros(self.v_atoms.grid.count)
        return self.v_atoms.atoms[:, self.selected] @ self.coeffs

    def direct_residual(self) -> float:
        """Residual norm recomputed from the basis, bypassing the recursion."""
        values = self.pw_f.values
        resid = values - self.w_basis.project_values(values)
        return float(np.linalg.norm(resid))


@dataclass(frozen=True)
class DecompositionResult:
    """Outcome of a full pursuit run.

    component_v + component_wperp reproduces the input exactly because the
    second component is formed by subtraction. coeff_drift is the relative
    disagreement between recursively maintained coefficients and their direct
    recomputation; values above ~1e-6 indicate an ill-conditioned selection.
    """

    selected: tuple[int, ...]
    coeffs: np.ndarray
    component_v: SampledSignal
    component_wperp: SampledSignal
    final_residual: float
    iterations: int
    swaps_performed: int
    stage_reached: int
    termination: TerminationReason
    coeff_drift: float


def init_state(
    v_atoms: Dictionary,
    wperp_basis: OrthoBasis,
    f: SampledSignal,
    params: PursuitParams,
) -> PursuitState:
    """Empty selection over the projected candidate atoms."""
    if len(v_atoms) == 0:
        raise ValueError("v_atoms must be nonempty")
    if f.grid != v_atoms.grid or f.grid != wperp_basis.grid:
        raise GridMismatchError("signal, dictionary, and basis must share one grid")
    u_atoms = build_u_atoms(v_atoms, wperp_basis)
    pw_values = f.values - wperp_basis.project_values(f.values)
    pw_f = SampledSignal(pw_values, f.grid)
    return PursuitState(v_atoms, u_atoms, wperp_basis, f, pw_f, params.accept_tol)


def _candidate_order(state: PursuitState, params: PursuitParams):
    """Candidate indices sorted by score desc (ties: lowest index), with scores.

    The score of candidate n is |<gamma_n|pw_f>| / ||gamma_n|| for
    gamma_n = u_n - P u_n, evaluated from cached cross products.
    """
    m = len(state.u_atoms)
    proj = state._uf - state._cu.T @ state._qf
    res_sq = state._u_norms_sq - np.einsum("ij,ij->j", state._cu, state._cu)
    np.maximum(res_sq, 0.0, out=res_sq)
    eligible = res_sq > (params.accept_tol**2) * state._u_norms_sq
    if state.selected:
        eligible[state.selected] = False
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(eligible, np.abs(proj) / np.sqrt(res_sq), -np.inf)
    order = np.argsort(-scores, kind="stable")
    order = order[scores[order] > -np.inf]
    return order, scores, proj, res_sq


def _select(
    state: PursuitState, params: PursuitParams, respect_delta: bool = True
) -> tuple[Optional[int], str]:
    """Pick the next forward index; reasons: ok, delta, exhausted, constraint."""
    if respect_delta and state.residual_sq <= params.stop_threshold_sq(state.f_norm):
        return None, "delta"
    order, _scores, proj, res_sq = _candidate_order(state, params)
    if order.size == 0:
        return None, "exhausted"
    if params.constraint is None:
        return int(order[0]), "ok"
    recon = state.reconstruction_values()
    for n in order:
        alpha = proj[n] / res_sq[n]
        if state.selected:
            ek_v = state.v_atoms.atoms[:, state.selected] @ (
                state.duals.T @ state.v_atoms.atoms[:, n]
            )
        else:
            ek_v = 0.0
        tentative = recon + alpha * (state.v_atoms.atoms[:, n] - ek_v)
        if params.constraint(tentative):
            return int(n), "ok"
    return None, "constraint"


def select_forward(state: PursuitState, params: PursuitParams) -> Optional[int]:
    """Index maximizing |<gamma_n|pw_f>|/||gamma_n||, or None when done.

    Returns None when the residual is already at or below delta, or when no
    unselected atom passes the accept_tol screening (or, with a constraint,
    when every candidate's tentative reconstruction is vetoed).
    """
    idx, _reason = _select(state, params)
    return idx


def step_forward(state: PursuitState, idx: int, variant: str = "u") -> PursuitState:
    """Add atom `idx` to the selection, updating duals and coefficients.

    The new dual is gamma/||gamma||^2; existing duals shed their component
    along it using the inner products of the new atom with the old duals
    (variant "u" uses the projected atom, variant "v" the raw atom; both are
    mathematically identical and kept for cross-checking).
    """
    if idx in state.selected:
        raise ValueError(f"atom {idx} already selected")
    if variant not in ("u", "v"):
        raise ValueError(f"unknown variant {variant!r}")
    u_col = state.u_atoms.atoms[:, idx]
    v_col = state.v_atoms.atoms[:, idx]
    outcome = state.w_basis.expand(SampledSignal(u_col, state.u_atoms.grid), state.accept_tol)
    if not outcome.accepted:
        raise DegenerateAtomError(
            f"atom {idx} is numerically inside the selected subspace "
            f"(residual norm {outcome.gamma_norm:.3e})"
        )
    gamma = outcome.gamma.values
    gnorm = outcome.gamma_norm
    w_new = gamma / gnorm**2
    t = state.duals.T @ v_col
    h = t if variant == "v" else state.duals.T @ u_col
    c_new = float(np.dot(gamma, state.pw_f.values)) / gnorm**2
    if state.k:
        state.duals = state.duals - np.outer(w_new, h)
        state.coeffs = state.coeffs - c_new * t
    state.duals = np.column_stack([state.duals, w_new])
    state.coeffs = np.append(state.coeffs, c_new)
    state.selected.append(int(idx))
    q = gamma / gnorm
    state._cu = np.vstack([state._cu, q @ state.u_atoms.atoms])
    state._qf = np.append(state._qf, float(np.dot(q, state.pw_f.values)))
    state.residual_sq = max(state.residual_sq - (c_new * gnorm) ** 2, 0.0)
    return state


def remove_atom(state: PursuitState, position: int) -> PursuitState:
    """Delete the atom at `position` in the selection order.

    Retained duals shed their component along the removed dual; coefficients
    absorb the removed contribution; the orthonormal basis of the shrunken
    subspace is rebuilt from the retained projected atoms, which realizes the
    rank-one projector downdate.
    """
    k = state.k
    if not 0 <= position < k:
        raise IndexError(f"position {position} out of range for selection of size {k}")
    w_j = state.duals[:, position]
    wj_sq = float(np.dot(w_j, w_j))
    overlaps = state.duals.T @ w_j
    c_j = float(state.coeffs[position])
    keep = [i for i in range(k) if i != position]
    state.duals = (state.duals - np.outer(w_j, overlaps / wj_sq))[:, keep]
    state.coeffs = (state.coeffs - overlaps * (c_j / wj_sq))[keep]
    state.residual_sq = state.residual_sq + c_j**2 / wj_sq
    state.selected.pop(position)
    basis = OrthoBasis.from_vectors(
        state.u_atoms.grid, state.u_atoms.atoms[:, state.selected], state.accept_tol
    )
    if len(basis) != len(state.selected):
        raise PursuitNumericsError("retained atoms lost rank during downdate")
    state.w_basis = basis
    q = basis.matrix
    state._cu = q.T @ state.u_atoms.atoms
    state._qf = q.T @ state.pw_f.values
    return state


def _backward_ranking(state: PursuitState) -> np.ndarray:
    """Positions sorted by |c_i|/||w_i|| ascending, ties to the lowest position."""
    dual_norms = np.linalg.norm(state.duals, axis=0)
    criterion = np.abs(state.coeffs) / dual_norms
    return np.argsort(criterion, kind="stable")


def select_backward(state: PursuitState) -> int:
    """Position whose removal hurts the fit least: argmin |c_i|/||w_i||."""
    if state.k == 0:
        raise ValueError("selection is empty")
    return int(_backward_ranking(state)[0])


def select_swap_forward(state: PursuitState, params: PursuitParams) -> Optional[int]:
    """Forward reselection after a removal; may re-pick the removed atom.

    Same scoring as select_forward, evaluated on the downdated basis. The
    just-removed atom competes again; picking it signals swap rejection.
    """
    idx, _reason = _select(state, params, respect_delta=False)
    return idx


def _attempt_swap(
    state: PursuitState, params: PursuitParams, stage: int, first_rank: int
) -> Optional[PursuitState]:
    """One stage-`stage` exchange on a trial copy; None when refill fails."""
    trial = state.copy()
    for t in range(stage):
        ranking = _backward_ranking(trial)
        rank = first_rank if t == 0 else 0
        remove_atom(trial, int(ranking[rank]))
    stop_sq = params.stop_threshold_sq(trial.f_norm)
    for _ in range(stage):
        if trial.residual_sq <= stop_sq:
            break
        idx, _reason = _select(trial, params, respect_delta=False)
        if idx is None:
            return None
        step_forward(trial, idx)
    return trial


def refine_by_swapping(state: PursuitState, params: PursuitParams) -> PursuitState:
    """Swap atoms until no exchange improves the residual.

    Stage s removes the s backward-worst atoms (re-ranked after each removal)
    and runs s forward reselections; the exchange is kept only if the squared
    residual strictly drops by more than improvement_rel * ||pw_f||^2. When a
    stage lands on an index set already visited, it retries with the
    next-ranked backward candidate as the initial removal. Stages escalate to
    max_swap_stage and the whole ladder repeats until nothing improves.
    """
    stop_sq = params.stop_threshold_sq(state.f_norm)
    if state.residual_sq <= stop_sq or state.k == 0 or params.max_swap_stage == 0:
        return state
    margin = params.improvement_rel * float(np.dot(state.pw_f.values, state.pw_f.values))
    visited = {frozenset(state.selected)}
    while True:
        improved_any = False
        for stage in range(1, params.max_swap_stage + 1):
            if state.residual_sq <= stop_sq:
                return state
            if stage > state.k:
                break
            while True:
                if state.residual_sq <= stop_sq:
                    return state
                accepted = None
                rank = 0
                while rank < state.k:
                    trial = _attempt_swap(state, params, stage, rank)
                    if trial is None:
                        break
                    key = frozenset(trial.selected)
                    if key in visited:
                        rank += 1
                        continue
                    if trial.residual_sq < state.residual_sq - margin:
                        visited.add(key)
                        accepted = trial
                    break
                if accepted is None:
                    break
                accepted.swaps_performed += stage
                accepted.stage_reached = max(accepted.stage_reached, stage)
                state = accepted
                improved_any = True
        if not improved_any:
            return state


def run_pursuit(
    v_atoms: Dictionary,
    wperp_spanners: Dictionary,
    f: SampledSignal,
    params: PursuitParams,
) -> DecompositionResult:
    """Full separation: orthonormalize, select forward, refine, reconstruct."""
    if params.max_rank > len(v_atoms):
        raise ValueError(
            f"max_rank {params.max_rank} exceeds dictionary size {len(v_atoms)}"
        )
    wperp_basis = orthonormalize_wperp(wperp_spanners, params.accept_tol).basis
    state = init_state(v_atoms, wperp_basis, f, params)
    stop_sq = params.stop_threshold_sq(state.f_norm)
    iterations = 0
    blocked = False
    while state.k < params.max_rank:
        idx, reason = _select(state, params)
        if idx is None:
            blocked = reason == "constraint"
            break
        step_forward(state, idx)
        iterations += 1
    refined = False
    if not blocked and state.residual_sq > stop_sq and params.max_swap_stage > 0 and state.k > 0:
        state = refine_by_swapping(state, params)
        refined = True
    if blocked:
        termination = TerminationReason.CONSTRAINT_BLOCKED
    elif state.residual_sq <= stop_sq:
        termination = TerminationReason.RESIDUAL_BELOW_DELTA
    elif refined:
        termination = TerminationReason.SWAP_CONVERGED
    else:
        termination = TerminationReason.RANK_BUDGET_EXHAUSTED
    coeffs = state.coeffs.copy()
    if state.k:
        direct = state.duals.T @ state.pw_f.values
        scale = max(float(np.abs(direct).max()), 1e-300)
        coeff_drift = float(np.abs(coeffs - direct).max()) / scale
    else:
        coeff_drift = 0.0
    component_v = SampledSignal(state.reconstruction_values(), f.grid)
    component_wperp = SampledSignal(f.values - component_v.values, f.grid)
    return DecompositionResult(
        selected=tuple(state.selected),
        coeffs=coeffs,
        component_v=component_v,
        component_wperp=component_wperp,
        final_residual=state.direct_residual(),
        iterations=iterations,
        swaps_performed=state.swaps_performed,
        stage_reached=state.stage_reached,
        termination=termination,
        coeff_drift=coeff_drift,
    )


def nonneg_constraint(rel_tol: float = 1e-10) -> Callable[[np.ndarray], bool]:
    """Predicate accepting reconstructions with no significant negative values."""

    def predicate(values: np.ndarray) -> bool:
        scale = float(np.abs(values).max()) if values.size else 0.0
        return float(values.min()) >= -rel_tol * scale if scale > 0.0 else True

    return predicate
