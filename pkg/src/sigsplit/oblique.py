"""Batch construction and application of oblique projectors.

Given spanning sets for a component subspace V and a nuisance subspace Wperp,
builds the projector onto V along Wperp as a set of dual measurement vectors:
each coefficient of the separated component is an inner product of the data
with one dual vector. The batch path over the full dictionary is kept as the
ill-posed baseline that the adaptive pursuit is compared against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_ACCEPT_TOL,
    DEFAULT_PINV_RTOL,
    GramMatrix,
    GridMismatchError,
    OrthoBasis,
    SampledSignal,
    SamplingGrid,
    gram_spectrum,
    pinv_gram,
)


@dataclass(frozen=True)
class Dictionary:
    """Ordered collection of atoms on a shared grid, one label per atom.

    Atoms are the columns of `atoms`. All atoms must be nonzero unless their
    label carries a truthy `degenerate` attribute (used for collapsed atoms
    produced during projection). Labels must be unique.
    """

    atoms: np.ndarray
    labels: tuple
    grid: SamplingGrid

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim != 2:
            raise ValueError(f"atoms must be a 2-D (N, M) array, got shape {atoms.shape}")
        if atoms.shape[0] != self.grid.count:
            raise ValueError(
                f"atom length {atoms.shape[0]} does not match grid count {self.grid.count}"
            )
        if not np.all(np.isfinite(atoms)):
            raise ValueError("dictionary contains non-finite entries")
        labels = tuple(self.labels)
        if len(labels) != atoms.shape[1]:
            raise ValueError(f"{len(labels)} labels for {atoms.shape[1]} atoms")
        if len(set(labels)) != len(labels):
            raise ValueError("dictionary labels must be unique")
        norms = np.linalg.norm(atoms, axis=0)
        for i, label in enumerate(labels):
            if norms[i] == 0.0 and not getattr(label, "degenerate", False):
                raise ValueError(f"atom {i} ({label!r}) is the zero vector")
        atoms = atoms.copy()
        atoms.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.atoms.shape[1]

    def atom(self, i: int) -> SampledSignal:
        return SampledSignal(self.atoms[:, i], self.grid)

    def select(self, indices) -> "Dictionary":
        """Sub-dictionary restricted to `indices`, order preserved."""
        idx = list(indices)
        return Dictionary(self.atoms[:, idx], tuple(self.labels[i] for i in idx), self.grid)

    @classmethod
    def from_signals(cls, signals, labels) -> "Dictionary":
        signals = list(signals)
        if not signals:
            raise ValueError("need at least one signal")
        grid = signals[0].grid
        return cls(np.column_stack([s.values for s in signals]), tuple(labels), grid)

    @classmethod
    def empty(cls, grid: SamplingGrid) -> "Dictionary":
        """Dictionary spanning the zero subspace."""
        return cls(np.empty((grid.count, 0)), (), grid)


@dataclass(frozen=True)
class ConditionReport:
    """Spectrum diagnostics of the Gram matrix behind a projector build."""

    singular_values: np.ndarray
    numeric_rank: int
    condition_number: float

    def __post_init__(self):
        sv = np.asarray(self.singular_values, dtype=float)
        if np.any(sv < 0) or np.any(np.diff(sv) > 0):
            raise ValueError("singular values must be non-negative and sorted descending")
        sv = sv.copy()
        sv.flags.writeable = False
        object.__setattr__(self, "singular_values", sv)


@dataclass(frozen=True)
class ObliqueProjector:
    """Projector onto span(v_atoms) along the span of wperp_basis.

    Applying it to a signal f yields sum_i v_i <w_i|f> where w_i are the dual
    measurement vectors (columns of `duals`).
    """

    v_atoms: Dictionary
    duals: np.ndarray
    wperp_basis: OrthoBasis

    def __post_init__(self):
        duals = np.asarray(self.duals, dtype=float)
        if duals.shape != self.v_atoms.atoms.shape:
            raise ValueError("need one dual vector per atom, same grid")
        duals = duals.copy()
        duals.flags.writeable = False
        object.__setattr__(self, "duals", duals)

    def dual(self, i: int) -> SampledSignal:
        return SampledSignal(self.duals[:, i], self.v_atoms.grid)

    def apply(self, f: SampledSignal) -> SampledSignal:
        return apply_oblique(self, f)


class WperpResult:
    """Orthonormalized nuisance-subspace spanners plus rejected indices."""

    def __init__(self, basis: OrthoBasis, rejected: tuple[int, ...]):
        self.basis = basis
        self.rejected = rejected

    def __iter__(self):
        return iter((self.basis, self.rejected))


def orthonormalize_wperp(
    wperp_spanners: Dictionary, accept_tol: float = DEFAULT_ACCEPT_TOL
) -> WperpResult:
    """Orthonormal basis of the numerically detected span of the spanners.

    Spanners that are dependent on the preceding ones at accept_tol are
    dropped; their indices are reported in `rejected`.
    """
    basis = OrthoBasis(wperp_spanners.grid)
    rejected = []
    for i in range(len(wperp_spanners)):
        outcome = basis.expand(wperp_spanners.atom(i), accept_tol)
        if not outcome.accepted:
            rejected.append(i)
    return WperpResult(basis, tuple(rejected))


@dataclass(frozen=True)
class DegenerateAtom:
    """Label wrapper marking an atom that collapsed to zero under projection."""

    base: object
    degenerate: bool = True

    def __str__(self):
        return f"{self.base} (degenerate)"


def build_u_atoms(v_atoms: Dictionary, wperp_basis: OrthoBasis, flag_tol: float = 1e-12) -> Dictionary:
    """Projected atoms u_i = v_i - P_wperp v_i, labels carried over.

    Atoms whose projection leaves (numerically) nothing are kept in place but
    flagged degenerate, so positions stay aligned with v_atoms.
    """
    if v_atoms.grid != wperp_basis.grid:
        raise GridMismatchError("v_atoms and wperp_basis grids differ")
    u = v_atoms.atoms - wperp_basis.project_values(v_atoms.atoms)
    v_norms = np.linalg.norm(v_atoms.atoms, axis=0)
    u_norms = np.linalg.norm(u, axis=0)
    labels = []
    for i, label in enumerate(v_atoms.labels):
        if u_norms[i] <= flag_tol * v_norms[i]:
            u[:, i] = 0.0
            labels.append(DegenerateAtom(label))
        else:
            labels.append(label)
    return Dictionary(u, tuple(labels), v_atoms.grid)


def build_oblique_batch(
    v_atoms: Dictionary,
    wperp_spanners: Dictionary,
    rel_tol: float = DEFAULT_PINV_RTOL,
    accept_tol: float = DEFAULT_ACCEPT_TOL,
) -> tuple[ObliqueProjector, ConditionReport]:
    """Build the projector over the whole dictionary in one shot.

    The Gram matrix is formed in the symmetric form G = U* U and inverted by
    truncated SVD; duals are w_i = sum_j u_j (G^+)_ji. With an empty
    wperp_spanners the result degenerates to the orthogonal projector onto
    span(v_atoms).
    """
    if len(v_atoms) == 0:
        raise ValueError("v_atoms must be nonempty")
    if v_atoms.grid != wperp_spanners.grid:
        raise GridMismatchError("v_atoms and wperp_spanners grids differ")
    wperp_basis = orthonormalize_wperp(wperp_spanners, accept_tol).basis
    u_atoms = build_u_atoms(v_atoms, wperp_basis)
    gram = GramMatrix.from_columns(u_atoms.atoms)
    g_pinv = pinv_gram(gram, rel_tol)
    duals = u_atoms.atoms @ g_pinv
    sv = gram_spectrum(gram)
    sigma_max = float(sv[0]) if sv.size else 0.0
    retained = sv[sv > rel_tol * sigma_max] if sigma_max > 0.0 else sv[:0]
    rank = int(retained.size)
    cond = float(sigma_max / retained[-1]) if rank > 0 else float("inf")
    report = ConditionReport(sv, rank, cond)
    return ObliqueProjector(v_atoms, duals, wperp_basis), report


def apply_oblique(projector: ObliqueProjector, f: SampledSignal) -> SampledSignal:
    """sum_i v_i <w_i|f>."""
    if f.grid != projector.v_atoms.grid:
        raise GridMismatchError("signal grid does not match projector grid")
    measurements = projector.duals.T @ f.values
    return SampledSignal(projector.v_atoms.atoms @ measurements, f.grid)
