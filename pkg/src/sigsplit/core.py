"""Discrete inner-product-space kernel.

Signals are real sample vectors on a uniform grid. The inner product is the
plain Euclidean dot product of the samples (no quadrature weights), so every
formula downstream is grid independent. Provides orthonormal basis
accumulation with rank-one expansion, orthogonal projection, and truncated
pseudo-inversion of Gram matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_ACCEPT_TOL = 1e-8
DEFAULT_PINV_RTOL = 1e-12


class GridMismatchError(ValueError):
    """Two signals do not live on the same sampling grid."""


@dataclass(frozen=True)
class SamplingGrid:
    """Uniform grid of `count` points from `start` to `stop` inclusive."""

    start: float
    stop: float
    count: int

    def __post_init__(self):
        if not self.stop > self.start:
            raise ValueError(f"stop ({self.stop}) must exceed start ({self.start})")
        if self.count < 2:
            raise ValueError(f"count must be >= 2, got {self.count}")

    @property
    def spacing(self) -> float:
        return (self.stop - self.start) / (self.count - 1)

    def points(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.count)


@dataclass(frozen=True)
class SampledSignal:
    """Real signal given by its sample values on a SamplingGrid."""

    values: np.ndarray
    grid: SamplingGrid

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError(f"values must be a 1-D vector, got shape {values.shape}")
        if values.shape[0] != self.grid.count:
            raise ValueError(
                f"values length {values.shape[0]} does not match grid count {self.grid.count}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("signal contains non-finite entries")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def __add__(self, other: "SampledSignal") -> "SampledSignal":
        check_same_grid(self, other)
        return SampledSignal(self.values + other.values, self.grid)

    def __sub__(self, other: "SampledSignal") -> "SampledSignal":
        check_same_grid(self, other)
        return SampledSignal(self.values - other.values, self.grid)

    def __mul__(self, scalar: float) -> "SampledSignal":
        return SampledSignal(self.values * float(scalar), self.grid)

    __rmul__ = __mul__


def check_same_grid(a: SampledSignal, b: SampledSignal) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(f"grids differ: {a.grid} vs {b.grid}")


def inner(a: SampledSignal, b: SampledSignal) -> float:
    """Euclidean dot product of the sample vectors."""
    check_same_grid(a, b)
    return float(np.dot(a.values, b.values))


@dataclass(frozen=True)
class ExpansionOutcome:
    """Result of attempting to extend an orthonormal basis by one vector.

    `gamma` is the component of the input orthogonal to the current basis;
    `accepted` is False when that component is numerically negligible.
    """

    gamma: SampledSignal
    gamma_norm: float
    accepted: bool


class OrthoBasis:
    """Ordered orthonormal vectors built up by Gram-Schmidt expansion.

    Single-writer: expand() mutates in place. Every expansion applies the
    projection subtraction twice (one full re-orthogonalization pass), which
    keeps the basis orthonormal to ~1e-10 even for nearly dependent inputs.
    """

    def __init__(self, grid: SamplingGrid):
        self.grid = grid
        self._q = np.empty((grid.count, 0))
        self.source_norms: list[float] = []

    @classmethod
    def from_vectors(
        cls, grid: SamplingGrid, vectors: np.ndarray, accept_tol: float = DEFAULT_ACCEPT_TOL
    ) -> "OrthoBasis":
        """Orthonormalize the columns of `vectors` in order, dropping dependent ones."""
        basis = cls(grid)
        for j in range(vectors.shape[1]):
            basis.expand(SampledSignal(vectors[:, j], grid), accept_tol)
        return basis

    def __len__(self) -> int:
        return self._q.shape[1]

    def copy(self) -> "OrthoBasis":
        other = OrthoBasis(self.grid)
        other._q = self._q.copy()
        other.source_norms = list(self.source_norms)
        return other

    @property
    def matrix(self) -> np.ndarray:
        """Read-only (N, k) matrix whose columns are the basis vectors."""
        view = self._q.view()
        view.flags.writeable = False
        return view

    def vector(self, i: int) -> SampledSignal:
        return SampledSignal(self._q[:, i], self.grid)

    def project_values(self, values: np.ndarray) -> np.ndarray:
        if len(self) == 0:
            return np.zeros_like(values)
        return self._q @ (self._q.T @ values)

    def expand(self, u: SampledSignal, accept_tol: float = DEFAULT_ACCEPT_TOL) -> ExpansionOutcome:
        """Append the normalized residual of `u`, if large enough to keep.

        Returns the residual gamma = u - P u, its norm, and whether it was
        accepted (gamma_norm > accept_tol * ||u||). A zero or dependent input
        is rejected, never raised.
        """
        if u.grid != self.grid:
            raise GridMismatchError(f"grids differ: {u.grid} vs {self.grid}")
        u_norm = float(np.linalg.norm(u.values))
        gamma = u.values - self.project_values(u.values)
        gamma = gamma - self.project_values(gamma)  # second pass
        gamma_norm = float(np.linalg.norm(gamma))
        accepted = gamma_norm > accept_tol * u_norm and u_norm > 0.0
        if accepted:
            self._q = np.column_stack([self._q, gamma / gamma_norm])
            self.source_norms.append(gamma_norm)
        return ExpansionOutcome(SampledSignal(gamma, self.grid), gamma_norm, accepted)


def orthonormal_expand(
    basis: OrthoBasis, u: SampledSignal, accept_tol: float = DEFAULT_ACCEPT_TOL
) -> ExpansionOutcome:
    return basis.expand(u, accept_tol)


def project_onto_basis(basis: OrthoBasis, f: SampledSignal) -> SampledSignal:
    """Orthogonal projection of `f` onto the span of the basis."""
    if f.grid != basis.grid:
        raise GridMismatchError(f"grids differ: {f.grid} vs {basis.grid}")
    return SampledSignal(basis.project_values(f.values), f.grid)


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric positive semidefinite matrix of pairwise inner products."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"Gram matrix must be square, got shape {entries.shape}")
        scale = float(np.abs(entries).max()) if entries.size else 0.0
        if scale > 0.0 and float(np.abs(entries - entries.T).max()) > 1e-12 * max(scale, 1.0):
            raise ValueError("Gram matrix is not symmetric")
        entries = 0.5 * (entries + entries.T)
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_columns(cls, atoms: np.ndarray) -> "GramMatrix":
        return cls(atoms.T @ atoms)

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def pinv_gram(gram: GramMatrix | np.ndarray, rel_tol: float = DEFAULT_PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via SVD with relative truncation.

    Singular values <= rel_tol * sigma_max are treated as zero. An all-zero
    matrix maps to the zero matrix.
    """
    entries = gram.entries if isinstance(gram, GramMatrix) else np.asarray(gram, dtype=float)
    if entries.size == 0:
        return np.zeros_like(entries)
    u, s, vt = np.linalg.svd(entries, hermitian=True)
    if s[0] <= 0.0:
        return np.zeros_like(entries)
    keep = s > rel_tol * s[0]
    inv_s = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return (vt.T * inv_s) @ u.T


def gram_spectrum(gram: GramMatrix | np.ndarray) -> np.ndarray:
    """Singular values of a Gram matrix, sorted descending."""
    entries = gram.entries if isinstance(gram, GramMatrix) else np.asarray(gram, dtype=float)
    if entries.size == 0:
        return np.empty(0)
    return np.linalg.svd(entries, compute_uv=False, hermitian=True)
