"""Shared builders for randomized test instances."""

import numpy as np
import pytest

from sigsplit.core import GramMatrix, SamplingGrid, gram_spectrum
from sigsplit.oblique import Dictionary, build_u_atoms, orthonormalize_wperp


def make_grid(n: int) -> SamplingGrid:
    return SamplingGrid(0.0, 1.0, n)


def random_instance(rng, dim, m_v, m_w, cond_limit=1e6, max_tries=50):
    """Random component/nuisance dictionaries with bounded Gram condition.

    Draws Gaussian atoms and redraws until the Gram matrix of the projected
    atoms is well conditioned, so tolerance-sensitive checks stay meaningful.
    """
    grid = make_grid(dim)
    for _ in range(max_tries):
        v = Dictionary(
            rng.standard_normal((dim, m_v)),
            tuple(f"v{i}" for i in range(m_v)),
            grid,
        )
        if m_w == 0:
            wperp = Dictionary.empty(grid)
        else:
            wperp = Dictionary(
                rng.standard_normal((dim, m_w)),
                tuple(f"w{i}" for i in range(m_w)),
                grid,
            )
        basis = orthonormalize_wperp(wperp).basis
        u = build_u_atoms(v, basis)
        sv = gram_spectrum(GramMatrix.from_columns(u.atoms))
        if sv[-1] > 0 and sv[0] / sv[-1] <= cond_limit:
            return v, wperp
    raise RuntimeError("could not draw a well-conditioned instance")


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
