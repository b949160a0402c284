"""Synthetic low-rank matrices for tests and benchmarks."""

from __future__ import annotations

import numpy as np

from . import rng as rngs
from .data import SparseMatrix


def low_rank(n_rows: int = 300, n_cols: int = 200, rank: int = 5, density: float = 0.3,
             noise: float = 0.1, seed: int = 0, ratings: bool = False
             ) -> tuple[SparseMatrix, np.ndarray, np.ndarray]:
    """Sample entries of X @ Y.T plus Gaussian noise at a random mask.

    Factors are drawn from U(0, 1), so the truth is positive like rating
    data. With ``ratings=True`` the noisy values are standardised, mapped
    to mean 3 with spread 1.2 and rounded onto the 1..5 star scale, which
    gives the repeated edge weights HOI mining needs.
    Returns the matrix and the true factors.
    """
    rng = rngs.stream(seed, "synthetic")
    X = rng.uniform(0.0, 1.0, size=(n_rows, rank))
    Y = rng.uniform(0.0, 1.0, size=(n_cols, rank))
    mask = rng.random((n_rows, n_cols)) < density
    rows, cols = np.nonzero(mask)
    values = np.einsum("ij,ij->i", X[rows], Y[cols]) + rng.normal(0.0, noise, size=len(rows))
    if ratings:
        z = (values - values.mean()) / values.std()
        values = np.clip(np.rint(3.0 + 1.2 * z), 1.0, 5.0)
    return SparseMatrix(n_rows, n_cols, rows, cols, values), X, Y
