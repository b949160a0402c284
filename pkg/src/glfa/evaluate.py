"""Held-out scoring and the paired Wilcoxon signed-ranks test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import norm, rankdata

from .data import SparseMatrix
from .model import FactorModel, predict_many

EXACT_MAX_N = 25


@dataclass(frozen=True)
class Scorecard:
    rmse: float
    mae: float
    n_scored: int
    n_cold: int

    def as_text(self) -> str:
        rows = [("RMSE", f"{self.rmse:.6f}"), ("MAE", f"{self.mae:.6f}"),
                ("scored", str(self.n_scored)), ("cold", str(self.n_cold))]
        return "".join(f"{k:<8}{v:>14}\n" for k, v in rows)

    def as_tsv(self) -> str:
        return f"rmse\tmae\tn_scored\tn_cold\n{self.rmse!r}\t{self.mae!r}\t{self.n_scored}\t{self.n_cold}\n"


def score(model: FactorModel, test: SparseMatrix, fallback: float, train: SparseMatrix | None = None) -> Scorecard:
    """RMSE and MAE of raw predictions over every test entry.

    A test entry is cold when its user or item embedding row is all zero or,
    if ``train`` is given, has no training entries; cold entries are
    predicted as ``fallback`` and still counted.
    """
    if test.nnz == 0:
        raise ValueError("empty test set")
    pred = predict_many(model, test.rows, test.cols)
    cold_rows = ~np.any(model.X != 0, axis=1)
    cold_cols = ~np.any(model.Y != 0, axis=1)
    if train is not None:
        cold_rows |= train.row_degrees() == 0
        cold_cols |= train.col_degrees() == 0
    cold = cold_rows[test.rows] | cold_cols[test.cols]
    pred = np.where(cold, fallback, pred)
    err = test.values - pred
    return Scorecard(
        rmse=math.sqrt(float(err @ err) / test.nnz),
        mae=float(np.abs(err).sum()) / test.nnz,
        n_scored=test.nnz,
        n_cold=int(cold.sum()),
    )


class WilcoxonResult(NamedTuple):
    r_plus: float
    r_minus: float
    p_value: float


def _exact_upper_tail(doubled_ranks: np.ndarray, doubled_stat: int) -> tuple[float, float]:
    """P(T >= t) and P(T <= t) for T = sum of ranks carrying a random sign.

    Works on doubled ranks so average (half-integer) ranks stay integral.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks.astype(np.int64):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:-r] if r else counts
        counts = counts + shifted
    counts /= 2.0 ** len(doubled_ranks)
    upper = float(counts[doubled_stat:].sum())
    lower = float(counts[:doubled_stat + 1].sum())
    return upper, lower


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float], alternative: str = "two-sided",
                         exact: bool | None = None) -> WilcoxonResult:
    """Paired signed-ranks test on d = a - b.

    R+ sums the ranks of positive differences, so with ``a`` the baseline's
    errors and ``b`` the candidate's, a large R+ favours the candidate.
    ``alternative="greater"`` tests for a - b shifted above zero.
    Zero differences are dropped; ties get average ranks. The exact null
    distribution is used up to 25 retained pairs, a tie-corrected normal
    approximation beyond.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("a and b must be paired 1-d sequences of equal length")
    if len(a) < 5:
        raise ValueError(f"need at least 5 pairs, got {len(a)}")
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise ValueError("all paired differences are zero; the test is undefined")
    ranks = rankdata(np.abs(d))
    r_plus = float(ranks[d > 0].sum())
    r_minus = float(ranks[d < 0].sum())
    if exact is None:
        exact = n <= EXACT_MAX_N
    if exact:
        upper, lower = _exact_upper_tail(np.rint(2 * ranks), int(round(2 * r_plus)))
    else:
        mean = n * (n + 1) / 4
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48
        z = (r_plus - mean) / math.sqrt(var)
        upper, lower = float(norm.sf(z)), float(norm.cdf(z))
    if alternative == "greater":
        p = upper
    elif alternative == "less":
        p = lower
    else:
        p = min(1.0, 2 * min(upper, lower))
    return WilcoxonResult(r_plus, r_minus, p)
