"""Recurrent training: fit, pseudo-label a slice of the high-confidence
HOIs, fold the clamped predictions back in, repeat."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngs
from .data import SparseMatrix, ValueRange, split, value_range
from .graph import HoiSet, build_graph, high_confidence_set
from .model import (FactorModel, SgdHyper, clamp_many, init_model, objective, predict_many,
                    train_epoch)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    f: int = 20
    eta: float = 0.01
    lam: float = 0.05
    alpha: float = 0.1
    n_rounds: int = 3
    max_epochs_per_round: int = 100
    tol: float = 1e-5
    patience: int = 10
    val_fraction: float = 0.05
    seed: int = 0
    max_order: int | None = 2
    warm_start: bool = True
    range_override: ValueRange | None = None

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be at least 1")
        if not 0 <= self.val_fraction < 0.5:
            raise ValueError("val_fraction must lie in [0, 0.5)")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.max_epochs_per_round < 1:
            raise ValueError("max_epochs_per_round must be at least 1")
        SgdHyper(self.eta, self.lam, self.alpha)  # raises on bad rates

    @property
    def hyper(self) -> SgdHyper:
        return SgdHyper(self.eta, self.lam, self.alpha)


class LambdaSet:
    """Accumulated pseudo-labelled entries with the round that added them."""

    def __init__(self):
        self.rows = np.empty(0, np.int64)
        self.cols = np.empty(0, np.int64)
        self.values = np.empty(0, np.float64)
        self.round_added = np.empty(0, np.int64)

    def __len__(self) -> int:
        return len(self.values)

    def add(self, rows, cols, values, round_no: int) -> None:
        self.rows = np.concatenate((self.rows, rows))
        self.cols = np.concatenate((self.cols, cols))
        self.values = np.concatenate((self.values, values))
        self.round_added = np.concatenate((self.round_added, np.full(len(rows), round_no)))

    def pairs(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.cols.tolist()))


@dataclass
class RoundReport:
    round: int
    epochs: int
    best_epoch: int
    losses: list[float]
    val_rmse: list[float]
    objective: float
    best_val_rmse: float
    s_n: int
    lambda_size: int


@dataclass
class TrainReport:
    rounds: list[RoundReport] = field(default_factory=list)
    n_hoi: int = 0
    n_fit: int = 0
    n_val: int = 0

    def as_tsv(self) -> str:
        lines = ["round\tepochs\tbest_epoch\tobjective\tval_rmse\ts_n\tlambda_size"]
        for r in self.rounds:
            lines.append(f"{r.round}\t{r.epochs}\t{r.best_epoch}\t{r.objective!r}\t{r.best_val_rmse!r}"
                         f"\t{r.s_n}\t{r.lambda_size}")
        return "\n".join(lines) + "\n"


def select_sn(remaining: HoiSet | np.ndarray, n: int, n_rounds: int,
              rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw round n's share of the remaining HOIs without replacement.

    ``remaining`` is an index array into S (a HoiSet is accepted for the
    first call). Returns (selected, still_remaining), both sorted. The
    final round selects nothing since its predictions would never be used.
    """
    if not 1 <= n <= n_rounds:
        raise ValueError(f"round {n} outside 1..{n_rounds}")
    if isinstance(remaining, HoiSet):
        remaining = np.arange(len(remaining))
    if n == n_rounds or len(remaining) == 0:
        return remaining[:0], remaining
    k = math.ceil(len(remaining) / (n_rounds - n + 1))
    pick = np.sort(rng.choice(len(remaining), size=k, replace=False))
    mask = np.zeros(len(remaining), dtype=bool)
    mask[pick] = True
    return remaining[mask], remaining[~mask]


def _rmse(model: FactorModel, m: SparseMatrix) -> float:
    err = m.values - predict_many(model, m.rows, m.cols)
    return math.sqrt(float(err @ err) / len(err))


def train_glfa(train: SparseMatrix, config: TrainConfig, hoi: HoiSet | None = None
               ) -> tuple[FactorModel, TrainReport, LambdaSet]:
    """Run ``config.n_rounds`` rounds of recurrent training on ``train``.

    HOIs are mined from the full training matrix (validation entries
    included, so pseudo-labels never overlap them) unless ``hoi`` is
    supplied. With a single round no graph work happens and the result is
    plain regularised matrix factorisation.
    """
    if train.nnz == 0:
        raise ValueError("empty training matrix")
    seed = config.seed
    vrange = config.range_override or value_range(train)
    if config.val_fraction > 0:
        val, fit = split(train, config.val_fraction, rngs.stream(seed, "validation"))
    else:
        fit, val = train, None
    mu = fit.mean()
    model = init_model(train.n_rows, train.n_cols, config.f, rngs.stream(seed, "init"), mu, vrange)
    hyper = config.hyper
    shuffle = rngs.stream(seed, "shuffle")
    select = rngs.stream(seed, "selection")
    report = TrainReport(n_fit=fit.nnz, n_val=0 if val is None else val.nnz)

    if config.n_rounds > 1 and hoi is None:
        hoi = high_confidence_set(build_graph(train), config.max_order)
    remaining = np.arange(len(hoi)) if hoi is not None else np.empty(0, np.int64)
    report.n_hoi = len(remaining)
    pool = LambdaSet()

    for n in range(1, config.n_rounds + 1):
        if n > 1 and not config.warm_start:
            model = init_model(train.n_rows, train.n_cols, config.f, rngs.stream(seed, "init", n), mu, vrange)
        losses: list[float] = []
        val_curve: list[float] = []
        best_epoch = 0
        if val is not None:
            best = _rmse(model, val)
            best_state = (model.X.copy(), model.Y.copy())
        else:
            best = math.inf
        stale = 0
        for epoch in range(1, config.max_epochs_per_round + 1):
            losses.append(train_epoch(model, fit, pool, hyper, shuffle))
            if val is not None:
                val_curve.append(_rmse(model, val))
                current, needed = val_curve[-1], config.tol
            else:
                current, needed = losses[-1], config.tol * abs(losses[-1])
            if current < best and val is not None:
                best_epoch = epoch
                best_state = (model.X.copy(), model.Y.copy())
            if best - current < needed:
                stale += 1
                if stale >= config.patience:
                    break
            else:
                stale = 0
            best = min(best, current)
        if val is not None:
            # roll back to the epoch with the lowest validation error
            model.X[...], model.Y[...] = best_state
        else:
            best_epoch = len(losses)
        final = objective(model, fit, pool, hyper)
        chosen, remaining = select_sn(remaining, n, config.n_rounds, select)
        if len(chosen):
            rows, cols = hoi.u[chosen], hoi.i[chosen]
            pool.add(rows, cols, clamp_many(predict_many(model, rows, cols), vrange), n)
        report.rounds.append(RoundReport(n, len(losses), best_epoch, losses, val_curve, final,
                                         best if val is not None else math.nan, len(chosen), len(pool)))
        log.info("round %d: %d epochs (best %d), objective %.6g, val rmse %.6f, |S_n|=%d, |Lambda|=%d",
                 n, len(losses), best_epoch, final, report.rounds[-1].best_val_rmse, len(chosen), len(pool))
    return model, report, pool


def train_blf(train: SparseMatrix, config: TrainConfig) -> tuple[FactorModel, TrainReport]:
    """Basic latent factor model: a single round, no HOI mining."""
    model, report, _ = train_glfa(train, replace(config, n_rounds=1))
    return model, report
