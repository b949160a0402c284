"""Latent factor model: embeddings, objective and per-entry SGD."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numba
import numpy as np

from .data import ValueRange


class DivergenceError(FloatingPointError):
    """Training produced a non-finite embedding."""


class Kind(Enum):
    OBSERVED = "observed"
    PSEUDO = "pseudo"


@dataclass
class FactorModel:
    X: np.ndarray
    Y: np.ndarray
    range: ValueRange

    @property
    def f(self) -> int:
        return self.X.shape[1]

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_cols(self) -> int:
        return self.Y.shape[0]

    def copy(self) -> "FactorModel":
        return FactorModel(self.X.copy(), self.Y.copy(), self.range)


@dataclass(frozen=True)
class SgdHyper:
    eta: float
    lam: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        for name in ("eta", "lam", "alpha"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.eta <= 0:
            raise ValueError("learning rate must be positive")
        if self.lam < 0 or self.alpha < 0:
            raise ValueError("lambda and alpha must be non-negative")


@dataclass(frozen=True)
class PseudoEntry:
    u: int
    i: int
    value: float


def check_dimension(n_rows: int, n_cols: int, f: int) -> None:
    if f < 1:
        raise ValueError(f"embedding dimension must be >= 1, got {f}")
    smallest = min(n_rows, n_cols)
    if f > smallest / 2:
        raise ValueError(f"embedding dimension {f} exceeds half of min(|U|, |I|) = {smallest}")
    if f > smallest / 10:
        warnings.warn(f"embedding dimension {f} is large relative to min(|U|, |I|) = {smallest}",
                      stacklevel=3)


def init_model(n_rows: int, n_cols: int, f: int, seed, mean_rating: float,
               value_range: ValueRange) -> FactorModel:
    """Draw every embedding entry i.i.d. from U(0, sqrt(mean_rating / f)).

    The expected initial prediction is then mean_rating / 4.
    """
    check_dimension(n_rows, n_cols, f)
    if not mean_rating > 0:
        raise ValueError(f"mean rating must be positive for this initialisation, got {mean_rating}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    scale = math.sqrt(mean_rating / f)
    X = rng.uniform(0.0, scale, size=(n_rows, f))
    Y = rng.uniform(0.0, scale, size=(n_cols, f))
    return FactorModel(X, Y, value_range)


def predict(model: FactorModel, u: int, i: int) -> float:
    if not (0 <= u < model.n_rows and 0 <= i < model.n_cols):
        raise IndexError(f"pair ({u}, {i}) out of range for a {model.n_rows}x{model.n_cols} model")
    return float(model.X[u] @ model.Y[i])


def predict_many(model: FactorModel, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", model.X[rows], model.Y[cols])


def objective(model: FactorModel, observed, pseudo, hyper: SgdHyper) -> float:
    """Squared error on observed entries, alpha-weighted squared error on
    pseudo entries, and Frobenius regularisation of both embeddings.

    ``observed`` and ``pseudo`` expose ``rows``, ``cols`` and ``values``
    arrays; ``pseudo`` may be None.
    """
    err = observed.values - predict_many(model, observed.rows, observed.cols)
    total = 0.5 * float(err @ err)
    if pseudo is not None and len(pseudo.values):
        perr = pseudo.values - predict_many(model, pseudo.rows, pseudo.cols)
        total += 0.5 * hyper.alpha * float(perr @ perr)
    reg = float(np.sum(model.X * model.X) + np.sum(model.Y * model.Y))
    return total + 0.5 * hyper.lam * reg


@numba.njit(cache=True)
def _sgd_pass(X, Y, rows, cols, vals, weights, order, eta, lam):
    """Apply one update per visited entry; returns the position of the
    first entry that produced a non-finite value, or -1."""
    f = X.shape[1]
    for k in order:
        u = rows[k]
        i = cols[k]
        e = vals[k]
        for t in range(f):
            e -= X[u, t] * Y[i, t]
        e *= weights[k]
        ok = True
        for t in range(f):
            xu = X[u, t]
            yi = Y[i, t]
            X[u, t] = xu + eta * (yi * e - lam * xu)
            Y[i, t] = yi + eta * (xu * e - lam * yi)
            if not (np.isfinite(X[u, t]) and np.isfinite(Y[i, t])):
                ok = False
        if not ok:
            return k
    return -1


def _run(model, rows, cols, vals, weights, order, hyper):
    bad = _sgd_pass(model.X, model.Y, rows, cols, vals, weights, order, hyper.eta, hyper.lam)
    if bad >= 0:
        raise DivergenceError(
            f"non-finite embedding after updating entry ({rows[bad]}, {cols[bad]}, {vals[bad]}) "
            f"with eta={hyper.eta}; lower the learning rate")


def sgd_step(model: FactorModel, u: int, i: int, value: float, kind: Kind, hyper: SgdHyper) -> None:
    """Update rows u of X and i of Y in place from a single entry.

    The residual is computed once from the pre-update rows; pseudo entries
    scale it by alpha.
    """
    if not (0 <= u < model.n_rows and 0 <= i < model.n_cols):
        raise IndexError(f"pair ({u}, {i}) out of range")
    if not math.isfinite(value):
        raise ValueError("entry value must be finite")
    weight = hyper.alpha if kind is Kind.PSEUDO else 1.0
    _run(model, np.array([u]), np.array([i]), np.array([float(value)]), np.array([weight]),
         np.zeros(1, np.int64), hyper)


def clamp_activation(r_hat: float, value_range: ValueRange) -> float:
    """Reset predictions that fall outside [r_min, r_max].

    Below the range the output lands in (r_min, r_min + 1); above it, in
    (r_max / (1 + e^-r_max), r_max).
    """
    if not math.isfinite(r_hat):
        raise ValueError("prediction must be finite")
    if r_hat < value_range.r_min:
        return value_range.r_min + _sigmoid(r_hat)
    if r_hat > value_range.r_max:
        return value_range.r_max * _sigmoid(r_hat)
    return r_hat


def _sigmoid(x: float) -> float:
    # stable form of 1 / (1 + e^-x)
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def clamp_many(r_hat: np.ndarray, value_range: ValueRange) -> np.ndarray:
    return np.array([clamp_activation(float(r), value_range) for r in r_hat], dtype=np.float64)


def train_epoch(model: FactorModel, observed, pseudo, hyper: SgdHyper, rng: np.random.Generator) -> float:
    """One shuffled pass over observed and pseudo entries; returns the
    objective after the pass."""
    n_obs = len(observed.values)
    if n_obs == 0:
        raise ValueError("no observed entries to train on")
    if pseudo is not None and len(pseudo.values):
        rows = np.concatenate((observed.rows, pseudo.rows))
        cols = np.concatenate((observed.cols, pseudo.cols))
        vals = np.concatenate((observed.values, pseudo.values))
        weights = np.concatenate((np.ones(n_obs), np.full(len(pseudo.values), hyper.alpha)))
    else:
        rows, cols, vals = observed.rows, observed.cols, observed.values
        weights = np.ones(n_obs)
    order = rng.permutation(len(vals))
    _run(model, rows, cols, vals, weights, order, hyper)
    return objective(model, observed, pseudo, hyper)


def save_model(model: FactorModel, path) -> None:
    """Text format: ``# rows cols f r_min r_max`` then X rows, then Y rows.

    Values use 17 significant digits so a reload is bit-exact.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {model.n_rows} {model.n_cols} {model.f} {model.range.r_min!r} {model.range.r_max!r}\n")
        np.savetxt(fh, model.X, fmt="%.17g", delimiter=" ")
        np.savetxt(fh, model.Y, fmt="%.17g", delimiter=" ")


def load_model(path) -> FactorModel:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().lstrip("#").split()
        if len(header) != 5:
            raise ValueError(f"{path}: bad model header")
        n_rows, n_cols, f = (int(x) for x in header[:3])
        rng = ValueRange(float(header[3]), float(header[4]))
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if data.shape != (n_rows + n_cols, f):
        raise ValueError(f"{path}: expected {(n_rows + n_cols, f)} values, found {data.shape}")
    return FactorModel(np.ascontiguousarray(data[:n_rows]), np.ascontiguousarray(data[n_rows:]), rng)
