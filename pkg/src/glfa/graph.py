"""Bipartite interaction graph and high-order interaction (HOI) mining.

An unobserved pair (u, i) has order p when the shortest alternating path
u -> i -> u' -> ... -> i has 2p - 1 edges. It is low-confidence when some
shortest path passes an intermediate item whose two path edges carry
different ratings, high-confidence otherwise.

Confidence is decided without enumerating paths. Shortest paths from u form
a layered DAG, and every triple a -> i' -> b of consecutive DAG vertices
lies on some shortest path, so one sweep over the BFS layers propagates a
"some shortest path so far is disqualified" flag. Each source costs
O(|E|) regardless of order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, NamedTuple

import numba
import numpy as np

from .data import SparseMatrix

WEIGHT_TOL = 1e-9


class GraphError(ValueError):
    pass


class Confidence(str, Enum):
    HIGH = "High"
    LOW = "Low"


class HoiRecord(NamedTuple):
    u: int
    i: int
    order: int
    confidence: Confidence


@dataclass(frozen=True, eq=False)
class InteractionGraph:
    """Adjacency of the training matrix, indexed from both sides.

    ``u_indptr/u_items/u_weights`` is the user-side CSR (items sorted per
    user), ``i_indptr/i_users/i_weights`` the item-side one.
    """

    n_users: int
    n_items: int
    u_indptr: np.ndarray
    u_items: np.ndarray
    u_weights: np.ndarray
    i_indptr: np.ndarray
    i_users: np.ndarray
    i_weights: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.u_items)

    def u_adj(self, u: int) -> list[tuple[int, float]]:
        lo, hi = self.u_indptr[u], self.u_indptr[u + 1]
        return list(zip(self.u_items[lo:hi].tolist(), self.u_weights[lo:hi].tolist()))

    def i_adj(self, i: int) -> list[tuple[int, float]]:
        lo, hi = self.i_indptr[i], self.i_indptr[i + 1]
        return list(zip(self.i_users[lo:hi].tolist(), self.i_weights[lo:hi].tolist()))

    def has_edge(self, u: int, i: int) -> bool:
        lo, hi = self.u_indptr[u], self.u_indptr[u + 1]
        k = np.searchsorted(self.u_items[lo:hi], i)
        return bool(k < hi - lo and self.u_items[lo + k] == i)

    def user_degrees(self) -> np.ndarray:
        return np.diff(self.u_indptr)

    def item_degrees(self) -> np.ndarray:
        return np.diff(self.i_indptr)


def build_graph(train: SparseMatrix) -> InteractionGraph:
    if train.nnz == 0:
        raise GraphError("cannot build an interaction graph from an empty matrix")
    csr, csc = train.csr(), train.csc()
    return InteractionGraph(
        train.n_rows, train.n_cols,
        csr.indptr.astype(np.int64), csr.indices.astype(np.int64), csr.data.astype(np.float64),
        csc.indptr.astype(np.int64), csc.indices.astype(np.int64), csc.data.astype(np.float64),
    )


@numba.njit(cache=True, nogil=True)
def _bfs(from_user, src, max_depth, u_indptr, u_items, i_indptr, i_users, du, di, queue_kind, queue_id):
    """Alternating BFS; fills du/di (-1 = unreached) and the visit queue.

    Returns the queue length. Vertices are enqueued in non-decreasing
    distance order, which the confidence sweep relies on.
    """
    du[:] = -1
    di[:] = -1
    head = 0
    tail = 1
    if from_user:
        du[src] = 0
        queue_kind[0] = 0
    else:
        di[src] = 0
        queue_kind[0] = 1
    queue_id[0] = src
    while head < tail:
        kind = queue_kind[head]
        v = queue_id[head]
        head += 1
        if kind == 0:
            d = du[v]
            if max_depth >= 0 and d >= max_depth:
                continue
            for k in range(u_indptr[v], u_indptr[v + 1]):
                w = u_items[k]
                if di[w] < 0:
                    di[w] = d + 1
                    queue_kind[tail] = 1
                    queue_id[tail] = w
                    tail += 1
        else:
            d = di[v]
            if max_depth >= 0 and d >= max_depth:
                continue
            for k in range(i_indptr[v], i_indptr[v + 1]):
                w = i_users[k]
                if du[w] < 0:
                    du[w] = d + 1
                    queue_kind[tail] = 0
                    queue_id[tail] = w
                    tail += 1
    return tail


@numba.njit(cache=True, nogil=True)
def _sweep_source(u, max_depth, tol, u_indptr, u_items, u_weights, i_indptr, i_users, i_weights,
                  du, di, queue_kind, queue_id, bad_u, bad_i, wmin, wmax):
    """Compute du/di from user u and the disqualified flag of every item."""
    n = _bfs(True, u, max_depth, u_indptr, u_items, i_indptr, i_users, du, di, queue_kind, queue_id)
    for q in range(n):
        v = queue_id[q]
        if queue_kind[q] == 0:
            bad_u[v] = False
            if v == u:
                continue
            d = du[v]
            for k in range(u_indptr[v], u_indptr[v + 1]):
                it = u_items[k]
                if di[it] != d - 1:
                    continue
                w = u_weights[k]
                if bad_i[it] or abs(wmax[it] - w) > tol or abs(wmin[it] - w) > tol:
                    bad_u[v] = True
                    break
        else:
            d = di[v]
            lo = np.inf
            hi = -np.inf
            bad = False
            for k in range(i_indptr[v], i_indptr[v + 1]):
                a = i_users[k]
                if du[a] != d - 1:
                    continue
                w = i_weights[k]
                if w < lo:
                    lo = w
                if w > hi:
                    hi = w
                if bad_u[a]:
                    bad = True
            wmin[v] = lo
            wmax[v] = hi
            bad_i[v] = bad
    return n


@numba.njit(cache=True, nogil=True)
def _mine_range(start, stop, max_order, tol, n_users, n_items, u_indptr, u_items, u_weights,
                i_indptr, i_users, i_weights):
    max_depth = -1 if max_order < 0 else 2 * max_order - 1
    du = np.empty(n_users, np.int64)
    di = np.empty(n_items, np.int64)
    queue_kind = np.empty(n_users + n_items, np.int8)
    queue_id = np.empty(n_users + n_items, np.int64)
    bad_u = np.zeros(n_users, np.bool_)
    bad_i = np.zeros(n_items, np.bool_)
    wmin = np.empty(n_items)
    wmax = np.empty(n_items)
    cap = 1024
    out_u = np.empty(cap, np.int64)
    out_i = np.empty(cap, np.int64)
    out_p = np.empty(cap, np.int64)
    n_out = 0
    # column p holds counts for order p; column 0 unused
    size = n_items + 1 if max_order < 0 else max_order + 1
    high = np.zeros(size, np.int64)
    low = np.zeros(size, np.int64)
    for u in range(start, stop):
        _sweep_source(u, max_depth, tol, u_indptr, u_items, u_weights, i_indptr, i_users, i_weights,
                      du, di, queue_kind, queue_id, bad_u, bad_i, wmin, wmax)
        for it in range(n_items):
            d = di[it]
            if d < 3:
                continue
            p = (d + 1) // 2
            if bad_i[it]:
                low[p] += 1
                continue
            high[p] += 1
            if n_out == cap:
                cap *= 2
                out_u = np.concatenate((out_u, np.empty(cap - n_out, np.int64)))
                out_i = np.concatenate((out_i, np.empty(cap - n_out, np.int64)))
                out_p = np.concatenate((out_p, np.empty(cap - n_out, np.int64)))
            out_u[n_out] = u
            out_i[n_out] = it
            out_p[n_out] = p
            n_out += 1
    return out_u[:n_out], out_i[:n_out], out_p[:n_out], high, low


def _scratch(g: InteractionGraph):
    n = g.n_users + g.n_items
    return (np.empty(g.n_users, np.int64), np.empty(g.n_items, np.int64),
            np.empty(n, np.int8), np.empty(n, np.int64))


def bfs_distances(g: InteractionGraph, src: int, from_user: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Hop distances to every user and item (-1 when unreachable)."""
    du, di, qk, qi = _scratch(g)
    _bfs(from_user, src, -1, g.u_indptr, g.u_items, g.i_indptr, g.i_users, du, di, qk, qi)
    return du, di


def _check_ids(g: InteractionGraph, u: int, i: int) -> None:
    if not (0 <= u < g.n_users and 0 <= i < g.n_items):
        raise GraphError(f"pair ({u}, {i}) out of range for a {g.n_users}x{g.n_items} graph")


def hoi_order(g: InteractionGraph, u: int, i: int) -> int | None:
    """Order p of the indirect interaction (u, i), or None if unreachable."""
    _check_ids(g, u, i)
    if g.has_edge(u, i):
        raise GraphError(f"({u}, {i}) is observed: not an indirect interaction")
    _, di = bfs_distances(g, u)
    if di[i] < 0:
        return None
    return int((di[i] + 1) // 2)


def classify_confidence(g: InteractionGraph, u: int, i: int, p: int, tol: float = WEIGHT_TOL) -> Confidence:
    _check_ids(g, u, i)
    if g.has_edge(u, i):
        raise GraphError(f"({u}, {i}) is observed: not an indirect interaction")
    du, di, qk, qi = _scratch(g)
    bad_u = np.zeros(g.n_users, np.bool_)
    bad_i = np.zeros(g.n_items, np.bool_)
    wmin = np.empty(g.n_items)
    wmax = np.empty(g.n_items)
    _sweep_source(u, -1, tol, g.u_indptr, g.u_items, g.u_weights, g.i_indptr, g.i_users, g.i_weights,
                  du, di, qk, qi, bad_u, bad_i, wmin, wmax)
    if di[i] < 0 or (di[i] + 1) // 2 != p:
        actual = None if di[i] < 0 else int((di[i] + 1) // 2)
        raise GraphError(f"({u}, {i}) has order {actual}, not {p}")
    return Confidence.LOW if bad_i[i] else Confidence.HIGH


@dataclass(frozen=True, eq=False)
class HoiSet:
    """High-confidence HOIs sorted by (u, i), plus mining statistics.

    ``high_by_order[p]`` / ``low_by_order[p]`` count the pairs of order p.
    """

    u: np.ndarray
    i: np.ndarray
    order: np.ndarray
    high_by_order: dict[int, int]
    low_by_order: dict[int, int]
    n_users: int
    n_items: int
    n_observed: int
    max_order: int | None

    def __len__(self) -> int:
        return len(self.u)

    def __iter__(self) -> Iterator[HoiRecord]:
        for u, i, p in zip(self.u.tolist(), self.i.tolist(), self.order.tolist()):
            yield HoiRecord(u, i, p, Confidence.HIGH)

    def pairs(self) -> set[tuple[int, int]]:
        return set(zip(self.u.tolist(), self.i.tolist()))

    @property
    def n_low(self) -> int:
        return sum(self.low_by_order.values())

    @property
    def n_unreached(self) -> int:
        """Unobserved pairs with no path of order <= max_order."""
        return self.n_users * self.n_items - self.n_observed - len(self) - self.n_low


def _thread_count() -> int:
    env = os.environ.get("GLFA_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def high_confidence_set(g: InteractionGraph, max_order: int | None = 2, tol: float = WEIGHT_TOL,
                        threads: int | None = None) -> HoiSet:
    """Mine every high-confidence HOI of order 2..max_order (None = unbounded).

    Sources are processed in contiguous blocks, optionally on several
    threads; blocks are concatenated in source order so the output does not
    depend on the thread count.
    """
    if g.n_edges == 0:
        raise GraphError("empty graph")
    if max_order is not None and max_order < 2:
        raise GraphError(f"max_order must be at least 2, got {max_order}")
    mo = -1 if max_order is None else int(max_order)
    threads = threads or _thread_count()
    n_blocks = max(1, min(threads * 4, g.n_users))
    bounds = np.linspace(0, g.n_users, n_blocks + 1).astype(np.int64)

    def run(b):
        return _mine_range(int(bounds[b]), int(bounds[b + 1]), mo, tol, g.n_users, g.n_items,
                           g.u_indptr, g.u_items, g.u_weights, g.i_indptr, g.i_users, g.i_weights)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, range(n_blocks)))
    else:
        parts = [run(b) for b in range(n_blocks)]
    u = np.concatenate([p[0] for p in parts])
    i = np.concatenate([p[1] for p in parts])
    order = np.concatenate([p[2] for p in parts])
    high = np.sum([p[3] for p in parts], axis=0)
    low = np.sum([p[4] for p in parts], axis=0)
    return HoiSet(
        u, i, order,
        {p: int(c) for p, c in enumerate(high) if c},
        {p: int(c) for p, c in enumerate(low) if c},
        g.n_users, g.n_items, g.n_edges, max_order,
    )
