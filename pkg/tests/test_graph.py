import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glfa.data import SparseMatrix
from glfa.graph import (Confidence, GraphError, bfs_distances, build_graph, classify_confidence,
                        high_confidence_set, hoi_order)

from conftest import random_entries
from oracles import brute_hoi, nx_order

U1, U2, U3, U4 = range(4)
I1, I2, I3, I4, I5 = range(5)


def graph_of(entries, n_users, n_items):
    return build_graph(SparseMatrix.from_entries(n_users, n_items, entries))


def test_adjacency_mirrors_matrix():
    g = graph_of([(0, 1, 4.0), (2, 1, 4.0)], 4, 3)
    assert g.i_adj(1) == [(0, 4.0), (2, 4.0)]
    assert g.u_adj(0) == [(1, 4.0)]
    assert g.u_adj(1) == []


def test_edge_sets_agree_and_degrees_sum():
    rng = np.random.default_rng(0)
    entries = random_entries(rng, 10, 10, 0.5)[:50]
    g = graph_of(entries, 10, 10)
    from_users = {(u, i, w) for u in range(10) for i, w in g.u_adj(u)}
    from_items = {(u, i, w) for i in range(10) for u, w in g.i_adj(i)}
    assert from_users == from_items == set(entries)
    assert g.user_degrees().sum() + g.item_degrees().sum() == 2 * len(entries)


def test_empty_matrix_rejected():
    with pytest.raises(GraphError):
        build_graph(SparseMatrix.from_entries(2, 2, []))


class TestWorkedExample:
    def test_orders(self, worked):
        g = build_graph(worked)
        assert hoi_order(g, U1, I3) == 2
        assert hoi_order(g, U1, I4) == 2
        assert hoi_order(g, U1, I5) == 3

    def test_labels(self, worked):
        g = build_graph(worked)
        assert classify_confidence(g, U1, I4, 2) is Confidence.HIGH
        assert classify_confidence(g, U1, I3, 2) is Confidence.LOW
        assert classify_confidence(g, U1, I5, 3) is Confidence.LOW

    def test_stated_facts(self, worked):
        assert worked.contains(U1, I2) and worked.contains(U3, I2)
        g = build_graph(worked)
        assert dict(g.i_adj(I2)) == {U1: 4.0, U3: 4.0}
        assert sorted(w for _, w in g.i_adj(I1)) == [1.0, 5.0]
        assert not any(worked.contains(U1, i) for i in (I3, I4, I5))

    @pytest.mark.parametrize("max_order", [3, None])
    def test_high_confidence_set(self, worked, max_order):
        hoi = high_confidence_set(build_graph(worked), max_order)
        assert hoi.pairs() == {(U1, I4), (U2, I5), (U3, I1), (U4, I1)}
        assert [(r.u, r.i) for r in hoi] == [(U1, I4), (U2, I5), (U3, I1), (U4, I1)]


def test_observed_pair_is_not_indirect(worked):
    g = build_graph(worked)
    with pytest.raises(GraphError, match="not an indirect interaction"):
        hoi_order(g, U1, I1)
    with pytest.raises(GraphError, match="not an indirect interaction"):
        classify_confidence(g, U1, I1, 2)


def test_wrong_order_rejected(worked):
    with pytest.raises(GraphError, match="order 2, not 3"):
        classify_confidence(build_graph(worked), U1, I4, 3)


def test_unreachable():
    g = graph_of([(0, 0, 1.0), (1, 1, 2.0)], 2, 2)
    assert hoi_order(g, 0, 1) is None
    with pytest.raises(GraphError):
        classify_confidence(g, 0, 1, 2)


def test_single_edge_has_no_hoi():
    hoi = high_confidence_set(graph_of([(0, 0, 3.0)], 3, 3), 2)
    assert len(hoi) == 0 and hoi.n_low == 0


def test_max_order_cap():
    # a chain u0-i0-u1-i1-u2-i2 with equal weights: (u0, i2) has order 3
    chain = [(0, 0, 2.0), (1, 0, 2.0), (1, 1, 2.0), (2, 1, 2.0), (2, 2, 2.0)]
    g = graph_of(chain, 3, 3)
    assert (0, 2) not in high_confidence_set(g, 2).pairs()
    assert (0, 2) in high_confidence_set(g, 3).pairs()
    with pytest.raises(GraphError):
        high_confidence_set(g, 1)


def _random_instance(seed):
    rng = np.random.default_rng(seed)
    n_users, n_items = rng.integers(2, 9, size=2)
    density = rng.uniform(0.15, 0.5)
    entries = random_entries(rng, n_users, n_items, density)
    if not entries:
        entries = [(0, 0, 3.0)]
    return entries, int(n_users), int(n_items)


@pytest.mark.parametrize("seed", range(40))
def test_order_matches_networkx(seed):
    entries, n_users, n_items = _random_instance(seed)
    g = graph_of(entries, n_users, n_items)
    observed = {(u, i) for u, i, _ in entries}
    for u in range(n_users):
        for i in range(n_items):
            if (u, i) not in observed:
                assert hoi_order(g, u, i) == nx_order(entries, n_users, n_items, u, i)


@pytest.mark.parametrize("seed", range(40))
def test_labels_match_path_enumeration(seed):
    entries, n_users, n_items = _random_instance(seed)
    g = graph_of(entries, n_users, n_items)
    observed = {(u, i) for u, i, _ in entries}
    hoi = high_confidence_set(g, 3)
    expected_high = set()
    expected_low = 0
    for u in range(n_users):
        for i in range(n_items):
            if (u, i) in observed:
                continue
            ref = brute_hoi(entries, u, i, 3)
            if ref is None:
                p = hoi_order(g, u, i)
                assert p is None or p > 3
                continue
            order, label = ref
            assert hoi_order(g, u, i) == order
            assert classify_confidence(g, u, i, order).value == label
            if label == "High":
                expected_high.add((u, i))
            else:
                expected_low += 1
    assert hoi.pairs() == expected_high
    assert hoi.n_low == expected_low


@pytest.mark.parametrize("seed", range(10))
def test_unbounded_accounting(seed):
    entries, n_users, n_items = _random_instance(seed)
    g = graph_of(entries, n_users, n_items)
    hoi = high_confidence_set(g, None)
    unreachable = sum(
        1 for u in range(n_users) for i in range(n_items)
        if not g.has_edge(u, i) and hoi_order(g, u, i) is None
    )
    assert hoi.n_unreached == unreachable
    assert len(hoi) + hoi.n_low + unreachable + len(entries) == n_users * n_items


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_distance_symmetry(seed):
    entries, n_users, n_items = _random_instance(seed)
    g = graph_of(entries, n_users, n_items)
    for u in range(n_users):
        _, di = bfs_distances(g, u, from_user=True)
        for i in range(n_items):
            du, _ = bfs_distances(g, i, from_user=False)
            assert di[i] == du[u]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_labels_ignore_adjacency_order(seed):
    entries, n_users, n_items = _random_instance(seed)
    shuffled = list(entries)
    np.random.default_rng(seed).shuffle(shuffled)
    a = high_confidence_set(graph_of(entries, n_users, n_items), 3)
    b = high_confidence_set(graph_of(shuffled, n_users, n_items), 3)
    assert a.pairs() == b.pairs()
    assert a.low_by_order == b.low_by_order


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_order_two_bridging_rule(seed):
    """Order-2 pairs are High exactly when every bridging co-rater agrees
    with u on the shared item."""
    entries, n_users, n_items = _random_instance(seed)
    r = {(u, i): v for u, i, v in entries}
    hoi = high_confidence_set(graph_of(entries, n_users, n_items), 2)
    expected = set()
    for u in range(n_users):
        for i in range(n_items):
            if (u, i) in r:
                continue
            bridges = [(u2, i2) for (u2, i2) in r if (u, i2) in r and (u2, i) in r and u2 != u]
            if bridges and all(r[(u, i2)] == r[(u2, i2)] for u2, i2 in bridges):
                expected.add((u, i))
    assert hoi.pairs() == expected


def test_thread_count_does_not_change_result():
    rng = np.random.default_rng(3)
    entries = random_entries(rng, 30, 25, 0.15)
    g = graph_of(entries, 30, 25)
    one = high_confidence_set(g, 3, threads=1)
    four = high_confidence_set(g, 3, threads=4)
    assert np.array_equal(one.u, four.u) and np.array_equal(one.i, four.i)
    assert np.array_equal(one.order, four.order)
    assert one.low_by_order == four.low_by_order


def test_non_integer_weights_use_tolerance():
    entries = [(0, 0, 0.1 + 0.2), (1, 0, 0.3), (1, 1, 1.0)]
    g = graph_of(entries, 2, 2)
    assert classify_confidence(g, 0, 1, 2) is Confidence.HIGH
    entries[1] = (1, 0, 0.3 + 1e-6)
    assert classify_confidence(graph_of(entries, 2, 2), 0, 1, 2) is Confidence.LOW
