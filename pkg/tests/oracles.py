"""Brute-force reference implementations used only by the tests.

None of these share code with the package paths they check.
"""

import itertools
import math

import networkx as nx


def adjacency(entries):
    """user -> {item: weight} and item -> {user: weight} dicts."""
    by_user, by_item = {}, {}
    for u, i, v in entries:
        by_user.setdefault(u, {})[i] = v
        by_item.setdefault(i, {})[u] = v
    return by_user, by_item


def simple_paths(entries, u, i, max_len):
    """All simple alternating paths u -> i with at most max_len edges.

    Paths are lists of ('u', id) / ('i', id) vertices.
    """
    by_user, by_item = adjacency(entries)
    found = []

    def walk(path, seen):
        kind, v = path[-1]
        if len(path) - 1 > max_len:
            return
        if (kind, v) == ("i", i):
            found.append(list(path))
            return
        nbrs = by_user.get(v, {}) if kind == "u" else by_item.get(v, {})
        nk = "i" if kind == "u" else "u"
        for w in sorted(nbrs):
            if (nk, w) not in seen:
                seen.add((nk, w))
                path.append((nk, w))
                walk(path, seen)
                path.pop()
                seen.discard((nk, w))

    walk([("u", u)], {("u", u)})
    return found


def path_disqualified(entries, path):
    by_user, _ = adjacency(entries)
    for k in range(1, len(path) - 1):
        kind, v = path[k]
        if kind != "i":
            continue
        a, b = path[k - 1][1], path[k + 1][1]
        if by_user[a][v] != by_user[b][v]:
            return True
    return False


def brute_hoi(entries, u, i, max_order):
    """(order, 'High'/'Low') from path enumeration, or None if no path of
    order <= max_order exists."""
    paths = simple_paths(entries, u, i, 2 * max_order - 1)
    if not paths:
        return None
    shortest = min(len(p) - 1 for p in paths)
    order = (shortest + 1) // 2
    bad = any(path_disqualified(entries, p) for p in paths if len(p) - 1 == shortest)
    return order, "Low" if bad else "High"


def nx_order(entries, n_users, n_items, u, i):
    g = nx.Graph()
    g.add_nodes_from(("u", k) for k in range(n_users))
    g.add_nodes_from(("i", k) for k in range(n_items))
    g.add_edges_from((("u", a), ("i", b)) for a, b, _ in entries)
    try:
        d = nx.shortest_path_length(g, ("u", u), ("i", i))
    except nx.NetworkXNoPath:
        return None
    return (d + 1) // 2


def naive_objective(X, Y, observed, pseudo, lam, alpha):
    total = 0.0
    for u, i, r in observed:
        pred = sum(X[u][t] * Y[i][t] for t in range(len(X[u])))
        total += 0.5 * (r - pred) ** 2
    for u, i, r in pseudo:
        pred = sum(X[u][t] * Y[i][t] for t in range(len(X[u])))
        total += 0.5 * alpha * (r - pred) ** 2
    reg = sum(x * x for row in X for x in row) + sum(y * y for row in Y for y in row)
    return total + 0.5 * lam * reg


def instant_loss(x, y, value, weight, lam):
    pred = sum(a * b for a, b in zip(x, y))
    return 0.5 * weight * (value - pred) ** 2 + 0.5 * lam * (sum(a * a for a in x) + sum(b * b for b in y))


def central_difference(x, y, value, weight, lam, h=1e-6):
    gx, gy = [], []
    for t in range(len(x)):
        xp, xm = list(x), list(x)
        xp[t] += h
        xm[t] -= h
        gx.append((instant_loss(xp, y, value, weight, lam) - instant_loss(xm, y, value, weight, lam)) / (2 * h))
    for t in range(len(y)):
        yp, ym = list(y), list(y)
        yp[t] += h
        ym[t] -= h
        gy.append((instant_loss(x, yp, value, weight, lam) - instant_loss(x, ym, value, weight, lam)) / (2 * h))
    return gx, gy


def average_ranks(values):
    order = sorted(range(len(values)), key=lambda k: values[k])
    ranks = [0.0] * len(values)
    k = 0
    while k < len(order):
        j = k
        while j + 1 < len(order) and values[order[j + 1]] == values[order[k]]:
            j += 1
        for m in range(k, j + 1):
            ranks[order[m]] = (k + j) / 2 + 1
        k = j + 1
    return ranks


def wilcoxon_enumeration(a, b):
    """(R+, R-, P(T+ >= R+), P(T+ <= R+)) by enumerating all 2^n signs."""
    d = [x - y for x, y in zip(a, b) if x != y]
    ranks = average_ranks([abs(v) for v in d])
    r_plus = sum(r for r, v in zip(ranks, d) if v > 0)
    r_minus = sum(r for r, v in zip(ranks, d) if v < 0)
    ge = le = 0
    total = 0
    for signs in itertools.product((0, 1), repeat=len(d)):
        t = sum(r for r, s in zip(ranks, signs) if s)
        total += 1
        ge += t >= r_plus - 1e-9
        le += t <= r_plus + 1e-9
    return r_plus, r_minus, ge / total, le / total


def clamp_reference(r, r_min, r_max):
    if r < r_min:
        return r_min + 1 / (1 + math.exp(-r))
    if r > r_max:
        return r_max / (1 + math.exp(-r))
    return r
