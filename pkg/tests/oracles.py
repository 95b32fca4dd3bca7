"""Slow, obviously-correct reference implementations used as test oracles.

Nothing here imports the package's algorithms; only plain Python and
``itertools`` so a bug in the library cannot leak into its own check.
"""

from __future__ import annotations

import itertools
import math


def closed_tour_length(depot, pts) -> float:
    route = [depot, *pts, depot]
    return sum(math.dist(a, b) for a, b in zip(route, route[1:]))


def brute_force_tsp(depot, pts) -> float:
    """Optimal closed-tour length by trying every visiting order."""
    if not pts:
        return 0.0
    best = math.inf
    for perm in itertools.permutations(pts):
        best = min(best, closed_tour_length(depot, list(perm)))
    return best


def max_orienteering_count(depot, pts, budget_length: float) -> int:
    """Largest number of points on a closed tour no longer than the budget.

    Held-Karp over subsets: ``best[mask][j]`` is the shortest open path from
    the depot through ``mask`` ending at ``j``.
    """
    m = len(pts)
    if m == 0:
        return 0
    d0 = [math.dist(depot, p) for p in pts]
    d = [[math.dist(a, b) for b in pts] for a in pts]
    INF = math.inf
    best = [[INF] * m for _ in range(1 << m)]
    for j in range(m):
        best[1 << j][j] = d0[j]
    top = 0
    for mask in range(1, 1 << m):
        row = best[mask]
        closes = min(row[j] + d0[j] for j in range(m))
        if closes <= budget_length + 1e-9:
            top = max(top, bin(mask).count("1"))
        for j in range(m):
            if row[j] == INF:
                continue
            for k in range(m):
                if mask & (1 << k):
                    continue
                nm = mask | (1 << k)
                v = row[j] + d[j][k]
                if v < best[nm][k]:
                    best[nm][k] = v
    return top


def linear_scan_prefix(times: list[float], L: float) -> int:
    """Largest c with times[c-1] <= L, scanning every prefix."""
    out = 0
    for c, t in enumerate(times, start=1):
        if t <= L:
            out = c
    return out


def two_pass_variance(xs) -> float:
    xs = list(xs)
    mean = sum(xs) / len(xs)
    return sum((x - mean) ** 2 for x in xs) / len(xs)


def angle_deg(sn, v, ms) -> float:
    ax, ay = v[0] - sn[0], v[1] - sn[1]
    bx, by = ms[0] - sn[0], ms[1] - sn[1]
    c = (ax * bx + ay * by) / (math.hypot(ax, ay) * math.hypot(bx, by))
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


def ranks_above(a, b) -> bool:
    """True when node ``b`` outranks ``a``: more energy, ties to the lower id."""
    return b.residual_energy > a.residual_energy or (b.residual_energy == a.residual_energy and b.id < a.id)


def check_forest(forest, nodes, R, dir=None) -> None:
    """Assert coverage, edge ordering, range, cone and acyclicity of a forest."""
    by_id = {nd.id: nd for nd in nodes}
    alive = {nd.id for nd in nodes if nd.residual_energy > 0}
    assert set(forest.parent) == alive  # coverage
    for u, p in forest.parent.items():
        if p is None:
            assert u in forest.heads
            continue
        assert ranks_above(by_id[u], by_id[p])
        assert math.dist(by_id[u].pos, by_id[p].pos) <= R
        if dir is not None:
            assert angle_deg(by_id[u].pos, by_id[p].pos, dir.ms_pos) <= dir.theta + 1e-9
    # acyclic: every chain ends at a CH within n steps
    for u in forest.parent:
        v, steps = u, 0
        while forest.parent[v] is not None:
            v = forest.parent[v]
            steps += 1
            assert steps <= len(nodes)
        assert forest.cluster_of[u] == v
    assert forest.heads == {u for u, p in forest.parent.items() if p is None}
