"""Mobile-sink tour planning.

``find_tsp_route`` is nearest-neighbor construction followed by 2-opt.  Two
length-constrained planners sit on top of it: ``build_ms_tour`` keeps the
longest distance-sorted prefix of CHs whose tour fits the time budget, and
``orienteering_tour`` packs in as many CHs as possible by cheapest
insertion.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import Position

IMPROVE_EPS = 1e-9


class TourBudgetWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Tour:
    depot: Position
    visit_order: tuple[int, ...]
    length: float
    travel_time: float
    positions: Mapping[int, Position] = field(default_factory=dict, repr=False, compare=False)
    degenerate: bool = False

    def __post_init__(self):
        if len(set(self.visit_order)) != len(self.visit_order):
            raise ValueError("tour visits a CH twice")

    def legs(self) -> list[float]:
        pts = [self.depot] + [self.positions[c] for c in self.visit_order] + [self.depot]
        return [math.dist(a, b) for a, b in zip(pts, pts[1:])]

    def arrival_times(self, speed: float, dwell: float = 0.0) -> list[float]:
        """Time from tour start at which the sink reaches each CH."""
        out, t = [], 0.0
        for leg in self.legs()[:-1]:
            t += leg / speed
            out.append(t)
            t += dwell
        return out

    def write_csv(self, path) -> None:
        legs = self.legs()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seq", "ch_id", "x", "y", "leg_length_m"])
            w.writerow([0, "depot", repr(self.depot.x), repr(self.depot.y), 0.0])
            for k, c in enumerate(self.visit_order, start=1):
                p = self.positions[c]
                w.writerow([k, c, repr(p.x), repr(p.y), repr(legs[k - 1])])
            w.writerow([len(self.visit_order) + 1, "depot", repr(self.depot.x), repr(self.depot.y), repr(legs[-1])])
            fh.write(f"# total_length_m={self.length!r},travel_time_s={self.travel_time!r}\n")


def _as_points(chs) -> dict[int, Position]:
    if isinstance(chs, Mapping):
        return {int(k): Position(float(v[0]), float(v[1])) for k, v in chs.items()}
    return {int(k): Position(float(v[0]), float(v[1])) for k, v in chs}


def closed_length(depot: Sequence[float], pts: Sequence[Sequence[float]]) -> float:
    route = [depot, *pts, depot]
    return float(sum(math.dist(a, b) for a, b in zip(route, route[1:])))


def _dist_matrix(xy: np.ndarray) -> np.ndarray:
    diff = xy[:, None, :] - xy[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def _nearest_neighbor(D: np.ndarray) -> list[int]:
    m = len(D)
    route = [0]
    left = np.ones(m, dtype=bool)
    left[0] = False
    cur = 0
    for _ in range(m - 1):
        nxt = int(np.argmin(np.where(left, D[cur], np.inf)))
        route.append(nxt)
        left[nxt] = False
        cur = nxt
    return route


def _route_length(route: Sequence[int], D: np.ndarray) -> float:
    r = np.asarray(route)
    return float(D[r, np.roll(r, -1)].sum())


def two_opt(route: list[int], D: np.ndarray) -> list[int]:
    """Best-improvement 2-opt on a closed route whose first entry stays put."""
    route = list(route)
    m = len(route)
    if m < 4:
        return route
    improved = True
    while improved:
        improved = False
        r = np.asarray(route)
        nxt = np.roll(r, -1)
        for i in range(m - 2):
            a, b = r[i], r[i + 1]
            js = np.arange(i + 2, m if i > 0 else m - 1)
            if js.size == 0:
                continue
            c, d = r[js], nxt[js]
            delta = D[a, c] + D[b, d] - D[a, b] - D[c, d]
            k = int(np.argmin(delta))
            if delta[k] < -IMPROVE_EPS:
                j = int(js[k])
                route[i + 1 : j + 1] = route[i + 1 : j + 1][::-1]
                improved = True
                break
    return route


def is_two_opt_optimal(depot: Sequence[float], pts: Sequence[Sequence[float]], eps: float = 1e-7) -> bool:
    """No single 2-opt move shortens the closed route depot -> pts -> depot."""
    xy = np.array([depot, *pts], dtype=float)
    D = _dist_matrix(xy)
    m = len(xy)
    for i in range(m - 2):
        for j in range(i + 2, m if i > 0 else m - 1):
            a, b, c, d = i, i + 1, j, (j + 1) % m
            if D[a, c] + D[b, d] - D[a, b] - D[c, d] < -eps:
                return False
    return True


def _make_tour(depot: Position, ids: Sequence[int], pts: Mapping[int, Position], speed: float, dwell: float) -> Tour:
    length = closed_length(depot, [pts[c] for c in ids]) if ids else 0.0
    return Tour(
        depot=depot,
        visit_order=tuple(ids),
        length=length,
        travel_time=length / speed + dwell * len(ids),
        positions={c: pts[c] for c in ids},
    )


def empty_tour(depot: Position, degenerate: bool = True) -> Tour:
    return Tour(depot=Position(*depot), visit_order=(), length=0.0, travel_time=0.0, degenerate=degenerate)


def sort_chs_by_distance(chs, ms_pos: Sequence[float]) -> list[int]:
    pts = _as_points(chs)
    if not pts:
        raise ValueError("no CHs to sort")
    return sorted(pts, key=lambda c: (math.dist(pts[c], ms_pos), c))


def find_tsp_route(depot: Sequence[float], chs, speed: float = 1.0, dwell: float = 0.0) -> Tour:
    pts = _as_points(chs)
    if not pts:
        raise ValueError("find_tsp_route needs at least one CH")
    depot = Position(float(depot[0]), float(depot[1]))
    ids = sorted(pts)
    xy = np.array([depot, *(pts[c] for c in ids)], dtype=float)
    D = _dist_matrix(xy)
    route = two_opt(_nearest_neighbor(D), D)
    return _make_tour(depot, [ids[k - 1] for k in route[1:]], pts, speed, dwell)


def compute_T_L(all_chs, depot: Sequence[float], speed: float) -> float:
    return find_tsp_route(depot, all_chs, speed).length / speed


def build_ms_tour(
    C: Sequence[int],
    positions,
    depot: Sequence[float],
    L: float,
    speed: float,
    dwell: float = 0.0,
) -> Tour:
    """Tour over the longest prefix of the distance-sorted CH list ``C``
    whose TSP route fits in ``L`` seconds, located by bisection."""
    if not L > 0:
        raise ValueError("L must be positive")
    pts = _as_points(positions)
    depot = Position(float(depot[0]), float(depot[1]))
    if not C:
        return empty_tour(depot)
    cache: dict[int, Tour] = {}

    def prefix(c: int) -> Tour:
        if c not in cache:
            cache[c] = find_tsp_route(depot, {k: pts[k] for k in C[:c]}, speed, dwell)
        return cache[c]

    if prefix(1).travel_time > L:
        warnings.warn(f"no CH reachable within L={L:.3f} s", TourBudgetWarning, stacklevel=2)
        return empty_tour(depot)
    if prefix(len(C)).travel_time <= L:
        return prefix(len(C))
    lo, hi = 1, len(C)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if prefix(mid).travel_time <= L:
            lo = mid
        else:
            hi = mid
    return prefix(lo)


def orienteering_tour(chs, depot: Sequence[float], L: float, speed: float, dwell: float = 0.0) -> Tour:
    """Visit as many CHs as possible within ``L`` seconds (unit scores).

    Cheapest insertion until nothing fits, then 2-opt and try again.
    """
    if not L > 0:
        raise ValueError("L must be positive")
    pts = _as_points(chs)
    depot = Position(float(depot[0]), float(depot[1]))
    if not pts:
        return empty_tour(depot)
    full = find_tsp_route(depot, pts, speed, dwell)
    if full.travel_time <= L:
        return full

    ids = sorted(pts)
    xy = np.array([depot, *(pts[c] for c in ids)], dtype=float)
    D = _dist_matrix(xy)
    route = [0]
    left = list(range(1, len(xy)))
    length = 0.0
    while True:
        while left:
            r = np.asarray(route)
            a, b = r, np.roll(r, -1)
            cand = np.asarray(left)
            cost = D[a][:, cand].T + D[cand][:, b] - D[a, b][None, :]
            best_pos = np.argmin(cost, axis=1)
            best_cost = cost[np.arange(len(cand)), best_pos]
            k = int(np.argmin(best_cost))  # candidates are in id order
            if (length + best_cost[k]) / speed + dwell * len(route) > L:
                break
            route.insert(int(best_pos[k]) + 1, int(cand[k]))
            left.remove(int(cand[k]))
            length = _route_length(route, D)
        new = two_opt(route, D)
        if not left or _route_length(new, D) >= length - IMPROVE_EPS:
            route = new
            break
        # a shorter route may make room for another CH
        route = new
        length = _route_length(route, D)
    if len(route) == 1:
        warnings.warn(f"no CH reachable within L={L:.3f} s", TourBudgetWarning, stacklevel=2)
        return empty_tour(depot)
    return _make_tour(depot, [ids[k - 1] for k in route[1:]], pts, speed, dwell)
