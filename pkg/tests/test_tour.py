import math
import warnings

import numpy as np
import pytest

from mswsn.model import Position
from mswsn.tour import (
    TourBudgetWarning,
    build_ms_tour,
    compute_T_L,
    find_tsp_route,
    is_two_opt_optimal,
    orienteering_tour,
    sort_chs_by_distance,
)
from oracles import brute_force_tsp, closed_tour_length, linear_scan_prefix, max_orienteering_count


def random_chs(rng, m, side=500.0):
    return {int(i): tuple(rng.uniform(0, side, 2)) for i in range(m)}


# -- sort_chs_by_distance ---------------------------------------------------


def test_sort_by_distance_orders_nearest_first():
    chs = {1: (10.0, 0.0), 2: (5.0, 0.0), 3: (20.0, 0.0)}
    assert sort_chs_by_distance(chs, (0.0, 0.0)) == [2, 1, 3]


def test_sort_equidistant_falls_back_to_id():
    chs = {7: (0.0, 10.0), 3: (10.0, 0.0), 5: (-10.0, 0.0), 4: (0.0, -10.0)}
    assert sort_chs_by_distance(chs, (0.0, 0.0)) == [3, 4, 5, 7]


def test_sort_matches_independent_sort():
    rng = np.random.default_rng(3)
    chs = random_chs(rng, 30)
    ms = (250.0, 250.0)
    dist = {c: math.sqrt((p[0] - ms[0]) ** 2 + (p[1] - ms[1]) ** 2) for c, p in chs.items()}
    expected = [c for _, c in sorted((dist[c], c) for c in chs)]
    assert sort_chs_by_distance(chs, ms) == expected


def test_sort_rejects_empty():
    with pytest.raises(ValueError):
        sort_chs_by_distance({}, (0, 0))


# -- find_tsp_route ---------------------------------------------------------


def test_single_ch_is_out_and_back():
    t = find_tsp_route((0.0, 0.0), {4: (30.0, 40.0)})
    assert t.length == pytest.approx(100.0)
    assert t.visit_order == (4,)


def test_unit_square_matches_permutation_optimum():
    corners = {0: (0.0, 0.0), 1: (1.0, 0.0), 2: (1.0, 1.0), 3: (0.0, 1.0)}
    depot = (0.5, 0.5)
    t = find_tsp_route(depot, corners)
    best = brute_force_tsp(depot, list(corners.values()))
    assert best == pytest.approx(3.0 + math.sqrt(2.0))
    assert t.length == pytest.approx(best, rel=1e-12)


def test_tour_length_and_time_agree_with_geometry():
    rng = np.random.default_rng(11)
    chs = random_chs(rng, 8)
    t = find_tsp_route((250.0, 250.0), chs, speed=2.0, dwell=3.0)
    assert sorted(t.visit_order) == sorted(chs)
    pts = [chs[c] for c in t.visit_order]
    assert t.length == pytest.approx(closed_tour_length((250.0, 250.0), pts))
    assert t.travel_time == pytest.approx(t.length / 2.0 + 3.0 * 8)
    assert sum(t.legs()) == pytest.approx(t.length)


def test_tsp_heuristic_near_optimal_on_small_instances():
    rng = np.random.default_rng(2024)
    within = 0
    for _ in range(20):
        m = int(rng.integers(2, 8))
        chs = random_chs(rng, m)
        depot = tuple(rng.uniform(0, 500, 2))
        t = find_tsp_route(depot, chs)
        best = brute_force_tsp(depot, list(chs.values()))
        assert t.length >= best - 1e-9
        within += t.length <= 1.2 * best
        assert is_two_opt_optimal(depot, [chs[c] for c in t.visit_order])
    assert within >= 19


def test_two_opt_detector_spots_a_crossing():
    # depot (0,0) -> (1,1) -> (1,0) -> (0,1) crosses itself
    assert not is_two_opt_optimal((0.0, 0.0), [(2.0, 2.0), (2.0, 0.0), (0.0, 2.0)] + [(1.0, 3.0)])
    assert is_two_opt_optimal((0.0, 0.0), [(2.0, 0.0), (2.0, 2.0), (0.0, 2.0)])


def test_tsp_needs_a_ch():
    with pytest.raises(ValueError):
        find_tsp_route((0, 0), {})


# -- compute_T_L ------------------------------------------------------------


def test_T_L_single_ch():
    assert compute_T_L({0: (100.0, 0.0)}, (0.0, 0.0), 1.0) == pytest.approx(200.0)


def test_T_L_scales_inversely_with_speed():
    rng = np.random.default_rng(5)
    chs = random_chs(rng, 10)
    a = compute_T_L(chs, (250, 250), 1.0)
    b = compute_T_L(chs, (250, 250), 2.0)
    assert b == pytest.approx(a / 2.0)
    assert compute_T_L(chs, (250, 250), 1.0) == a


# -- build_ms_tour ----------------------------------------------------------


def _prefix_times(C, chs, depot, speed=1.0):
    return [find_tsp_route(depot, {k: chs[k] for k in C[:c]}, speed).travel_time for c in range(1, len(C) + 1)]


def test_full_set_fits_returns_everything():
    rng = np.random.default_rng(8)
    chs = random_chs(rng, 6, side=50.0)
    C = sort_chs_by_distance(chs, (25, 25))
    t = build_ms_tour(C, chs, (25, 25), L=1e6, speed=1.0)
    assert sorted(t.visit_order) == sorted(chs)
    assert not t.degenerate


def test_budget_below_nearest_round_trip_is_degenerate():
    chs = {0: (10.0, 0.0), 1: (20.0, 0.0)}
    with pytest.warns(TourBudgetWarning):
        t = build_ms_tour([0, 1], chs, (0.0, 0.0), L=19.0, speed=1.0)
    assert t.degenerate and t.visit_order == ()


def test_prefix_matches_linear_scan():
    rng = np.random.default_rng(17)
    checked = 0
    for _ in range(25):
        m = int(rng.integers(1, 13))
        chs = random_chs(rng, m)
        depot = (250.0, 250.0)
        C = sort_chs_by_distance(chs, depot)
        times = _prefix_times(C, chs, depot)
        L = float(rng.uniform(min(times) * 0.9, max(times) * 1.1))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TourBudgetWarning)
            t = build_ms_tour(C, chs, depot, L, 1.0)
        assert t.travel_time <= L
        if all(a <= b for a, b in zip(times, times[1:])):
            assert len(t.visit_order) == linear_scan_prefix(times, L)
            checked += 1
    assert checked > 10


def test_prefix_rejects_non_positive_budget():
    with pytest.raises(ValueError):
        build_ms_tour([0], {0: (1, 1)}, (0, 0), 0.0, 1.0)


# -- orienteering_tour ------------------------------------------------------


def test_orienteering_slack_budget_matches_prefix_set():
    rng = np.random.default_rng(4)
    chs = random_chs(rng, 9)
    depot = (250.0, 250.0)
    L = compute_T_L(chs, depot, 1.0) + 1.0
    a = orienteering_tour(chs, depot, L, 1.0)
    b = build_ms_tour(sort_chs_by_distance(chs, depot), chs, depot, L, 1.0)
    assert set(a.visit_order) == set(b.visit_order) == set(chs)


def test_orienteering_single_reachable_ch():
    chs = {0: (10.0, 0.0), 1: (200.0, 0.0), 2: (0.0, -300.0)}
    t = orienteering_tour(chs, (0.0, 0.0), L=25.0, speed=1.0)
    assert t.visit_order == (0,)


def test_orienteering_nothing_reachable():
    with pytest.warns(TourBudgetWarning):
        t = orienteering_tour({0: (100.0, 0.0)}, (0.0, 0.0), L=10.0, speed=1.0)
    assert t.degenerate


def test_orienteering_close_to_exhaustive_optimum():
    rng = np.random.default_rng(99)
    for _ in range(12):
        m = int(rng.integers(2, 9))
        chs = random_chs(rng, m)
        depot = (250.0, 250.0)
        L = float(rng.uniform(0.2, 0.9)) * compute_T_L(chs, depot, 1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TourBudgetWarning)
            t = orienteering_tour(chs, depot, L, 1.0)
        assert t.travel_time <= L + 1e-9
        assert len(t.visit_order) >= max_orienteering_count(depot, list(chs.values()), L) - 1


def test_tour_csv_roundtrip(tmp_path):
    t = find_tsp_route(Position(0.0, 0.0), {1: (3.0, 4.0), 2: (6.0, 0.0)})
    p = tmp_path / "tour.csv"
    t.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "seq,ch_id,x,y,leg_length_m"
    assert lines[-1].startswith("# total_length_m=")
    legs = [float(line.split(",")[4]) for line in lines[1:-1]]
    assert sum(legs) == pytest.approx(t.length)
