import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mswsn.clustering import (
    DegenerateGeometryError,
    DirectionParams,
    charge_formation,
    direction_mask,
    flood_ch_locations,
    in_direction,
    initial_cluster_formation,
    ms_oriented_cluster_formation,
)
from mswsn.energy import EnergyLedger, EnergyModelParams, Kind, Purpose
from mswsn.model import MobileSinkState, NetworkConfig, Position, SensorNode, deploy
from oracles import angle_deg, check_forest, ranks_above

R = 45.0


def nodes_with_energy(n, side, seed, spread=True):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, side, (n, 2))
    e = rng.uniform(100, 500, n) if spread else np.full(n, 500.0)
    return [SensorNode(i, Position(*xy[i]), float(e[i])) for i in range(n)]


def brute_force_parent(u: SensorNode, nodes, dir=None):
    best = None
    for v in nodes:
        if v.id == u.id or v.residual_energy <= 0 or math.dist(u.pos, v.pos) > R or not ranks_above(u, v):
            continue
        if dir is not None and u.pos != v.pos and u.pos != dir.ms_pos and angle_deg(u.pos, v.pos, dir.ms_pos) > dir.theta + 1e-9:
            continue
        key = (math.dist(u.pos, v.pos), v.id)
        if best is None or key < best[0]:
            best = (key, v.id)
    return None if best is None else best[1]


# -- in_direction -----------------------------------------------------------


def test_in_direction_examples():
    ms = Position(10, 0)
    assert in_direction((0, 0), (5, 0), DirectionParams(45, ms))
    assert not in_direction((0, 0), (-5, 0), DirectionParams(90, ms))
    assert not in_direction((0, 0), (5, 5), DirectionParams(40, ms))
    assert in_direction((0, 0), (5, 5), DirectionParams(50, ms))


def test_in_direction_exact_boundary():
    assert in_direction((0, 0), (5, 5), DirectionParams(45, Position(10, 0)))
    assert in_direction((0, 0), (0, 7), DirectionParams(90, Position(10, 0)))


def test_in_direction_degenerate():
    with pytest.raises(DegenerateGeometryError):
        in_direction((0, 0), (0, 0), DirectionParams(45, Position(10, 0)))
    with pytest.raises(DegenerateGeometryError):
        in_direction((0, 0), (1, 0), DirectionParams(45, Position(0, 0)))
    with pytest.raises(ValueError):
        DirectionParams(0.0, Position(0, 0))


def test_ninety_degrees_is_closed_half_plane():
    rng = np.random.default_rng(12)
    ms = Position(250.0, 250.0)
    for _ in range(2000):
        sn = rng.uniform(0, 500, 2)
        v = rng.uniform(0, 500, 2)
        dot = (v[0] - sn[0]) * (ms.x - sn[0]) + (v[1] - sn[1]) * (ms.y - sn[1])
        assert in_direction(sn, v, DirectionParams(90.0, ms)) == (dot >= 0)


def test_direction_mask_agrees_with_scalar():
    rng = np.random.default_rng(1)
    xy = rng.uniform(0, 100, (25, 2))
    d = DirectionParams(60.0, Position(50.0, 50.0))
    mask = direction_mask(xy, d)
    for u in range(25):
        for v in range(25):
            if u != v:
                assert mask[u, v] == in_direction(xy[u], xy[v], d)


# -- formation --------------------------------------------------------------


def test_two_nodes_higher_energy_heads():
    nodes = [SensorNode(0, Position(0, 0), 10.0), SensorNode(1, Position(10, 0), 20.0)]
    f = initial_cluster_formation(nodes, R)
    assert f.heads == {1} and f.parent[0] == 1


def test_local_energy_maximum_is_head():
    nodes = nodes_with_energy(80, 200, 3)
    f = initial_cluster_formation(nodes, R)
    for u in nodes:
        nb = [v for v in nodes if v.id != u.id and math.dist(u.pos, v.pos) <= R]
        if all(ranks_above(v, u) for v in nb):
            assert u.id in f.heads


def test_parent_choice_matches_brute_force():
    nodes = nodes_with_energy(50, 150, 9)
    f = initial_cluster_formation(nodes, R)
    for u in nodes:
        assert f.parent[u.id] == brute_force_parent(u, nodes)
    check_forest(f, nodes, R)


def test_equal_energies_break_ties_by_id():
    nodes = [SensorNode(0, Position(0, 0), 5.0), SensorNode(1, Position(10, 0), 5.0), SensorNode(2, Position(20, 0), 5.0)]
    f = initial_cluster_formation(nodes, R)
    assert f.heads == {0} and f.parent == {0: None, 1: 0, 2: 1}


def test_dead_nodes_stay_out():
    nodes = nodes_with_energy(30, 100, 4)
    nodes[5] = SensorNode(5, nodes[5].pos, 0.0)
    f = initial_cluster_formation(nodes, R)
    assert 5 not in f.parent and 5 not in f.parent.values()


def test_opposite_neighbor_filtered_out():
    ms = Position(100, 0)
    nodes = [SensorNode(0, Position(0, 0), 10.0), SensorNode(1, Position(-20, 0), 50.0)]
    f = ms_oriented_cluster_formation(nodes, R, DirectionParams(70, ms))
    assert f.heads == {0, 1}
    assert initial_cluster_formation(nodes, R).heads == {1}


def test_theta_180_equals_initial():
    nodes = nodes_with_energy(120, 250, 6)
    a = initial_cluster_formation(nodes, R)
    b = ms_oriented_cluster_formation(nodes, R, DirectionParams(180.0, Position(125, 125)))
    assert a.parent == b.parent and a.heads == b.heads


def test_oriented_edges_point_at_sink():
    nodes = nodes_with_energy(50, 150, 10)
    d = DirectionParams(70.0, Position(75, 75))
    f = ms_oriented_cluster_formation(nodes, R, d)
    check_forest(f, nodes, R, d)
    for u in nodes:
        assert f.parent[u.id] == brute_force_parent(u, nodes, d)


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(2, 120),
    seed=st.integers(0, 2**31),
    theta=st.sampled_from([30.0, 45.0, 70.0, 90.0, 135.0]),
    equal=st.booleans(),
)
def test_forest_properties_hold(n, seed, theta, equal):
    nodes = nodes_with_energy(n, 200, seed, spread=not equal)
    d = DirectionParams(theta, Position(100, 100))
    check_forest(initial_cluster_formation(nodes, R), nodes, R)
    check_forest(ms_oriented_cluster_formation(nodes, R, d), nodes, R, d)


def test_formation_requires_indexed_nodes():
    with pytest.raises(ValueError):
        initial_cluster_formation([SensorNode(3, Position(0, 0), 1.0)], R)
    with pytest.raises(ValueError):
        initial_cluster_formation([], R)


def test_forest_csv(tmp_path):
    nodes = nodes_with_energy(20, 80, 2)
    f = initial_cluster_formation(nodes, R)
    p = tmp_path / "forest.csv"
    f.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "node_id,parent_id,cluster_id,is_head"
    assert len(lines) == 21
    heads = {int(line.split(",")[0]) for line in lines[1:] if line.endswith(",1")}
    assert heads == set(f.heads)


# -- flooding and charges ---------------------------------------------------


def test_flood_single_and_many_heads():
    one = [SensorNode(0, Position(0, 0), 1.0)]
    f = initial_cluster_formation(one, R)
    assert flood_ch_locations(f, MobileSinkState.at_center(500)) == {(0, Position(0.0, 0.0))}
    nodes = nodes_with_energy(100, 300, 8)
    f = initial_cluster_formation(nodes, R)
    got = flood_ch_locations(f, MobileSinkState.at_center(300))
    assert len(got) == len(f.heads) and {h for h, _ in got} == set(f.heads)


def test_flood_charges_one_broadcast_per_node():
    nodes = deploy(NetworkConfig(n=60, field_side=150, rng_seed=1))
    f = initial_cluster_formation(nodes, R)
    led = EnergyLedger(np.full(60, 500.0))
    flood_ch_locations(f, MobileSinkState.at_center(150), led, EnergyModelParams())
    rows = led.rows()
    tx = rows[(rows["kind"] == Kind.TX) & (rows["purpose"] == Purpose.FLOOD)]
    assert tx["count"].sum() >= 60


def test_formation_charge_counts():
    nodes = nodes_with_energy(40, 120, 5)
    f = initial_cluster_formation(nodes, R)
    led = EnergyLedger(np.array([nd.residual_energy for nd in nodes]))
    charge_formation(f, led, EnergyModelParams(), 128, 0.0)
    rows = led.rows()

    def count(kind, purpose):
        sel = rows[(rows["kind"] == kind) & (rows["purpose"] == purpose)]
        return int(sel["count"].sum())

    pairs = sum(1 for u in nodes for v in nodes if u.id != v.id and math.dist(u.pos, v.pos) <= R)
    assert count(Kind.TX, Purpose.CLUSTER_BCAST) == 40
    assert count(Kind.RX, Purpose.CLUSTER_BCAST) == pairs
    assert count(Kind.TX, Purpose.JOIN) == 40 - len(f.heads)
    assert count(Kind.RX, Purpose.JOIN) == 40 - len(f.heads)
    assert count(Kind.TX, Purpose.CH_BCAST) == len(f.heads)
    assert led.conservation_gap() < 1e-12


def test_node_dying_mid_formation_goes_silent():
    nodes = nodes_with_energy(30, 80, 12)
    nodes[4] = SensorNode(4, nodes[4].pos, 1e-6)  # enough for nothing past its first broadcast
    f = initial_cluster_formation(nodes, R)
    led = EnergyLedger(np.array([nd.residual_energy for nd in nodes]))
    charge_formation(f, led, EnergyModelParams(), 128, 0.0)
    flood_ch_locations(f, MobileSinkState.at_center(80), led, EnergyModelParams(), 128, 0.0)
    assert not led.is_alive(4)
    rows = led.rows()
    mine = rows[rows["node"] == 4]
    assert len(mine) == 1 and mine[0]["purpose"] == Purpose.CLUSTER_BCAST
    assert led.conservation_gap() < 1e-12
