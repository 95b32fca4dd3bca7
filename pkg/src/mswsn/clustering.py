"""Residual-energy cluster formation and its sink-oriented variant.

Each node's parent is the nearest neighbor holding more residual energy;
nodes with no such neighbor become cluster heads (CHs).  The sink-oriented
variant only admits candidate parents lying within an angle ``theta`` of the
direction from the node to the mobile sink.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .energy import EnergyLedger, EnergyModelParams, Kind, Purpose, rx_energy, tx_energy
from .model import MobileSinkState, Position, SensorNode, distance_matrix, positions_array

ANGLE_EPS = 1e-9  # degrees; absorbs rounding on analytically exact angles


class DegenerateGeometryError(ValueError):
    pass


@dataclass(frozen=True)
class DirectionParams:
    theta: float
    ms_pos: Position

    def __post_init__(self):
        if not 0 < self.theta <= 180:
            raise ValueError(f"theta must be in (0, 180], got {self.theta}")


@dataclass
class ClusterForest:
    parent: dict[int, int | None]
    heads: frozenset[int]
    cluster_of: dict[int, int]
    members: dict[int, set[int]]
    pos: np.ndarray = field(repr=False)
    energy_at_formation: np.ndarray = field(repr=False)
    R: float = 45.0
    direction: DirectionParams | None = None

    @property
    def nodes(self) -> list[int]:
        return sorted(self.parent)

    def children(self) -> dict[int, list[int]]:
        ch: dict[int, list[int]] = {u: [] for u in self.parent}
        for u, p in sorted(self.parent.items()):
            if p is not None:
                ch[p].append(u)
        return ch

    def depth(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for u in self.parent:
            chain = []
            v = u
            while v not in out and self.parent[v] is not None:
                chain.append(v)
                v = self.parent[v]
            base = out.get(v, 0)
            out.setdefault(v, base)
            for k, w in enumerate(reversed(chain), start=1):
                out[w] = base + k
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_id", "parent_id", "cluster_id", "is_head"])
            for u in self.nodes:
                p = self.parent[u]
                w.writerow([u, "" if p is None else p, self.cluster_of[u], int(u in self.heads)])


def in_direction(sn: Sequence[float], v: Sequence[float], dir: DirectionParams) -> bool:
    """True iff the angle between sn->v and sn->sink is at most ``dir.theta``."""
    ax, ay = v[0] - sn[0], v[1] - sn[1]
    bx, by = dir.ms_pos[0] - sn[0], dir.ms_pos[1] - sn[1]
    if (ax == 0 and ay == 0) or (bx == 0 and by == 0):
        raise DegenerateGeometryError("zero-length direction vector")
    angle = math.degrees(math.atan2(abs(ax * by - ay * bx), ax * bx + ay * by))
    return angle <= dir.theta + ANGLE_EPS


def direction_mask(xy: np.ndarray, dir: DirectionParams) -> np.ndarray:
    """``mask[u, v]``: v lies in u's cone toward the sink.

    A node sitting on the sink accepts every direction, and a colocated
    neighbor (zero-length vector) is accepted too.
    """
    if dir.theta >= 180:
        return np.ones((len(xy), len(xy)), dtype=bool)
    a = xy[None, :, :] - xy[:, None, :]
    b = np.asarray(dir.ms_pos, dtype=float)[None, :] - xy
    cross = np.abs(a[..., 0] * b[:, None, 1] - a[..., 1] * b[:, None, 0])
    dot = a[..., 0] * b[:, None, 0] + a[..., 1] * b[:, None, 1]
    angle = np.degrees(np.arctan2(cross, dot))
    ok = angle <= dir.theta + ANGLE_EPS
    ok |= (a[..., 0] == 0) & (a[..., 1] == 0)
    ok |= ((b[:, 0] == 0) & (b[:, 1] == 0))[:, None]
    return ok


def higher_energy_mask(energy: np.ndarray) -> np.ndarray:
    """``mask[u, v]``: v ranks above u (more energy; ties go to the lower id)."""
    ids = np.arange(len(energy))
    return (energy[None, :] > energy[:, None]) | (
        (energy[None, :] == energy[:, None]) & (ids[None, :] < ids[:, None])
    )


def _form(nodes: Sequence[SensorNode], R: float, dir: DirectionParams | None) -> ClusterForest:
    if not nodes:
        raise ValueError("cannot cluster an empty network")
    ids = [nd.id for nd in nodes]
    if ids != list(range(len(nodes))):
        raise ValueError("nodes must be indexed 0..n-1 by id")
    xy = positions_array(nodes)
    energy = np.array([nd.residual_energy for nd in nodes], dtype=float)
    alive = energy > 0
    if not alive.any():
        raise ValueError("no alive node to cluster")

    d = distance_matrix(xy)
    cand = (d <= R) & alive[None, :] & alive[:, None] & higher_energy_mask(energy)
    np.fill_diagonal(cand, False)
    if dir is not None:
        cand &= direction_mask(xy, dir)

    masked = np.where(cand, d, np.inf)
    best = np.argmin(masked, axis=1)  # first index wins distance ties -> lower id
    has_parent = cand.any(axis=1)

    parent: dict[int, int | None] = {}
    for u in np.flatnonzero(alive):
        parent[int(u)] = int(best[u]) if has_parent[u] else None
    heads = frozenset(u for u, p in parent.items() if p is None)

    cluster_of: dict[int, int] = {h: h for h in heads}

    def root(u: int) -> int:
        chain = []
        while u not in cluster_of:
            chain.append(u)
            u = parent[u]
        for w in chain:
            cluster_of[w] = cluster_of[u]
        return cluster_of[u]

    for u in parent:
        root(u)
    members: dict[int, set[int]] = {h: set() for h in heads}
    for u, c in cluster_of.items():
        members[c].add(u)
    return ClusterForest(
        parent=parent,
        heads=heads,
        cluster_of=dict(sorted(cluster_of.items())),
        members=members,
        pos=xy,
        energy_at_formation=energy,
        R=R,
        direction=dir,
    )


def initial_cluster_formation(nodes: Sequence[SensorNode], R: float) -> ClusterForest:
    return _form(nodes, R, None)


def ms_oriented_cluster_formation(nodes: Sequence[SensorNode], R: float, dir: DirectionParams) -> ClusterForest:
    return _form(nodes, R, dir)


def charge_formation(
    forest: ClusterForest,
    ledger: EnergyLedger,
    params: EnergyModelParams,
    control_bits: int,
    time: float,
) -> None:
    """Debit the formation traffic: one broadcast per node, one join per
    member, one announcement per CH; every broadcast is heard by all alive
    neighbors."""
    xy = forest.pos
    alive_ids = np.array(forest.nodes, dtype=np.int64)
    d = distance_matrix(xy[alive_ids])
    hear = d <= forest.R
    np.fill_diagonal(hear, False)
    degree = hear.sum(axis=1)
    bcast = tx_energy(control_bits, forest.R, params)
    rx1 = rx_energy(control_bits, params)

    def charge(ids, kind, amounts, purpose, counts=None):
        # a node that ran dry earlier in the exchange stays silent
        ids = np.asarray(ids, dtype=np.int64)
        ok = ledger.residual[ids] > 0
        amounts = np.broadcast_to(amounts, ids.shape)[ok]
        if counts is not None:
            counts = np.asarray(counts)[ok]
        ledger.debit_many(ids[ok], kind, amounts, time, purpose, counts)

    charge(alive_ids, Kind.TX, bcast, Purpose.CLUSTER_BCAST)
    heard = degree > 0
    charge(alive_ids[heard], Kind.RX, rx1 * degree[heard], Purpose.CLUSTER_BCAST, degree[heard])

    members = np.array([u for u in forest.nodes if forest.parent[u] is not None], dtype=np.int64)
    if members.size:
        par = np.array([forest.parent[u] for u in members], dtype=np.int64)
        dist = np.hypot(*(xy[members] - xy[par]).T)
        charge(members, Kind.TX, tx_energy(control_bits, dist, params), Purpose.JOIN)
        kids, kcount = np.unique(par, return_counts=True)
        charge(kids, Kind.RX, rx1 * kcount, Purpose.JOIN, kcount)

    heads = np.array(sorted(forest.heads), dtype=np.int64)
    charge(heads, Kind.TX, bcast, Purpose.CH_BCAST)
    index = {int(u): i for i, u in enumerate(alive_ids)}
    heard = hear[[index[int(h)] for h in heads]].sum(axis=0)
    got = heard > 0
    charge(alive_ids[got], Kind.RX, rx1 * heard[got], Purpose.CH_BCAST, heard[got])
    ledger.flush()


def flood_ch_locations(
    forest: ClusterForest,
    ms: MobileSinkState,
    ledger: EnergyLedger | None = None,
    params: EnergyModelParams | None = None,
    control_bits: int = 128,
    time: float = 0.0,
) -> set[tuple[int, Position]]:
    """Tell the sink where every CH is; one rebroadcast per alive node."""
    known = {(h, Position(float(forest.pos[h, 0]), float(forest.pos[h, 1]))) for h in forest.heads}
    if ledger is not None:
        if params is None:
            raise ValueError("params required to charge the flood")
        alive_ids = np.array([u for u in forest.nodes if ledger.residual[u] > 0], dtype=np.int64)
        if alive_ids.size == 0:
            return known
        d = distance_matrix(forest.pos[alive_ids])
        hear = d <= forest.R
        np.fill_diagonal(hear, False)
        degree = hear.sum(axis=1)
        ledger.debit_many(alive_ids, Kind.TX, tx_energy(control_bits, forest.R, params), time, Purpose.FLOOD)
        got = degree > 0
        ledger.debit_many(
            alive_ids[got], Kind.RX, rx_energy(control_bits, params) * degree[got], time, Purpose.FLOOD, degree[got]
        )
        ledger.flush()
    return known
