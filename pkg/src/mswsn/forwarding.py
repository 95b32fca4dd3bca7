"""Intra-cluster upstream routing and round-robin inter-cluster forwarding.

Three routers share the same decisions:

* :func:`deliver_packet` / :func:`forward_to_ms` move one packet hop by hop,
  debiting every transmission as it happens.  The engine uses this path for
  rounds in which some node may die.
* :func:`plan_round` walks packets cluster by cluster without debiting and
  returns per-node counts; energy is charged afterwards in bulk.
* :func:`propagate_counts` does the same with packet counts instead of
  packets, for epochs whose cluster graph is acyclic, and can cover many
  rounds at once.

Without deaths all three make the same round-robin assignments and charge
the same energy.

A packet about to be handed into a cluster it already crossed is dropped as
a loop: its path up that cluster's tree would revisit the cluster's CH.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterForest, DirectionParams, direction_mask
from .energy import EnergyLedger, EnergyModelParams, Kind, Purpose, rx_energy, tx_energy
from .model import Packet, Position, ProtocolError


class RoutingError(ProtocolError):
    """Broken parent chain; the epoch needs reclustering."""


class DeadEndError(ProtocolError):
    """A CH off the tour has no in-direction neighbor in another cluster."""


STRAND_DEAD_END = "dead_end"
STRAND_LOOP = "loop"
STRAND_DEAD_RELAY = "dead_relay"


@dataclass
class ForwarderState:
    rings: dict[int, list[int]]
    counters: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        for ch in self.rings:
            self.counters.setdefault(ch, 0)

    def snapshot(self) -> dict[int, int]:
        return dict(self.counters)

    def restore(self, counters: dict[int, int]) -> None:
        self.counters = dict(counters)


def build_forwarder_state(forest: ClusterForest, anchor: Position, theta: float) -> ForwarderState:
    """Ring of every CH: alive neighbors in other clusters inside its cone
    toward the sink anchor, ascending id."""
    xy = forest.pos
    heads = sorted(forest.heads)
    alive_ids = np.array(forest.nodes, dtype=np.int64)
    rings: dict[int, list[int]] = {}
    if not heads:
        return ForwarderState(rings)
    hxy = xy[heads]
    d = np.hypot(hxy[:, None, 0] - xy[None, alive_ids, 0], hxy[:, None, 1] - xy[None, alive_ids, 1])
    dirmask = direction_mask(xy, DirectionParams(theta, anchor)) if theta < 180 else None
    cluster = np.array([forest.cluster_of[int(u)] for u in alive_ids])
    for i, h in enumerate(heads):
        ok = (d[i] <= forest.R) & (cluster != h) & (alive_ids != h)
        if dirmask is not None:
            ok &= dirmask[h, alive_ids]
        rings[h] = alive_ids[ok].tolist()
    return ForwarderState(rings)


def upstream_route(node: int, forest: ClusterForest, alive=None) -> list[int]:
    """Parent chain from ``node`` to its CH, both ends included."""
    if node not in forest.parent:
        raise KeyError(f"node {node} is not in the forest")
    path = [node]
    u = node
    while forest.parent[u] is not None:
        u = forest.parent[u]
        if alive is not None and not alive[u]:
            raise RoutingError(f"ancestor {u} of node {node} is dead")
        path.append(u)
    return path


def next_hop_rr(ch: int, state: ForwarderState) -> int:
    ring = state.rings.get(ch, [])
    if not ring:
        raise DeadEndError(f"CH {ch} has no in-direction neighbor")
    i = state.counters[ch]
    state.counters[ch] = i + 1
    return ring[i % len(ring)]


@dataclass
class RoutingContext:
    forest: ClusterForest
    fwd: ForwarderState
    tour_chs: frozenset[int]
    ledger: EnergyLedger
    params: EnergyModelParams
    packet_bits: int
    time: float = 0.0


@dataclass
class DeliveryRecord:
    packet: Packet
    delivered: bool
    at_ch: int | None
    stranded_reason: str | None = None

    @property
    def hops(self) -> int:
        return len(self.packet.hop_trace) - 1


def _hop(ctx: RoutingContext, u: int, v: int, purpose: Purpose) -> None:
    d = float(np.hypot(*(ctx.forest.pos[u] - ctx.forest.pos[v])))
    ctx.ledger.debit(u, Kind.TX, tx_energy(ctx.packet_bits, d, ctx.params), ctx.time, purpose)
    ctx.ledger.debit(v, Kind.RX, rx_energy(ctx.packet_bits, ctx.params), ctx.time, purpose)


def _climb(packet: Packet, ctx: RoutingContext) -> str | None:
    """Carry ``packet`` from its last hop up to that cluster's CH."""
    u = packet.hop_trace[-1]
    while ctx.forest.parent[u] is not None:
        p = ctx.forest.parent[u]
        if not (ctx.ledger.is_alive(u) and ctx.ledger.is_alive(p)):
            return STRAND_DEAD_RELAY
        if p in packet.hop_trace:
            raise ProtocolError(f"parent chain revisits node {p}")
        _hop(ctx, u, p, Purpose.RELAY)
        packet.hop_trace.append(p)
        u = p
    return None


def forward_to_ms(packet: Packet, origin_ch: int, ctx: RoutingContext) -> DeliveryRecord:
    """Push a packet sitting at ``origin_ch`` across clusters until it is
    buffered at a CH on the sink tour, or stranded."""
    if origin_ch not in ctx.forest.heads:
        raise ValueError(f"{origin_ch} is not a CH")
    if not packet.hop_trace:
        packet.hop_trace.append(origin_ch)
    visited = {ctx.forest.cluster_of[u] for u in packet.hop_trace}
    ch = origin_ch
    while ch not in ctx.tour_chs:
        try:
            nxt = next_hop_rr(ch, ctx.fwd)
        except DeadEndError:
            return DeliveryRecord(packet, False, ch, STRAND_DEAD_END)
        if ctx.forest.cluster_of[nxt] in visited or nxt in packet.hop_trace:
            return DeliveryRecord(packet, False, ch, STRAND_LOOP)
        if not (ctx.ledger.is_alive(ch) and ctx.ledger.is_alive(nxt)):
            return DeliveryRecord(packet, False, ch, STRAND_DEAD_RELAY)
        _hop(ctx, ch, nxt, Purpose.FORWARD)
        packet.hop_trace.append(nxt)
        reason = _climb(packet, ctx)
        if reason is not None:
            return DeliveryRecord(packet, False, None, reason)
        ch = packet.hop_trace[-1]
        visited.add(ch)
    return DeliveryRecord(packet, True, ch)


def deliver_packet(packet: Packet, ctx: RoutingContext) -> DeliveryRecord:
    """Route a freshly sensed packet: up its own tree, then across clusters."""
    packet.hop_trace[:] = [packet.origin]
    reason = _climb(packet, ctx)
    if reason is not None:
        return DeliveryRecord(packet, False, None, reason)
    return forward_to_ms(packet, packet.hop_trace[-1], ctx)


@dataclass
class EpochTopology:
    """Per-epoch arrays the bulk routers need; fixed until reclustering."""

    forest: ClusterForest
    tour_chs: frozenset[int]
    order: np.ndarray  # forest nodes, deepest first
    parent: np.ndarray  # -1 for CHs and nodes outside the forest
    cluster: np.ndarray
    depth: np.ndarray
    report_tx: np.ndarray  # control reports each node relays per round
    report_rx: np.ndarray
    relay_cost: np.ndarray  # tx energy of one data packet to the parent
    report_cost: np.ndarray  # same for one control report
    ring_cost: dict[int, list[float]]  # tx energy of one data packet to each ring slot
    cluster_order: list[int] | None  # CHs in topological order; None if the cluster graph has a cycle

    @classmethod
    def build(
        cls,
        forest: ClusterForest,
        tour_chs,
        fwd: ForwarderState | None = None,
        packet_bits: int = 1000,
        params: EnergyModelParams | None = None,
        control_bits: int = 128,
    ) -> "EpochTopology":
        n = len(forest.pos)
        tour_chs = frozenset(tour_chs)
        parent = np.full(n, -1, dtype=np.int64)
        cluster = np.full(n, -1, dtype=np.int64)
        depth = np.zeros(n, dtype=np.int64)
        dep = forest.depth()
        for u, p in forest.parent.items():
            if p is not None:
                parent[u] = p
            cluster[u] = forest.cluster_of[u]
            depth[u] = dep[u]
        nodes = np.array(forest.nodes, dtype=np.int64)
        order = nodes[np.argsort(-depth[nodes], kind="stable")]
        sub = np.zeros(n, dtype=np.int64)
        for u in order:
            if parent[u] >= 0:
                sub[u] += 1
                sub[parent[u]] += sub[u]
        report_tx = np.where(parent >= 0, sub, 0)
        report_rx = sub - (parent >= 0)

        params = params or EnergyModelParams()
        has_parent = parent >= 0
        up = np.where(has_parent, parent, np.arange(n))
        dist = np.hypot(*(forest.pos - forest.pos[up]).T)
        relay_cost = np.where(has_parent, tx_energy(packet_bits, dist, params), 0.0)
        report_cost = np.where(has_parent, tx_energy(control_bits, dist, params), 0.0)

        ring_cost: dict[int, list[float]] = {}
        cluster_order = None
        if fwd is not None:
            for ch, ring in fwd.rings.items():
                if ring:
                    d = np.hypot(*(forest.pos[ring] - forest.pos[ch]).T)
                    ring_cost[ch] = np.atleast_1d(tx_energy(packet_bits, d, params)).tolist()
            cluster_order = _topological_order(forest, fwd, tour_chs)
        return cls(
            forest, tour_chs, order, parent, cluster, depth, report_tx, report_rx,
            relay_cost, report_cost, ring_cost, cluster_order,
        )

    def accumulate(self, entries) -> np.ndarray:
        """Packets each node holds after the tree has drained toward CHs."""
        flow = np.asarray(entries, dtype=np.int64).copy()
        parent = self.parent
        for u in self.order:
            p = parent[u]
            if p >= 0:
                flow[p] += flow[u]
        return flow


def _topological_order(forest: ClusterForest, fwd: ForwarderState, tour_chs) -> list[int] | None:
    heads = sorted(forest.heads)
    succ: dict[int, set[int]] = {h: set() for h in heads}
    indeg = {h: 0 for h in heads}
    for ch in heads:
        if ch in tour_chs:
            continue
        for v in fwd.rings.get(ch, []):
            c = forest.cluster_of[v]
            if c not in succ[ch]:
                succ[ch].add(c)
                indeg[c] += 1
    ready = [h for h in heads if indeg[h] == 0]
    out = []
    while ready:
        h = ready.pop()
        out.append(h)
        for c in sorted(succ[h]):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return out if len(out) == len(heads) else None


@dataclass
class RoundPlan:
    entries: np.ndarray  # packets entering each node's tree path (own + forwarded in)
    fwd_in: np.ndarray  # packets received over an inter-cluster hop
    fwd_tx_count: np.ndarray
    fwd_tx_energy: np.ndarray
    flow: np.ndarray
    delivered_at: Counter  # tour CH -> packets buffered
    stranded: Counter  # reason -> packets
    generated: int
    hops_total: int
    per_origin: dict[int, list[int]] | None = None  # origin cluster -> [generated, delivered, stranded, hops]

    @property
    def delivered(self) -> int:
        return sum(self.delivered_at.values())

    @property
    def n_stranded(self) -> int:
        return sum(self.stranded.values())


def plan_round(topo: EpochTopology, fwd: ForwarderState, sources: np.ndarray, g: int) -> RoundPlan:
    """Route ``g`` packets from every source, one packet at a time, without
    debiting anything.

    Advances the round-robin counters exactly as the hop-by-hop router would
    when no node dies during the round.
    """
    n = len(topo.parent)
    cluster = topo.cluster.tolist()
    depth = topo.depth.tolist()
    tour = topo.tour_chs
    rings = fwd.rings
    counters = fwd.counters
    ring_cost = topo.ring_cost
    entries = [0] * n
    fwd_in = [0] * n
    fwd_cnt = [0] * n
    fwd_e = [0.0] * n
    delivered: Counter = Counter()
    stranded: Counter = Counter()
    per_origin: dict[int, list[int]] = {}
    hops_total = 0

    for u in sources.tolist():
        c0 = cluster[u]
        rec = per_origin.setdefault(c0, [0, 0, 0, 0])
        for _ in range(g):
            rec[0] += 1
            v = u
            hops = 0
            visited = {c0}
            while True:
                entries[v] += 1
                hops += depth[v]
                ch = cluster[v]
                if ch in tour:
                    delivered[ch] += 1
                    rec[1] += 1
                    break
                ring = rings.get(ch)
                if not ring:
                    stranded[STRAND_DEAD_END] += 1
                    rec[2] += 1
                    break
                i = counters[ch]
                counters[ch] = i + 1
                slot = i % len(ring)
                nxt = ring[slot]
                if cluster[nxt] in visited:
                    stranded[STRAND_LOOP] += 1
                    rec[2] += 1
                    break
                fwd_cnt[ch] += 1
                fwd_e[ch] += ring_cost[ch][slot]
                fwd_in[nxt] += 1
                hops += 1
                visited.add(cluster[nxt])
                v = nxt
            rec[3] += hops
            hops_total += hops
    entries_a = np.array(entries, dtype=np.int64)
    return RoundPlan(
        entries=entries_a,
        fwd_in=np.array(fwd_in, dtype=np.int64),
        fwd_tx_count=np.array(fwd_cnt, dtype=np.int64),
        fwd_tx_energy=np.array(fwd_e),
        flow=topo.accumulate(entries_a),
        delivered_at=delivered,
        stranded=stranded,
        generated=sum(r[0] for r in per_origin.values()),
        hops_total=hops_total,
        per_origin=per_origin,
    )


def propagate_counts(topo: EpochTopology, fwd: ForwarderState, sources: np.ndarray, packets_each: int) -> RoundPlan:
    """Count-level router for an acyclic cluster graph.

    Clusters are drained in topological order, and each CH splits its total
    over its ring exactly as a round-robin over that many packets would.
    Splits compose, so ``packets_each = k * g`` equals ``k`` consecutive
    rounds.
    """
    if topo.cluster_order is None:
        raise ValueError("cluster graph has a cycle; use plan_round")
    n = len(topo.parent)
    cluster = topo.cluster.tolist()
    entries = [0] * n
    fwd_in = [0] * n
    fwd_cnt = [0] * n
    fwd_e = [0.0] * n
    ctotal = [0] * n
    for u in sources.tolist():
        entries[u] += packets_each
        ctotal[cluster[u]] += packets_each
    delivered: Counter = Counter()
    stranded: Counter = Counter()
    tour = topo.tour_chs
    for ch in topo.cluster_order:
        K = ctotal[ch]
        if K == 0:
            continue
        if ch in tour:
            delivered[ch] = K
            continue
        ring = fwd.rings.get(ch)
        if not ring:
            stranded[STRAND_DEAD_END] += K
            continue
        m = len(ring)
        c = fwd.counters[ch]
        fwd.counters[ch] = c + K
        base, rem = divmod(K, m)
        start = c % m
        cost = topo.ring_cost[ch]
        e = 0.0
        for j, v in enumerate(ring):
            cnt = base + (1 if (j - start) % m < rem else 0)
            if cnt:
                entries[v] += cnt
                fwd_in[v] += cnt
                ctotal[cluster[v]] += cnt
                e += cnt * cost[j]
        fwd_cnt[ch] = K
        fwd_e[ch] = e
    entries_a = np.array(entries, dtype=np.int64)
    fwd_cnt_a = np.array(fwd_cnt, dtype=np.int64)
    return RoundPlan(
        entries=entries_a,
        fwd_in=np.array(fwd_in, dtype=np.int64),
        fwd_tx_count=fwd_cnt_a,
        fwd_tx_energy=np.array(fwd_e),
        flow=topo.accumulate(entries_a),
        delivered_at=delivered,
        stranded=stranded,
        generated=len(sources) * packets_each,
        hops_total=int(entries_a @ topo.depth + fwd_cnt_a.sum()),
    )


def write_delivery_csv(path, rows) -> None:
    """``rows``: iterable of (round, origin, generated, delivered, stranded, hops_total)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "origin", "generated", "delivered", "stranded", "hops_total"])
        w.writerows(rows)
