"""The data-gathering simulation loop.

An epoch fixes the cluster forest, the sink tour and the sink anchor.  Each
round every alive node senses ``g`` packets, packets flow to CHs on the tour,
the sink drives the tour and collects them, and visited CHs report whether
their cluster drained past the reclustering threshold.  A flagged round ends
the epoch: the sink moves to the next region and the network reclusters
around the new anchor.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clustering import (
    ClusterForest,
    DirectionParams,
    charge_formation,
    flood_ch_locations,
    initial_cluster_formation,
    ms_oriented_cluster_formation,
)
from .energy import EnergyLedger, EnergyModelParams, Kind, Purpose, rx_energy, sleep_energy, tx_energy
from .forwarding import (
    STRAND_DEAD_RELAY,
    STRAND_LOOP,
    EpochTopology,
    ForwarderState,
    RoundPlan,
    RoutingContext,
    build_forwarder_state,
    deliver_packet,
    plan_round,
    propagate_counts,
    write_delivery_csv,
)
from .model import (
    MobileSinkState,
    Mode,
    NetworkConfig,
    Packet,
    Position,
    RegionOrder,
    SensorNode,
    deploy,
)
from .tour import (
    Tour,
    TourBudgetWarning,
    build_ms_tour,
    compute_T_L,
    empty_tour,
    find_tsp_route,
    orienteering_tour,
    sort_chs_by_distance,
)

log = logging.getLogger(__name__)


def region_centers(field_side: float, w: float, h: float, order: RegionOrder) -> list[Position]:
    """Centers of the tiles covering the field, in visiting order."""
    nx = max(1, math.ceil(field_side / w - 1e-9))
    ny = max(1, math.ceil(field_side / h - 1e-9))
    tw, th = field_side / nx, field_side / ny
    if order is RegionOrder.SNAKE:
        out = []
        for row in range(ny):  # top row first
            y = field_side - (row + 0.5) * th
            cols = range(nx) if row % 2 == 0 else reversed(range(nx))
            out.extend(Position((col + 0.5) * tw, y) for col in cols)
        return out
    c = field_side / 2.0
    cells = [Position((i + 0.5) * tw, (j + 0.5) * th) for j in range(ny) for i in range(nx)]

    def key(p: Position):
        ang = math.atan2(p.y - c, p.x - c) % (2 * math.pi)
        return (round(math.hypot(p.x - c, p.y - c), 6), round(ang, 9))

    return sorted(cells, key=key)


@dataclass
class RegionPlan:
    field_side: float
    order: RegionOrder = RegionOrder.CYCLIC
    region_w: float = 0.0
    region_h: float = 0.0
    grid: list[Position] = field(default_factory=list)
    cursor: int = 0
    min_size: float = 1.0

    def __post_init__(self):
        if not self.region_w:
            self.region_w = self.region_h = self.field_side
        if self.order is RegionOrder.CYCLIC and self.cursor == 0:
            # the first epoch already sits at the field center
            self.cursor = 1
        self.grid = region_centers(self.field_side, self.region_w, self.region_h, self.order)

    def retile(self, w: float, h: float) -> None:
        self.region_w = min(self.field_side, max(w, self.min_size))
        self.region_h = min(self.field_side, max(h, self.min_size))
        self.grid = region_centers(self.field_side, self.region_w, self.region_h, self.order)

    def advance(self) -> Position:
        anchor = self.grid[self.cursor % len(self.grid)]
        self.cursor += 1
        return anchor


def relocate_ms(plan: RegionPlan, current_tour: Tour, forest: ClusterForest) -> Position:
    """Retile the field by the footprint of the toured clusters and step to
    the next region; returns the new sink anchor."""
    ids = [u for u, c in forest.cluster_of.items() if c in set(current_tour.visit_order)]
    if ids:
        xy = forest.pos[ids]
        w, h = np.ptp(xy[:, 0]), np.ptp(xy[:, 1])
        plan.retile(float(w), float(h))
    return plan.advance()


@dataclass
class Epoch:
    index: int
    forest: ClusterForest
    tour: Tour
    ms_anchor: Position
    cluster_energy_baseline: dict[int, float]
    start_time: float
    topo: EpochTopology = field(repr=False)
    fwd: ForwarderState = field(repr=False)
    per_round_cost: np.ndarray | None = field(default=None, repr=False)

    @property
    def tour_chs(self) -> frozenset[int]:
        return self.topo.tour_chs


@dataclass
class RoundReport:
    """One round, or ``span`` consecutive identical-epoch rounds charged as a block."""

    round: int
    epoch: int
    start_time: float
    duration: float
    generated: int
    delivered: int
    stranded: int
    hops_total: int
    alive: int
    flagged: bool
    exact: bool
    stranded_by_reason: dict = field(default_factory=dict)
    span: int = 1


def cluster_averages(forest: ClusterForest, residual: np.ndarray) -> dict[int, float]:
    return {c: float(np.mean(residual[sorted(m)])) for c, m in sorted(forest.members.items())}


def below_threshold_flags(epoch: Epoch, residual: np.ndarray, threshold: float) -> dict[int, bool]:
    """What each alive toured CH would tell the sink at its visit."""
    flags = {}
    for ch in epoch.tour.visit_order:
        if not residual[ch] > 0:
            continue
        base = epoch.cluster_energy_baseline[ch]
        now = float(np.mean(residual[sorted(epoch.forest.members[ch])]))
        flags[ch] = base > 0 and (base - now) / base > threshold
    return flags


def check_reclustering(epoch: Epoch, visited_ch_flags: dict[int, bool]) -> bool:
    return any(flag for ch, flag in visited_ch_flags.items() if ch in epoch.tour_chs)


@dataclass
class SimulationTrace:
    config: NetworkConfig
    ledger: EnergyLedger
    rounds: list[RoundReport] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)
    delivery_rows: list[tuple] = field(default_factory=list)
    variance_series: list[tuple[float, float]] = field(default_factory=list)
    lifetime_s: float | None = None
    stop_reason: str = ""
    T_L: float = 0.0
    L: float = 0.0
    end_time: float = 0.0
    degenerate_epochs: int = 0

    @property
    def reclusterings(self) -> int:
        return max(0, len(self.epochs) - 1)

    @property
    def delivered(self) -> int:
        return sum(r.delivered for r in self.rounds)

    @property
    def stranded(self) -> int:
        return sum(r.stranded for r in self.rounds)

    @property
    def generated(self) -> int:
        return sum(r.generated for r in self.rounds)

    def trace_hash(self) -> str:
        return self.ledger.hexdigest()

    def summary(self) -> dict:
        return {
            "lifetime_s": self.lifetime_s,
            "rounds": sum(r.span for r in self.rounds),
            "reclusterings": self.reclusterings,
            "generated": self.generated,
            "delivered": self.delivered,
            "stranded": self.stranded,
            "T_L_s": self.T_L,
            "L_s": self.L,
            "num_chs_initial": self.epochs[0]["num_chs"] if self.epochs else 0,
            "degenerate_epochs": self.degenerate_epochs,
            "stop_reason": self.stop_reason,
            "end_time_s": self.end_time,
            "conservation_gap": self.ledger.conservation_gap(),
            "trace_hash": self.trace_hash(),
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if self.ledger.keep_events:
            self.ledger.write_csv(out / "events.csv")
            write_delivery_csv(out / "delivery.csv", self.delivery_rows)
        with open(out / "rounds.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "span", "epoch", "start_time", "duration", "generated", "delivered",
                        "stranded", "hops_total", "alive", "flagged"])
            for r in self.rounds:
                w.writerow([r.round, r.span, r.epoch, repr(r.start_time), repr(r.duration), r.generated,
                            r.delivered, r.stranded, r.hops_total, r.alive, int(r.flagged)])
        with open(out / "epochs.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            cols = ["epoch", "start_time", "anchor_x", "anchor_y", "num_chs", "tour_time", "tour_chs", "degenerate"]
            w.writerow(cols)
            for e in self.epochs:
                w.writerow([e[c] for c in cols])
        with open(out / "variance.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "variance_j2"])
            w.writerows((repr(t), repr(v)) for t, v in self.variance_series)
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


class Simulation:
    """One deterministic simulation instance; not shared between threads."""

    def __init__(
        self,
        config: NetworkConfig,
        keep_events: bool = True,
        nodes: list[SensorNode] | None = None,
        batch: bool = True,
        hop_by_hop: bool = False,
    ):
        self.cfg = config
        self.batch = batch and not hop_by_hop
        self.hop_by_hop = hop_by_hop  # reference mode: every round routed packet by packet
        self.params = EnergyModelParams.from_config(config)
        self.nodes = nodes if nodes is not None else deploy(config)
        self.xy = np.array([[nd.pos.x, nd.pos.y] for nd in self.nodes], dtype=float)
        self.ledger = EnergyLedger(np.array([nd.residual_energy for nd in self.nodes]), keep_events)
        self.trace = SimulationTrace(config, self.ledger)
        self.ms = MobileSinkState.at_center(config.field_side, config.region_order)
        self.plan = RegionPlan(config.field_side, config.region_order, min_size=config.radio_range_r)
        self.time = 0.0
        self.round_index = 0
        self.epoch: Epoch | None = None
        self.L: float | None = None
        self._e_rx = rx_energy(config.packet_size_B, self.params)
        self._e_up = tx_energy(config.packet_size_B, 0.0, self.params)
        self._c_rx = rx_energy(config.control_size_bits, self.params)

    # -- epochs ---------------------------------------------------------
    def _current_nodes(self) -> list[SensorNode]:
        res = self.ledger.residual
        return [SensorNode(nd.id, nd.pos, float(res[nd.id])) for nd in self.nodes]

    def _plan_tour(self, forest: ClusterForest, anchor: Position) -> Tour:
        cfg = self.cfg
        chs = {h: forest.pos[h] for h in sorted(forest.heads)}
        if cfg.mode is Mode.UNCONSTRAINED:
            return find_tsp_route(anchor, chs, cfg.sink_speed_s, cfg.dwell_s)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TourBudgetWarning)
            if cfg.mode is Mode.PREFIX:
                C = sort_chs_by_distance(chs, anchor)
                return build_ms_tour(C, chs, anchor, self.L, cfg.sink_speed_s, cfg.dwell_s)
            return orienteering_tour(chs, anchor, self.L, cfg.sink_speed_s, cfg.dwell_s)

    def start_epoch(self, anchor: Position) -> Epoch:
        cfg = self.cfg
        nodes = self._current_nodes()
        if cfg.mode is Mode.UNCONSTRAINED:
            forest = initial_cluster_formation(nodes, cfg.radio_range_r)
            theta = 180.0
        else:
            forest = ms_oriented_cluster_formation(nodes, cfg.radio_range_r, DirectionParams(cfg.theta, anchor))
            theta = cfg.theta
        charge_formation(forest, self.ledger, self.params, cfg.control_size_bits, self.time)
        flood_ch_locations(forest, self.ms, self.ledger, self.params, cfg.control_size_bits, self.time)

        if self.L is None:
            # T_L comes from the unconstrained clustering, so every theta and
            # mode on one deployment shares the same delay budget
            base = forest if cfg.mode is Mode.UNCONSTRAINED else initial_cluster_formation(nodes, cfg.radio_range_r)
            chs = {h: base.pos[h] for h in base.heads}
            self.trace.T_L = compute_T_L(chs, anchor, cfg.sink_speed_s)
            if cfg.mode is Mode.UNCONSTRAINED:
                self.L = math.inf
            elif cfg.L_absolute is not None:
                self.L = cfg.L_absolute
            else:
                self.L = max(cfg.L_fraction * self.trace.T_L, 1e-9)
            self.trace.L = self.L

        tour = self._plan_tour(forest, anchor)
        if tour.degenerate:
            self.trace.degenerate_epochs += 1
            log.info("epoch %d: no CH reachable within L; packets will strand", len(self.trace.epochs))
        fwd = build_forwarder_state(forest, anchor, theta)
        topo = EpochTopology.build(forest, tour.visit_order, fwd, cfg.packet_size_B, self.params, cfg.control_size_bits)
        ep = Epoch(
            index=len(self.trace.epochs),
            forest=forest,
            tour=tour,
            ms_anchor=anchor,
            cluster_energy_baseline=cluster_averages(forest, self.ledger.residual),
            start_time=self.time,
            topo=topo,
            fwd=fwd,
        )
        self.trace.epochs.append({
            "epoch": ep.index,
            "start_time": repr(self.time),
            "anchor_x": repr(anchor.x),
            "anchor_y": repr(anchor.y),
            "num_chs": len(forest.heads),
            "tour_time": repr(tour.travel_time),
            "tour_chs": len(tour.visit_order),
            "degenerate": int(tour.degenerate),
        })
        self.ms.current_pos = anchor
        self.epoch = ep
        return ep

    def relocate(self) -> Position:
        cfg = self.cfg
        old = self.ms.current_pos
        if cfg.mode is Mode.UNCONSTRAINED:
            return old
        new = relocate_ms(self.plan, self.epoch.tour, self.epoch.forest)
        self.ms.region_index = self.plan.cursor
        travel = math.dist(old, new) / cfg.sink_speed_s
        if travel > 0:
            self._sleep(travel, self.time + travel)
            self.time += travel
        return new

    def _sleep(self, duration: float, at: float) -> None:
        ids = np.flatnonzero(self.ledger.alive)
        self.ledger.debit_many(ids, Kind.SLEEP, sleep_energy(duration, self.params), at, Purpose.IDLE)

    # -- rounds ---------------------------------------------------------
    def round_duration(self, ep: Epoch) -> float:
        t = ep.tour.travel_time if not ep.tour.degenerate else self.L
        return max(t, self.cfg.min_round_time_s)

    def run_round(self) -> RoundReport:
        return self.advance(1)

    def advance(self, max_rounds: int) -> RoundReport:
        """Play up to ``max_rounds`` rounds of the current epoch as one block.

        Blocks only happen on an acyclic cluster graph.  The block shrinks
        until nobody dies and no toured CH flags inside it; energy only ever
        decreases, so checking the block's end is enough.  A single round in
        which someone may die is replayed hop by hop.
        """
        ep = self.epoch
        cfg = self.cfg
        led = self.ledger
        t0 = self.time
        duration = self.round_duration(ep)
        arrivals = ep.tour.arrival_times(cfg.sink_speed_s, cfg.dwell_s)
        sources = np.array([u for u in ep.forest.nodes if led.residual[u] > 0], dtype=np.int64)
        counting = ep.topo.cluster_order is not None
        k = self._block_size(ep, sources, duration, max_rounds) if counting else 1

        while not self.hop_by_hop:
            snap = ep.fwd.snapshot()
            if counting:
                plan = propagate_counts(ep.topo, ep.fwd, sources, k * cfg.packets_per_round_g)
            else:
                plan = plan_round(ep.topo, ep.fwd, sources, cfg.packets_per_round_g)
            bulk = self._bulk_costs(ep, plan, duration, k)
            # someone may die in this block
            dies = bool(np.any((bulk["total"] > 0) & (bulk["total"] >= led.residual * (1 - 1e-9))))
            if k > 1:
                after = below_threshold_flags(ep, led.residual - bulk["total"], cfg.reclustering_threshold)
                if dies or any(after.values()):
                    ep.fwd.restore(snap)
                    k //= 2
                    continue
            break

        if self.hop_by_hop:
            dies = True
        elif dies:
            ep.fwd.restore(snap)
        if dies:
            gen, dlv, strn, hops, reasons, origin_rows = self._exact_round(ep, sources, t0, duration, arrivals)
        else:
            self._commit_bulk(ep, plan, bulk, t0, duration * k, arrivals)
            gen, dlv, strn, hops = plan.generated, plan.delivered, plan.n_stranded, plan.hops_total
            reasons = dict(plan.stranded)
            origin_rows = plan.per_origin
        led.flush()

        flags = below_threshold_flags(ep, led.residual, cfg.reclustering_threshold)
        rep = RoundReport(
            round=self.round_index,
            epoch=ep.index,
            start_time=t0,
            duration=duration * k,
            generated=gen,
            delivered=dlv,
            stranded=strn,
            hops_total=hops,
            alive=int(led.alive.sum()),
            flagged=check_reclustering(ep, flags),
            exact=dies,
            stranded_by_reason=reasons,
            span=k,
        )
        if led.keep_events:
            if origin_rows is None:
                self.trace.delivery_rows.append((self.round_index, "*", gen, dlv, strn, hops))
            else:
                for c in sorted(origin_rows):
                    g_, d_, s_, h_ = origin_rows[c]
                    self.trace.delivery_rows.append((self.round_index, c, g_, d_, s_, h_))
        led.update_hash(np.array([self.round_index, k, gen, dlv, strn, hops], dtype=np.int64).tobytes())
        self.time = t0 + duration * k
        self.round_index += k
        self.trace.rounds.append(rep)
        return rep

    def _block_size(self, ep: Epoch, sources, duration: float, limit: int) -> int:
        """Largest block the one-round cost rate says is safe (never below 1)."""
        if limit <= 1 or not self.batch:
            return 1
        if ep.per_round_cost is None:
            snap = ep.fwd.snapshot()
            plan = propagate_counts(ep.topo, ep.fwd, sources, self.cfg.packets_per_round_g)
            ep.fwd.restore(snap)
            ep.per_round_cost = self._bulk_costs(ep, plan, duration, 1)["total"]
        rate = ep.per_round_cost
        res = self.ledger.residual
        k = limit
        pos = rate > 0
        if pos.any():
            k = min(k, int(np.min(res[pos] / rate[pos])))
        thr = self.cfg.reclustering_threshold
        for ch in ep.tour.visit_order:
            members = sorted(ep.forest.members[ch])
            drain = float(np.mean(rate[members]))
            room = float(np.mean(res[members])) - ep.cluster_energy_baseline[ch] * (1 - thr)
            if drain > 0:
                k = min(k, int(room / drain))
        return max(1, k)

    def _bulk_costs(self, ep: Epoch, plan: RoundPlan, duration: float, k: int = 1) -> dict:
        """Per-node energy of ``k`` rounds described by ``plan``."""
        topo = ep.topo
        n = len(self.xy)
        relay_tx_n = np.where(topo.parent >= 0, plan.flow, 0)
        relay_rx_n = (plan.flow - plan.entries) + plan.fwd_in
        upload_n = np.zeros(n, dtype=np.int64)
        for ch, cnt in plan.delivered_at.items():
            upload_n[ch] = cnt
        out = {
            "relay_tx_n": relay_tx_n,
            "relay_tx": relay_tx_n * topo.relay_cost,
            "relay_rx_n": relay_rx_n,
            "relay_rx": relay_rx_n * self._e_rx,
            "fwd_tx": plan.fwd_tx_energy,
            "upload_n": upload_n,
            "upload": upload_n * self._e_up,
            "report_tx_n": topo.report_tx * k,
            "report_tx": topo.report_tx * k * topo.report_cost,
            "report_rx_n": topo.report_rx * k,
            "report_rx": topo.report_rx * k * self._c_rx,
        }
        alive = self.ledger.alive
        out["sleep"] = np.where(alive, sleep_energy(duration * k, self.params), 0.0)
        out["total"] = (
            out["relay_tx"] + out["relay_rx"] + out["fwd_tx"] + out["upload"]
            + out["report_tx"] + out["report_rx"] + out["sleep"]
        )
        return out

    def _commit_bulk(self, ep: Epoch, plan: RoundPlan, bulk: dict, t0: float, duration: float, arrivals) -> None:
        led = self.ledger

        def put(kind, purpose, amounts, counts, at):
            ids = np.flatnonzero(counts > 0)
            led.debit_many(ids, kind, amounts[ids], at, purpose, counts[ids])

        put(Kind.TX, Purpose.RELAY, bulk["relay_tx"], bulk["relay_tx_n"], t0)
        put(Kind.RX, Purpose.RELAY, bulk["relay_rx"], bulk["relay_rx_n"], t0)
        put(Kind.TX, Purpose.FORWARD, bulk["fwd_tx"], plan.fwd_tx_count, t0)
        put(Kind.TX, Purpose.REPORT, bulk["report_tx"], bulk["report_tx_n"], t0)
        put(Kind.RX, Purpose.REPORT, bulk["report_rx"], bulk["report_rx_n"], t0)
        for ch, at in zip(ep.tour.visit_order, arrivals):
            k = int(bulk["upload_n"][ch])
            if k:
                led.debit(ch, Kind.TX, float(bulk["upload"][ch]), t0 + at, Purpose.UPLOAD, k)
        led.flush()
        self._sleep(duration, t0 + duration)

    def _exact_round(self, ep: Epoch, sources, t0: float, duration: float, arrivals):
        cfg, led = self.cfg, self.ledger
        ctx = RoutingContext(ep.forest, ep.fwd, ep.tour_chs, led, self.params, cfg.packet_size_B, t0)
        buffers: dict[int, Counter] = {}
        reasons: Counter = Counter()
        per_origin: dict[int, list[int]] = {}
        hops_total = 0
        for u in sources.tolist():
            rec = per_origin.setdefault(ep.forest.cluster_of[u], [0, 0, 0, 0])
            for seq in range(cfg.packets_per_round_g):
                rec[0] += 1
                if not led.is_alive(u):
                    reasons[STRAND_DEAD_RELAY] += 1
                    rec[2] += 1
                    continue
                d = deliver_packet(Packet(u, seq, cfg.packet_size_B), ctx)
                rec[3] += d.hops
                hops_total += d.hops
                if d.delivered:
                    buffers.setdefault(d.at_ch, Counter())[ep.forest.cluster_of[u]] += 1
                    rec[1] += 1
                else:
                    reasons[d.stranded_reason] += 1
                    rec[2] += 1
        # residual-energy reports up each member's chain
        for u in ep.forest.nodes:
            v = u
            while ep.forest.parent[v] is not None and led.is_alive(v):
                p = ep.forest.parent[v]
                if not led.is_alive(p):
                    break
                dist = float(np.hypot(*(self.xy[v] - self.xy[p])))
                led.debit(v, Kind.TX, tx_energy(cfg.control_size_bits, dist, self.params), t0, Purpose.REPORT)
                led.debit(p, Kind.RX, self._c_rx, t0, Purpose.REPORT)
                v = p
        delivered = 0
        for ch, at in zip(ep.tour.visit_order, arrivals):
            held = buffers.pop(ch, Counter())
            k = sum(held.values())
            if not k:
                continue
            if led.is_alive(ch):
                led.debit(ch, Kind.TX, k * self._e_up, t0 + at, Purpose.UPLOAD, k)
                delivered += k
            else:
                # the buffer dies with its CH
                reasons[STRAND_DEAD_RELAY] += k
                for c, cnt in held.items():
                    per_origin[c][1] -= cnt
                    per_origin[c][2] += cnt
        led.flush()
        self._sleep(duration, t0 + duration)
        generated = sum(r[0] for r in per_origin.values())
        return generated, delivered, sum(reasons.values()), hops_total, dict(reasons), per_origin

    # -- driver ---------------------------------------------------------
    def sample_variance(self) -> None:
        res = self.ledger.residual
        alive = res > 0
        if alive.any():
            self.trace.variance_series.append((self.time, float(np.var(res[alive]))))

    def lifetime_reached(self) -> bool:
        dead = np.flatnonzero(~self.ledger.alive)
        if not self.cfg.lifetime_definition.reached(dead.size, len(self.nodes)):
            return False
        times = np.sort(self.ledger.death_time[dead])
        need = 1 if self.cfg.lifetime_definition.fraction_dead is None else math.ceil(
            self.cfg.lifetime_definition.fraction_dead * len(self.nodes) - 1e-12)
        self.trace.lifetime_s = float(times[need - 1])
        return True

    def run(self) -> SimulationTrace:
        cfg = self.cfg
        tr = self.trace
        self.sample_variance()
        self.start_epoch(self.ms.initial_pos)
        while True:
            if self.lifetime_reached():
                tr.stop_reason = "lifetime"
                break
            if not self.ledger.alive.any():
                tr.stop_reason = "all_dead"
                break
            if self.round_index >= cfg.max_rounds:
                tr.stop_reason = "max_rounds"
                break
            step = cfg.variance_every - self.round_index % cfg.variance_every
            rep = self.advance(min(step, cfg.max_rounds - self.round_index))
            if self.round_index % cfg.variance_every == 0:
                self.sample_variance()
            died = rep.alive < len(self.epoch.forest.parent)
            looped = rep.stranded_by_reason.get(STRAND_LOOP, 0) > 0
            recluster = rep.flagged or died or looped or (cfg.strand_triggers_reclustering and rep.stranded > 0)
            if recluster and not self.lifetime_reached() and self.ledger.alive.any():
                anchor = self.relocate()
                self.start_epoch(anchor)
        tr.end_time = self.time
        self.ledger.flush()
        return tr


def run_round(epoch: Epoch, sim: Simulation) -> RoundReport:
    if sim.epoch is not epoch:
        raise ValueError("epoch does not belong to this simulation")
    return sim.run_round()


def run_simulation(config: NetworkConfig, keep_events: bool = True, batch: bool = True) -> SimulationTrace:
    """Run one simulation to its lifetime (or ``max_rounds``)."""
    return Simulation(config, keep_events=keep_events, batch=batch).run()
