"""Radio energy model and the per-run energy ledger.

Every joule a sensor node spends passes through :class:`EnergyLedger`, which
keeps residual energies, death times and an auditable event log.
"""

from __future__ import annotations

import csv
import enum
import hashlib
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .model import NetworkConfig, ProtocolError


class Kind(enum.IntEnum):
    TX = 0
    RX = 1
    SLEEP = 2


class Purpose(enum.IntEnum):
    RELAY = 0  # intra-cluster hop toward the CH
    FORWARD = 1  # inter-cluster hop from a CH to a ring neighbor
    UPLOAD = 2  # CH to mobile sink
    CLUSTER_BCAST = 3
    JOIN = 4
    CH_BCAST = 5
    FLOOD = 6
    REPORT = 7  # periodic residual-energy report to the CH
    IDLE = 8


@dataclass(frozen=True)
class EnergyModelParams:
    tx_power_min: float = 29.04  # mW at d_min
    tx_power_max: float = 57.42  # mW at d_max
    d_min: float = 4.3
    d_max: float = 45.0
    rx_power: float = 62.0
    sleep_power: float = 0.016
    bitrate_r: float = 250_000.0

    def __post_init__(self):
        if not 0 < self.tx_power_min <= self.tx_power_max:
            raise ValueError("need 0 < tx_power_min <= tx_power_max")
        if not 0 <= self.d_min < self.d_max:
            raise ValueError("need d_min < d_max")
        if not self.rx_power > 0 or self.sleep_power < 0 or not self.bitrate_r > 0:
            raise ValueError("invalid rx/sleep power or bitrate")

    @classmethod
    def from_config(cls, cfg: NetworkConfig) -> "EnergyModelParams":
        return cls(
            tx_power_min=cfg.tx_power_min_mw,
            tx_power_max=cfg.tx_power_max_mw,
            d_min=cfg.d_min,
            d_max=cfg.d_max,
            rx_power=cfg.rx_power_mw,
            sleep_power=cfg.sleep_power_mw,
            bitrate_r=cfg.bitrate_r,
        )


@dataclass(frozen=True)
class EnergyEvent:
    time: float
    node: int
    kind: Kind
    amount: float
    detail: str = ""


def tx_power(d, params: EnergyModelParams):
    """Transmit power in mW for target distance ``d`` (scalar or array).

    Linear in d**2 between the two calibration points, clamped below ``d_min``.
    """
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr < 0):
        raise ValueError("negative distance")
    if np.any(d_arr > params.d_max):
        raise ValueError(f"distance {np.max(d_arr):.4f} m beyond d_max={params.d_max} m")
    lo2, hi2 = params.d_min**2, params.d_max**2
    frac = (np.maximum(d_arr, params.d_min) ** 2 - lo2) / (hi2 - lo2)
    p = params.tx_power_min + (params.tx_power_max - params.tx_power_min) * frac
    # pin the published endpoints exactly
    p = np.where(d_arr <= params.d_min, params.tx_power_min, p)
    p = np.where(d_arr == params.d_max, params.tx_power_max, p)
    return float(p) if p.ndim == 0 else p


def _airtime(packet_bits, params: EnergyModelParams):
    if np.any(np.asarray(packet_bits) <= 0):
        raise ValueError("packet size must be positive")
    return np.asarray(packet_bits, dtype=float) / params.bitrate_r


def tx_energy(packet_bits, d, params: EnergyModelParams):
    e = np.asarray(tx_power(d, params)) * 1e-3 * _airtime(packet_bits, params)
    return float(e) if e.ndim == 0 else e


def rx_energy(packet_bits, params: EnergyModelParams):
    e = params.rx_power * 1e-3 * _airtime(packet_bits, params)
    return float(e) if np.ndim(e) == 0 else e


def sleep_energy(duration, params: EnergyModelParams):
    if np.any(np.asarray(duration) < 0):
        raise ValueError("negative duration")
    e = params.sleep_power * 1e-3 * np.asarray(duration, dtype=float)
    return float(e) if e.ndim == 0 else e


_ROW_DTYPE = np.dtype(
    [("time", "f8"), ("node", "i4"), ("kind", "i1"), ("purpose", "i1"), ("count", "i8"), ("amount", "f8")]
)


class EnergyLedger:
    """Residual energies plus the append-only debit log for one simulation.

    Individual debits (:meth:`debit`) update residuals immediately and are
    aggregated into one row per ``(time, node, kind, purpose)`` on
    :meth:`flush`; :meth:`debit_many` writes rows directly.  With
    ``keep_events=False`` rows are hashed and totalled but not stored.
    """

    def __init__(self, initial: np.ndarray, keep_events: bool = True):
        self.residual = np.array(initial, dtype=float)
        self.initial_total = float(self.residual.sum())
        self.death_time = np.full(len(self.residual), np.nan)
        self.truncated = 0.0
        self.total = 0.0
        self.n_rows = 0
        self.keep_events = keep_events
        self._chunks: list[np.ndarray] = []
        self._pending: dict[tuple, list] = {}
        self._hash = hashlib.sha256()

    @property
    def alive(self) -> np.ndarray:
        return self.residual > 0.0

    def is_alive(self, node: int) -> bool:
        return self.residual[node] > 0.0

    def debit(self, node: int, kind: Kind, amount: float, time: float, purpose: Purpose, count: int = 1) -> float:
        if not self.residual[node] > 0.0:
            raise ProtocolError(f"debit on dead node {node} ({purpose.name})")
        if amount < 0:
            raise ValueError("negative debit")
        left = self.residual[node] - amount
        if left <= 0.0:
            self.truncated += -left
            left = 0.0
            self.death_time[node] = time
        self.residual[node] = left
        key = (time, node, int(kind), int(purpose))
        slot = self._pending.get(key)
        if slot is None:
            self._pending[key] = [count, amount]
        else:
            slot[0] += count
            slot[1] += amount
        return left

    def debit_many(self, nodes, kind: Kind, amounts, time: float, purpose: Purpose, counts=None) -> None:
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size == 0:
            return
        amounts = np.broadcast_to(np.asarray(amounts, dtype=float), nodes.shape)
        if np.any(amounts < 0):
            raise ValueError("negative debit")
        if not np.all(self.residual[nodes] > 0.0):
            dead = nodes[~(self.residual[nodes] > 0.0)]
            raise ProtocolError(f"debit on dead node(s) {dead[:5].tolist()} ({purpose.name})")
        if np.unique(nodes).size != nodes.size:
            raise ValueError("debit_many needs distinct nodes")
        left = self.residual[nodes] - amounts
        died = left <= 0.0
        if np.any(died):
            self.truncated += float(-left[died].sum())
            left[died] = 0.0
            self.death_time[nodes[died]] = time
        self.residual[nodes] = left
        self.flush()  # keep earlier single debits ahead of this batch
        rows = np.empty(nodes.size, dtype=_ROW_DTYPE)
        rows["time"] = time
        rows["node"] = nodes
        rows["kind"] = int(kind)
        rows["purpose"] = int(purpose)
        rows["count"] = 1 if counts is None else np.broadcast_to(counts, nodes.shape)
        rows["amount"] = amounts
        self._append(rows)

    def flush(self) -> None:
        if not self._pending:
            return
        rows = np.empty(len(self._pending), dtype=_ROW_DTYPE)
        for i, ((t, node, kind, purpose), (count, amount)) in enumerate(self._pending.items()):
            rows[i] = (t, node, kind, purpose, count, amount)
        self._pending.clear()
        self._append(rows)

    def _append(self, rows: np.ndarray) -> None:
        self.total += float(rows["amount"].sum())
        self.n_rows += rows.size
        self._hash.update(rows.tobytes())
        if self.keep_events:
            self._chunks.append(rows)

    def rows(self) -> np.ndarray:
        self.flush()
        if not self._chunks:
            return np.empty(0, dtype=_ROW_DTYPE)
        return np.concatenate(self._chunks)

    def events(self) -> Iterator[EnergyEvent]:
        for r in self.rows():
            yield EnergyEvent(
                time=float(r["time"]),
                node=int(r["node"]),
                kind=Kind(int(r["kind"])),
                amount=float(r["amount"]),
                detail=f"{Purpose(int(r['purpose'])).name.lower()};count={int(r['count'])}",
            )

    def update_hash(self, data: bytes) -> None:
        self._hash.update(data)

    def hexdigest(self) -> str:
        self.flush()
        return self._hash.hexdigest()

    def conservation_gap(self) -> float:
        """Relative mismatch of ``initial = residual + ledger - truncated``."""
        self.flush()
        lhs = self.initial_total
        rhs = float(self.residual.sum()) + self.total - self.truncated
        return abs(lhs - rhs) / lhs

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "node", "kind", "amount_joules", "detail"])
            for ev in self.events():
                w.writerow([repr(ev.time), ev.node, ev.kind.name.lower(), repr(ev.amount), ev.detail])
