"""Domain types shared by the simulator: nodes, geometry, packets, configuration."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised for an invalid :class:`NetworkConfig` or config file."""


class ProtocolError(RuntimeError):
    """Raised when the simulated protocol reaches a state it must never reach."""


class Position(NamedTuple):
    x: float
    y: float

    def distance(self, other: Sequence[float]) -> float:
        return math.hypot(self.x - other[0], self.y - other[1])


class Role(enum.Enum):
    MEMBER = "member"
    CLUSTER_HEAD = "ch"


class Mode(str, enum.Enum):
    UNCONSTRAINED = "unconstrained"
    PREFIX = "prefix"
    ORIENTEERING = "orienteering"


class RegionOrder(str, enum.Enum):
    CYCLIC = "cyclic"
    SNAKE = "snake"


@dataclass(frozen=True)
class SensorNode:
    id: int
    pos: Position
    residual_energy: float
    role: Role = Role.MEMBER
    parent: int | None = None
    cluster: int | None = None

    @property
    def alive(self) -> bool:
        return self.residual_energy > 0.0


@dataclass(frozen=True)
class Packet:
    origin: int
    seq: int
    size: int
    hop_trace: list[int] = field(default_factory=list)


@dataclass
class MobileSinkState:
    initial_pos: Position
    current_pos: Position
    region_index: int = 0
    region_order: RegionOrder = RegionOrder.CYCLIC

    @classmethod
    def at_center(cls, field_side: float, order: RegionOrder = RegionOrder.CYCLIC) -> "MobileSinkState":
        c = Position(field_side / 2.0, field_side / 2.0)
        return cls(initial_pos=c, current_pos=c, region_order=order)


@dataclass(frozen=True)
class LifetimeDefinition:
    """``fraction_dead`` of None means first node death."""

    fraction_dead: float | None = None

    @classmethod
    def parse(cls, text: str) -> "LifetimeDefinition":
        text = text.strip().lower()
        if text in ("first-death", "first_death", "firstnodedeath"):
            return cls(None)
        if text.startswith("fraction:"):
            p = float(text.split(":", 1)[1])
            if not 0.0 < p <= 1.0:
                raise ConfigError(f"lifetime fraction must be in (0, 1], got {p}")
            return cls(p)
        raise ConfigError(f"unknown lifetime definition {text!r}")

    def __str__(self) -> str:
        return "first-death" if self.fraction_dead is None else f"fraction:{self.fraction_dead:g}"

    def reached(self, n_dead: int, n_total: int) -> bool:
        if n_dead == 0:
            return False
        if self.fraction_dead is None:
            return True
        return n_dead >= math.ceil(self.fraction_dead * n_total - 1e-12)


@dataclass(frozen=True)
class NetworkConfig:
    # deployment
    n: int = 400
    field_side: float = 500.0
    rng_seed: int = 1
    # radio / energy (powers in mW; converted to J only when energy is charged)
    radio_range_r: float = 45.0
    initial_energy: float = 500.0
    tx_power_min_mw: float = 29.04
    tx_power_max_mw: float = 57.42
    d_min: float = 4.3
    d_max: float = 45.0
    rx_power_mw: float = 62.0
    sleep_power_mw: float = 0.016
    bitrate_r: float = 250_000.0
    # traffic
    packet_size_B: int = 1000
    control_size_bits: int = 128
    packets_per_round_g: int = 1
    # protocol
    mode: Mode = Mode.PREFIX
    theta: float = 70.0
    L_fraction: float | None = 0.1
    L_absolute: float | None = None
    reclustering_threshold: float = 0.1
    strand_triggers_reclustering: bool = False
    # mobile sink
    sink_speed_s: float = 1.0
    dwell_s: float = 0.0
    region_order: RegionOrder = RegionOrder.CYCLIC
    # run control
    lifetime_definition: LifetimeDefinition = LifetimeDefinition()
    max_rounds: int = 1_000_000
    min_round_time_s: float = 1.0
    variance_every: int = 1

    def __post_init__(self):
        # accept the string spellings used in config files
        for name, kind in (("lifetime_definition", LifetimeDefinition.parse), ("mode", Mode),
                           ("region_order", RegionOrder)):
            if isinstance(getattr(self, name), str):
                object.__setattr__(self, name, kind(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if not self.field_side > 0:
            raise ConfigError(f"field_side must be positive, got {self.field_side}")
        if not self.radio_range_r > 0:
            raise ConfigError(f"radio_range_r must be positive, got {self.radio_range_r}")
        if self.radio_range_r > self.d_max:
            raise ConfigError("radio_range_r may not exceed the transmit model's d_max")
        if not 0 < self.theta <= 180:
            raise ConfigError(f"theta must be in (0, 180], got {self.theta}")
        if not self.sink_speed_s > 0:
            raise ConfigError(f"sink_speed_s must be positive, got {self.sink_speed_s}")
        if not self.initial_energy > 0:
            raise ConfigError("initial_energy must be positive")
        if self.packet_size_B < 1 or self.control_size_bits < 1 or self.packets_per_round_g < 1:
            raise ConfigError("packet sizes and packets_per_round_g must be >= 1")
        if not self.bitrate_r > 0:
            raise ConfigError("bitrate_r must be positive")
        if not 0 < self.tx_power_min_mw <= self.tx_power_max_mw:
            raise ConfigError("need 0 < tx_power_min_mw <= tx_power_max_mw")
        if not 0 <= self.d_min < self.d_max:
            raise ConfigError("need 0 <= d_min < d_max")
        if not self.rx_power_mw > 0 or self.sleep_power_mw < 0:
            raise ConfigError("rx power must be positive and sleep power non-negative")
        if not 0 < self.reclustering_threshold <= 1:
            raise ConfigError("reclustering_threshold must be in (0, 1]")
        if self.mode is not Mode.UNCONSTRAINED:
            if self.L_absolute is None and self.L_fraction is None:
                raise ConfigError("constrained modes need L_fraction or L_absolute")
            if self.L_absolute is not None and not self.L_absolute > 0:
                raise ConfigError("L_absolute must be positive")
            if self.L_absolute is None and not self.L_fraction > 0:
                raise ConfigError("L_fraction must be positive")
        if self.dwell_s < 0 or not self.min_round_time_s > 0:
            raise ConfigError("dwell_s must be >= 0 and min_round_time_s > 0")
        if self.max_rounds < 1 or self.variance_every < 1:
            raise ConfigError("max_rounds and variance_every must be >= 1")

    @property
    def center(self) -> Position:
        return Position(self.field_side / 2.0, self.field_side / 2.0)

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, enum.Enum):
                v = v.value
            elif isinstance(v, LifetimeDefinition):
                v = str(v)
            out[f.name] = v
        return out


def deploy(config: NetworkConfig) -> list[SensorNode]:
    """Place ``config.n`` nodes uniformly at random in the square field."""
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    xy = rng.uniform(0.0, config.field_side, size=(config.n, 2))
    return [
        SensorNode(id=i, pos=Position(float(x), float(y)), residual_energy=config.initial_energy)
        for i, (x, y) in enumerate(xy)
    ]


def positions_array(nodes: Sequence[SensorNode]) -> np.ndarray:
    return np.array([[nd.pos.x, nd.pos.y] for nd in nodes], dtype=float).reshape(-1, 2)


def distance_matrix(xy: np.ndarray) -> np.ndarray:
    diff = xy[:, None, :] - xy[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def neighbor_lists(xy: np.ndarray, alive: np.ndarray, R: float) -> list[list[int]]:
    """Alive neighbors within ``R`` (inclusive) of every node, ascending id.

    Dead nodes get an empty list and never appear in anyone else's.
    """
    d = distance_matrix(xy)
    ok = (d <= R) & alive[None, :] & alive[:, None]
    np.fill_diagonal(ok, False)
    return [np.flatnonzero(row).tolist() for row in ok]


def neighbors(node: int, nodes: Sequence[SensorNode], R: float) -> list[int]:
    by_id = {nd.id: nd for nd in nodes}
    if node not in by_id:
        raise KeyError(f"unknown node id {node}")
    me = by_id[node]
    if not me.alive:
        raise ProtocolError(f"node {node} is dead")
    return sorted(
        nd.id
        for nd in nodes
        if nd.id != node and nd.alive and math.hypot(nd.pos.x - me.pos.x, nd.pos.y - me.pos.y) <= R
    )
