"""Flat ``section.key = value`` config files.

One assignment per line; ``#`` starts a comment; ``none`` clears an optional
value.  Every key maps onto exactly one :class:`NetworkConfig` field and
unknown keys are rejected, so a typo in a sweep script fails loudly instead
of silently running the defaults.
"""

from __future__ import annotations

import enum
from dataclasses import fields, replace
from pathlib import Path
from typing import Iterable

from .model import ConfigError, LifetimeDefinition, Mode, NetworkConfig, RegionOrder

# file key -> NetworkConfig field
SCHEMA: dict[str, str] = {
    "deployment.n": "n",
    "deployment.field_side": "field_side",
    "deployment.seed": "rng_seed",
    "radio.range_r": "radio_range_r",
    "radio.tx_power_min_mw": "tx_power_min_mw",
    "radio.tx_power_max_mw": "tx_power_max_mw",
    "radio.d_min": "d_min",
    "radio.d_max": "d_max",
    "radio.rx_power_mw": "rx_power_mw",
    "radio.sleep_power_mw": "sleep_power_mw",
    "radio.bitrate_bps": "bitrate_r",
    "energy.initial_j": "initial_energy",
    "traffic.packet_bits": "packet_size_B",
    "traffic.control_bits": "control_size_bits",
    "traffic.packets_per_round": "packets_per_round_g",
    "protocol.mode": "mode",
    "protocol.theta": "theta",
    "protocol.L_fraction": "L_fraction",
    "protocol.L_absolute": "L_absolute",
    "protocol.reclustering_threshold": "reclustering_threshold",
    "protocol.strand_triggers_reclustering": "strand_triggers_reclustering",
    "sink.speed": "sink_speed_s",
    "sink.dwell": "dwell_s",
    "sink.region_order": "region_order",
    "run.lifetime": "lifetime_definition",
    "run.max_rounds": "max_rounds",
    "run.min_round_time": "min_round_time_s",
    "run.variance_every": "variance_every",
}
FIELD_TO_KEY = {v: k for k, v in SCHEMA.items()}

_OPTIONAL = {"L_fraction", "L_absolute"}


def _field_types() -> dict[str, object]:
    defaults = NetworkConfig()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(NetworkConfig)}


def resolve_key(key: str) -> str:
    """Map a dotted key, its last segment, or a field name to a field name."""
    key = key.strip()
    if key in SCHEMA:
        return SCHEMA[key]
    if key in FIELD_TO_KEY:
        return key
    tails = [f for k, f in SCHEMA.items() if k.split(".", 1)[1] == key]
    if len(tails) == 1:
        return tails[0]
    raise ConfigError(f"unknown config key {key!r}")


def _parse_bool(text: str) -> bool:
    t = text.lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_value(name: str, text: str):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1]
    if text.lower() == "none":
        if name in _OPTIONAL:
            return None
        raise ConfigError(f"{FIELD_TO_KEY[name]} cannot be none")
    try:
        if name == "mode":
            return Mode(text.lower())
        if name == "region_order":
            return RegionOrder(text.lower())
        if name == "lifetime_definition":
            return LifetimeDefinition.parse(text)
        if name in _OPTIONAL:
            return float(text)
        kind = _field_types()[name]
        if kind is bool:
            return _parse_bool(text)
        if kind is int:
            f = float(text)
            if f != int(f):
                raise ConfigError(f"{FIELD_TO_KEY[name]} must be an integer, got {text!r}")
            return int(f)
        return float(text)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value for {FIELD_TO_KEY[name]}: {text!r}") from exc


def parse_text(text: str, source: str = "<string>") -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, val = line.split("=", 1)
        try:
            name = resolve_key(key)
            if name in values:
                raise ConfigError(f"duplicate key {key.strip()!r}")
            values[name] = parse_value(name, val)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return values


def build_config(values: dict[str, object], base: NetworkConfig | None = None) -> NetworkConfig:
    return replace(base or NetworkConfig(), **values)


def apply_overrides(cfg: NetworkConfig, overrides: Iterable[str]) -> NetworkConfig:
    """Apply ``key=value`` strings; keys may be dotted or bare field names."""
    values: dict[str, object] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, val = item.split("=", 1)
        name = resolve_key(key)
        values[name] = parse_value(name, val)
    return replace(cfg, **values) if values else cfg


def load_config(path, overrides: Iterable[str] = ()) -> NetworkConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    cfg = build_config(parse_text(p.read_text(), str(p)))
    return apply_overrides(cfg, overrides)


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, enum.Enum):
        return str(v.value)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: NetworkConfig) -> str:
    """Every field, in schema order; parsing the result gives ``cfg`` back."""
    lines = []
    section = None
    for key, name in SCHEMA.items():
        head = key.split(".", 1)[0]
        if head != section:
            if section is not None:
                lines.append("")
            lines.append(f"# {head}")
            section = head
        lines.append(f"{key} = {_format(getattr(cfg, name))}")
    return "\n".join(lines) + "\n"


def default_config_path() -> Path:
    return Path(__file__).with_name("default.conf")
