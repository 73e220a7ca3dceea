"""Scenario configuration.

A scenario file is line oriented ``key = value`` text.  Blank lines and
lines starting with ``#`` are ignored.  Keys mirror the field names of
:class:`ScenarioConfig`; values are coerced to the field's annotated type.
Command line flags override file values, which override the defaults.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any, Mapping


class ConfigError(ValueError):
    """Bad scenario file or malformed value."""


@dataclass
class ScenarioConfig:
    """Knobs for building a simulated world and driving an experiment."""

    seed: int = 1
    n_robots: int = 5
    rate_mps: float = 20.0
    n_messages: int = 5000
    payload_octets: int = 32
    # radio link between each robot and the broker
    latency_lo_us: int = 10_000
    latency_hi_us: int = 20_000
    loss_prob: float = 0.0
    # broker egress calibration
    dispatch_interval_us: int = 8_000
    radio_tx_interval_us: int = 750
    radio_buffer_capacity: int = 1400
    # node liveness; 0 disables heartbeats entirely
    heartbeat_period_us: int = 0
    ready_deadline_us: int = 10_000_000
    # dispersal behaviour
    rssi_p0_dbm: float = -45.0
    rssi_d0_mm: float = 1000.0
    rssi_exponent: float = 2.5
    rssi_threshold_dbm: float = -70.0
    dispersal_stride_mm: float = 50.0
    dispersal_interval_us: int = 200_000
    initial_separation_mm: float = 300.0
    max_rounds: int = 200
    # inter-network bridging
    bridge_latency_us: int = 50_000
    bridge_topics: str = "squad-remote"

    def bridge_topic_list(self) -> tuple:
        return tuple(t.strip() for t in self.bridge_topics.split(",") if t.strip())

    def replace(self, **kw: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}


def _coerce(key: str, raw: str) -> Any:
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw, 0)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def parse_scenario_text(text: str) -> dict:
    """Parse scenario file text into an override mapping."""
    overrides: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        overrides[key] = _coerce(key, value.strip())
    return overrides


def load_scenario(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario_text(fh.read())


def build_config(file_overrides: Mapping[str, Any] | None = None,
                 cli_overrides: Mapping[str, Any] | None = None) -> ScenarioConfig:
    """Merge defaults, scenario file values and CLI flags, in that order."""
    merged: dict = {}
    for source in (file_overrides, cli_overrides):
        if source:
            merged.update({k: v for k, v in source.items() if v is not None})
    unknown = set(merged) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = ScenarioConfig(**merged)
    if cfg.n_robots < 1:
        raise ConfigError("n_robots must be at least 1")
    if cfg.payload_octets < 14 or cfg.payload_octets > 255:
        # 2 header + 4 seq + 8 send-time octets at minimum
        raise ConfigError("payload_octets must be in [14, 255]")
    if cfg.latency_lo_us > cfg.latency_hi_us:
        raise ConfigError("latency_lo_us must not exceed latency_hi_us")
    if not 0.0 <= cfg.loss_prob < 1.0:
        raise ConfigError("loss_prob must be in [0, 1)")
    if cfg.rate_mps <= 0:
        raise ConfigError("rate_mps must be positive")
    return cfg
