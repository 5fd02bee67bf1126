"""Scenario configuration and its flat ``key = value`` text format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path


class Mode(str, Enum):
    SECURE_PRIMITIVES = "SECURE_PRIMITIVES"
    DSDV = "DSDV"
    GPSR = "GPSR"
    BMFR = "BMFR"

    @property
    def short(self) -> str:
        return "secure" if self is Mode.SECURE_PRIMITIVES else self.value.lower()


class ConfigError(ValueError):
    pass


MAX_SPEED = 40.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulator inputs. Distances in m, times in ms unless the name says ``_s``."""

    road_length: float = 2500.0
    bs_spacing: float = 500.0
    bs_radius: float = 300.0
    v2v_radius: float = 250.0
    vehicle_count: int = 50
    speed_min: float = 0.0
    speed_max: float = 40.0
    traffic_load: tuple[float, ...] = tuple(float(x) for x in range(1, 11))
    loss_prob: float = 0.02
    per_hop_latency: float = 2.0
    backbone_latency: float = 5.0
    crypto_cost: float = 1.0
    clock_skew: float = 50.0
    max_skew: float = 100.0
    tesla_interval: int = 1000
    tesla_delay: int = 2
    broadcast_rate: float = 0.5
    message_size: int = 30
    beacon_interval: float = 1000.0
    table_interval: float = 1000.0
    move_tick: float = 100.0
    sample_interval: float = 1000.0
    warmup_s: float = 3.0
    sim_duration_s: float = 20.0
    rng_seed: int = 42
    protocol_mode: tuple[Mode, ...] = tuple(Mode)

    def __post_init__(self) -> None:
        self.validate()

    @property
    def bs_positions(self) -> list[float]:
        count = int(self.road_length // self.bs_spacing)
        return [self.bs_spacing / 2 + k * self.bs_spacing for k in range(count)]

    def validate(self) -> None:
        positive = ["road_length", "bs_spacing", "bs_radius", "v2v_radius", "per_hop_latency",
                    "tesla_interval", "broadcast_rate", "message_size", "beacon_interval",
                    "table_interval", "move_tick", "sample_interval", "sim_duration_s"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        non_negative = ["vehicle_count", "backbone_latency", "crypto_cost", "clock_skew",
                        "max_skew", "warmup_s"]
        for name in non_negative:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must not be negative")
        if not 0 <= self.speed_min <= self.speed_max <= MAX_SPEED:
            raise ConfigError(f"speeds must satisfy 0 <= speed_min <= speed_max <= {MAX_SPEED}")
        if not 0 <= self.loss_prob < 1:
            raise ConfigError("loss_prob must be in [0, 1)")
        if not self.traffic_load or any(x <= 0 for x in self.traffic_load):
            raise ConfigError("traffic_load must be a non-empty list of positive rates")
        if not self.protocol_mode:
            raise ConfigError("protocol_mode must name at least one mode")
        if self.tesla_delay < 2:
            raise ConfigError("tesla_delay must be at least 2 intervals")
        if self.clock_skew > self.max_skew:
            raise ConfigError("clock_skew must not exceed max_skew")
        if self.warmup_s >= self.sim_duration_s:
            raise ConfigError("warmup_s must be shorter than sim_duration_s")
        if self.message_size > 1024:
            raise ConfigError("message_size exceeds the 1024-byte MTU")
        if not self.bs_positions:
            raise ConfigError("road_length must fit at least one base station")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ", ".join(v.value if isinstance(v, Mode) else _fmt(v) for v in value)
            else:
                value = _fmt(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v)) if abs(v) < 1e15 else repr(v)
    return str(v)


_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}


def _convert(name: str, raw: str):
    default = _FIELDS[name].default
    try:
        if name == "protocol_mode":
            return tuple(Mode(x.strip().upper()) for x in raw.split(",") if x.strip())
        if name == "traffic_load":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text: str, **overrides) -> ScenarioConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw)
    values.update(overrides)
    try:
        return ScenarioConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path, **overrides) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text, **overrides)


def default_scenario_path() -> Path:
    return Path(__file__).resolve().parent.parent / "scenarios" / "default.scenario"
