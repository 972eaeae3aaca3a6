"""Scenario configuration: nested frozen dataclasses with strict JSON (de)serialisation."""

from __future__ import annotations

import dataclasses
import json
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .abc_routing import AbcConfig
from .analytics import ChannelParams, MobilityParams
from .ponc import STRATEGIES, WEIGHTINGS


class ConfigError(ValueError):
    pass


MOBILITY_MODELS = ("group", "random_waypoint")


@dataclass(frozen=True)
class FeatureFlags:
    coding: bool = True
    ponc: bool = True
    dt: bool = True


@dataclass(frozen=True)
class EdgeConfig:
    count: int = 4
    radius: float = 650.0
    link_delay: float = 0.002

    def __post_init__(self):
        if self.count < 1 or self.radius <= 0 or self.link_delay < 0:
            raise ValueError("edge servers need count >= 1, radius > 0 and link_delay >= 0")


@dataclass(frozen=True)
class PoncConfig:
    max_retries: int = 3
    weighting: str = "count"
    malicious_strategy: str = "score_inflation"
    malicious_fraction: float = 0.0
    inflation_factor: float = 10.0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")
        if self.malicious_strategy not in STRATEGIES:
            raise ValueError(f"malicious_strategy must be one of {STRATEGIES}")
        if not 0 <= self.malicious_fraction < 1:
            raise ValueError("malicious_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class CrConfig:
    """Truncated Gaussian for per-drone coding capability (kbps)."""

    mean: float = 200.0
    std: float = 50.0
    min: float = 100.0
    max: float = 300.0

    def __post_init__(self):
        if not (0 < self.min < self.max) or self.std <= 0:
            raise ValueError("need 0 < min < max and std > 0")


@dataclass(frozen=True)
class TopologyConfig:
    """Combination network used by the throughput model."""

    n: int = 8
    k: int = 5
    q: int = 3

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError("need 1 <= k <= n")
        if self.q < 1:
            raise ValueError("q must be >= 1")


@dataclass(frozen=True)
class SweepConfig:
    n_drones: tuple = (10, 20, 30, 40, 50)
    speed_kmh: tuple = (20.0, 40.0, 60.0, 80.0, 100.0)
    fig2_k: tuple = tuple(range(2, 21))
    overhead_k: tuple = tuple(range(2, 13))
    blocks: tuple = tuple(range(1, 11))
    poso_runs: int = 10_000
    dsa_ratios: tuple = (0.01, 0.1, 0.2)
    dsa_z: tuple = tuple(range(0, 11))
    attack_fractions: tuple = (0.1, 0.2, 0.3, 0.4, 0.5)
    attack_k: tuple = (5, 10, 15)
    attack_population: int = 50
    attack_trials: int = 20_000
    fig11_n: tuple = (6, 7, 8, 9, 10)
    fig11_q: tuple = (2, 3, 4)
    fig11_k: int = 5


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    volume: tuple = (1000.0, 1000.0, 1000.0)
    n_drones: int = 50
    speed_kmh: float = 40.0
    mobility_model: str = "group"
    swarm_radius: float = 20.0
    mobility_dt: float = 0.05
    duration: float = 300.0
    channel: ChannelParams = field(default_factory=ChannelParams)
    link: ChannelParams = field(default_factory=lambda: ChannelParams(noise_power=1e-4))
    mobility: MobilityParams = field(default_factory=MobilityParams)
    comm_range: float = 20.0
    mac_delay: float = 0.005
    data_rate: float = 250_000.0
    abc: AbcConfig = field(default_factory=AbcConfig)
    bm_rate: float = 5.0
    bm_ttl: int = 15
    bm_size: int = 16
    warmup: float = 10.0
    message_size: int = 128
    message_interval: float = 1.0
    k_candidates: int = 5
    queue_capacity: int = 64
    mu_window: int = 20
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    ponc: PoncConfig = field(default_factory=PoncConfig)
    cr: CrConfig = field(default_factory=CrConfig)
    features: FeatureFlags = field(default_factory=FeatureFlags)
    coding_paths: int = 2
    v2vc_latency: float = 0.001
    es: EdgeConfig = field(default_factory=EdgeConfig)
    sweeps: SweepConfig = field(default_factory=SweepConfig)
    replications: int = 10
    out_dir: str = "results"

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if len(self.volume) != 3 or any(v <= 0 for v in self.volume):
            raise ValueError("volume needs three positive side lengths")
        if self.n_drones < 2:
            raise ValueError("n_drones must be >= 2")
        if self.speed_kmh < 0:
            raise ValueError("speed_kmh must be >= 0")
        if self.mobility_model not in MOBILITY_MODELS:
            raise ValueError(f"mobility_model must be one of {MOBILITY_MODELS}")
        if self.swarm_radius <= 0 or 2 * self.swarm_radius >= min(self.volume):
            raise ValueError("swarm_radius must be positive and fit inside the volume")
        for name in ("mobility_dt", "duration", "comm_range", "data_rate", "bm_rate", "message_interval"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("mac_delay", "warmup", "v2vc_latency"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("bm_ttl", "bm_size", "message_size", "k_candidates", "queue_capacity", "mu_window",
                     "coding_paths", "replications"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def speed(self) -> float:
        """Flight speed in m/s."""
        return self.speed_kmh / 3.6

    @property
    def bm_period(self) -> float:
        return 1.0 / self.bm_rate


# --- (de)serialisation ----------------------------------------------------

def to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [to_dict(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _coerce(tp, value, path):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, str) and value in ("inf", "-inf"):
            return float(value)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if tp is tuple or origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        for i, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{path}[{i}]: expected a number, got {v!r}")
        return tuple(value)
    raise ConfigError(f"{path}: unsupported field type {tp!r}")


def from_dict(cls, data, path=""):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        kwargs[key] = _coerce(hints[key], value, sub)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def loads(text: str) -> ScenarioConfig:
    if not text.strip():
        return ScenarioConfig()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_dict(ScenarioConfig, data)


def dumps(cfg: ScenarioConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=False) + "\n"


def load_config(path) -> ScenarioConfig:
    return loads(Path(path).read_text(encoding="utf-8"))


def save_config(cfg: ScenarioConfig, path):
    Path(path).write_text(dumps(cfg), encoding="utf-8")
