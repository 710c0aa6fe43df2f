"""Experiment configuration: YAML file plus flag overrides, strictly validated."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

SUBCOMMANDS = ("shadow", "conditions", "horseshoe", "tangency", "all")
NOISE_MODELS = ("uniform-box", "gaussian-clipped", "adversarial-face")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted name of the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


@dataclass
class RegionConfig:
    calN: list = field(default_factory=lambda: [[-0.2, 0.2], [-0.2, 0.2]])
    deltas: list = field(default_factory=lambda: [1e-3, 1e-2])
    K: float = 2.0
    alpha: float = 1.0
    delta1: float | None = None


@dataclass
class ShadowConfig:
    p0: list | None = None
    steps: int = 50
    d: list = field(default_factory=lambda: [1e-5])
    epsilon: list = field(default_factory=lambda: [1e-3])
    trials: int = 100
    noise: str = "uniform-box"


@dataclass
class ConditionsConfig:
    samples: int = 10_000
    epsilon: float = 0.1
    W: str | None = None
    V: str | None = None


@dataclass
class HorseshoeConfig:
    system: str = "builtin"
    words: list | None = None
    auto_k: bool = False
    trials: int = 100
    inclination_count: int = 100
    inclination_steps: int = 30
    k_max: int = 8


@dataclass
class TangencyConfig:
    B: Any = 0.5
    C: Any = 2.0
    g: str = "cbrt(x1)"
    delta: str | None = "x1"  # null: derive the modulus from g
    radii: list = field(default_factory=lambda: [0.3, 0.2, 0.1])
    rho: float = 1.0
    roundtrip: int = 100


@dataclass
class ExperimentConfig:
    subcommand: str = "all"
    map: str = "builtin:model"
    seed: int = 0
    output_dir: str | None = None
    out: str | None = None
    workers: int | None = None
    region: RegionConfig = field(default_factory=RegionConfig)
    shadow: ShadowConfig = field(default_factory=ShadowConfig)
    conditions: ConditionsConfig = field(default_factory=ConditionsConfig)
    horseshoe: HorseshoeConfig = field(default_factory=HorseshoeConfig)
    tangency: TangencyConfig = field(default_factory=TangencyConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping | None) -> "ExperimentConfig":
        cfg = _build(cls, data or {}, "")
        validate(cfg)
        return cfg


def _build(cls, data: Mapping, prefix: str):
    if not isinstance(data, Mapping):
        raise ConfigError(prefix.rstrip("."), "expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in fields:
            raise ConfigError(f"{prefix}{key}", "unknown key")
    kwargs = {}
    for name, f in fields.items():
        if name not in data:
            continue
        val = data[name]
        sub = f.default_factory if f.default_factory is not dataclasses.MISSING else None
        if sub is not None and dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, val if val is not None else {}, f"{prefix}{name}.")
        else:
            kwargs[name] = val
    return cls(**kwargs)


def _floats(key: str, value, min_len: int = 1) -> list[float]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a list of numbers, got {value!r}") from None
    if len(out) < min_len:
        raise ConfigError(key, f"needs at least {min_len} value(s)")
    return out


def _int(key: str, value, lo: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(key, f"must be >= {lo}, got {value}")
    return value


def _positive(key: str, value) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {value!r}") from None
    if not v > 0:
        raise ConfigError(key, f"must be > 0, got {value!r}")
    return v


def validate(cfg: ExperimentConfig) -> None:
    """Range checks; normalizes scalars to the documented types in place."""
    if cfg.subcommand not in SUBCOMMANDS:
        raise ConfigError("subcommand", f"must be one of {', '.join(SUBCOMMANDS)}")
    cfg.seed = _int("seed", cfg.seed, 0)
    if cfg.workers is not None:
        cfg.workers = _int("workers", cfg.workers, 1)
    if cfg.out is not None and cfg.subcommand == "all":
        raise ConfigError("out", "only valid for a single subcommand; use output_dir with 'all'")
    if not isinstance(cfg.map, str) or not cfg.map:
        raise ConfigError("map", "expected 'builtin:<name>' or a map file path")

    r = cfg.region
    if not isinstance(r.calN, list) or not r.calN:
        raise ConfigError("region.calN", "expected a list of [lo, hi] intervals")
    r.calN = [_floats("region.calN", iv, 2) for iv in r.calN]
    for lo_hi in r.calN:
        if len(lo_hi) != 2 or not lo_hi[0] < lo_hi[1]:
            raise ConfigError("region.calN", f"interval {lo_hi} must be [lo, hi] with lo < hi")
    r.deltas = [_positive("region.deltas", d) for d in _floats("region.deltas", r.deltas)]
    r.K = float(r.K)
    if not r.K > 1:
        raise ConfigError("region.K", f"must be > 1, got {r.K}")
    r.alpha = _positive("region.alpha", r.alpha)
    if r.delta1 is not None:
        r.delta1 = _positive("region.delta1", r.delta1)

    s = cfg.shadow
    if s.p0 is not None:
        s.p0 = _floats("shadow.p0", s.p0)
    s.steps = _int("shadow.steps", s.steps, 1)
    s.d = _floats("shadow.d", s.d)
    if any(d < 0 for d in s.d):
        raise ConfigError("shadow.d", "must be >= 0")
    s.epsilon = [_positive("shadow.epsilon", e) for e in _floats("shadow.epsilon", s.epsilon)]
    s.trials = _int("shadow.trials", s.trials, 0)
    if s.noise not in NOISE_MODELS:
        raise ConfigError("shadow.noise", f"must be one of {', '.join(NOISE_MODELS)}")

    c = cfg.conditions
    c.samples = _int("conditions.samples", c.samples, 1)
    c.epsilon = _positive("conditions.epsilon", c.epsilon)
    if (c.W is None) != (c.V is None):
        raise ConfigError("conditions.W" if c.W is None else "conditions.V", "W and V must be given together")

    h = cfg.horseshoe
    if not isinstance(h.system, str):
        raise ConfigError("horseshoe.system", "expected 'builtin' or a system file path")
    if h.words is not None:
        if isinstance(h.words, str):
            h.words = [w for w in h.words.split(",") if w]
        for w in h.words:
            if not isinstance(w, str):
                raise ConfigError("horseshoe.words", f"word {w!r} is not a string; quote words such as '01' in YAML")
            if not w or set(w) - {"0", "1"}:
                raise ConfigError("horseshoe.words", f"word {w!r} must be a nonempty string over 0/1")
    if not isinstance(h.auto_k, bool):
        raise ConfigError("horseshoe.auto_k", "expected true or false")
    h.trials = _int("horseshoe.trials", h.trials, 1)
    h.inclination_count = _int("horseshoe.inclination_count", h.inclination_count, 0)
    h.inclination_steps = _int("horseshoe.inclination_steps", h.inclination_steps, 0)
    h.k_max = _int("horseshoe.k_max", h.k_max, 1)

    t = cfg.tangency
    t.B = _matrix("tangency.B", t.B)
    t.C = _matrix("tangency.C", t.C)
    t.radii = [_positive("tangency.radii", x) for x in _floats("tangency.radii", t.radii, 2)]
    if any(x >= 0.9 for x in t.radii):
        raise ConfigError("tangency.radii", "radii must lie below the working radius 0.9")
    t.rho = _positive("tangency.rho", t.rho)
    t.roundtrip = _int("tangency.roundtrip", t.roundtrip, 1)
    if not isinstance(t.g, str) or not t.g:
        raise ConfigError("tangency.g", "expected an expression in x1")


def _matrix(key: str, value) -> list:
    """A number or a square nested list, returned as a nested list of floats."""
    if isinstance(value, str):
        try:
            value = yaml.safe_load(value)
        except yaml.YAMLError as exc:
            raise ConfigError(key, f"cannot parse matrix literal: {exc}") from None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [[float(value)]]
    try:
        rows = [[float(x) for x in row] for row in value]
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number or a square matrix, got {value!r}") from None
    if not rows or any(len(row) != len(rows) for row in rows):
        raise ConfigError(key, "matrix must be square and nonempty")
    return rows


def load_config_file(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("", f"{path}: malformed YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("", f"{path}: config must be a mapping")
    return data


def apply_overrides(data: dict, overrides: Mapping[str, Any]) -> dict:
    """Set dotted keys (``shadow.steps``) on a copy of ``data``; flags win."""
    out = _deepcopy(data)
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = out
        parts = dotted.split(".")
        for p in parts[:-1]:
            if node.get(p) is None:
                node[p] = {}
            node = node[p]
            if not isinstance(node, dict):
                raise ConfigError(dotted, "parent key is not a mapping")
        node[parts[-1]] = value
    return out


def _deepcopy(d):
    if isinstance(d, dict):
        return {k: _deepcopy(v) for k, v in d.items()}
    if isinstance(d, list):
        return [_deepcopy(v) for v in d]
    return d


def resolve(config_path: str | Path | None, overrides: Mapping[str, Any]) -> ExperimentConfig:
    data = load_config_file(config_path) if config_path else {}
    return ExperimentConfig.from_dict(apply_overrides(data, overrides))
