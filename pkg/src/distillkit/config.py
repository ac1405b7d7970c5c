"""Run configuration: a JSON document with one block per concern.

Parsing is strict; unknown keys at any level raise :class:`ConfigError`.
"""

import dataclasses
import json
from dataclasses import dataclass, field

from .data_io import SyntheticSpec
from .distillation import DEFAULT_T_GRID, DistillConfig
from .errors import ConfigError


@dataclass
class DataConfig:
    manifest: str = None
    test_manifest: str = None
    size: int = 32
    test_fraction: float = 400 / 2400
    count_per_class: int = 1200
    synthetic: dict = field(default_factory=dict)


@dataclass
class ModelConfig:
    layers: list = None
    width: int = None
    checkpoint: str = None
    epochs: int = None
    lr: float = None


@dataclass
class SweepConfig:
    temperatures: list = field(default_factory=lambda: list(DEFAULT_T_GRID))


@dataclass
class EmbedConfig:
    manifest: str = None
    count: int = 20
    size: int = 32
    change_rate: float = 0.4
    mode: str = "uniform"
    cover_noise: float = 0.5
    format: str = "pgm"


@dataclass
class ExtractConfig:
    manifest: str = None
    kinds: list = field(default_factory=lambda: ["first", "min", "max"])
    order: int = 3
    directions: list = field(default_factory=lambda: ["horizontal"])
    step: float = 1.0
    t_trunc: int = 2


@dataclass
class DetectConfig:
    features: str = None
    test_fraction: float = 0.5
    l2: float = 1e-2


@dataclass
class EvalConfig:
    checkpoints: list = field(default_factory=list)
    names: list = None
    baseline: str = None


@dataclass
class RunConfig:
    seed: int = 0
    out: str = None
    data: DataConfig = field(default_factory=DataConfig)
    teacher: ModelConfig = field(default_factory=ModelConfig)
    student: ModelConfig = field(default_factory=ModelConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    extract: ExtractConfig = field(default_factory=ExtractConfig)
    detect: DetectConfig = field(default_factory=DetectConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def synthetic_spec(self):
        spec = dict(self.data.synthetic)
        spec.setdefault("seed", self.seed)
        spec["size"] = self.data.size
        obj = _build(SyntheticSpec, spec, "data.synthetic")
        obj.blob_count = tuple(obj.blob_count)
        obj.blob_radius = tuple(obj.blob_radius)
        return obj


def _build(cls, raw, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object, got {type(raw).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed: {sorted(fields)}")
    kwargs = {}
    for name, value in raw.items():
        sub = _NESTED.get((cls, name))
        kwargs[name] = _build(sub, value, f"{where}.{name}") if sub else value
    return cls(**kwargs)


_NESTED = {
    (RunConfig, "data"): DataConfig,
    (RunConfig, "teacher"): ModelConfig,
    (RunConfig, "student"): ModelConfig,
    (RunConfig, "distill"): DistillConfig,
    (RunConfig, "sweep"): SweepConfig,
    (RunConfig, "embed"): EmbedConfig,
    (RunConfig, "extract"): ExtractConfig,
    (RunConfig, "detect"): DetectConfig,
    (RunConfig, "eval"): EvalConfig,
}


def parse_config(raw):
    cfg = _build(RunConfig, raw, "config")
    if "seed" not in raw.get("distill", {}):
        cfg.distill.seed = cfg.seed
    cfg.distill.validate()
    return cfg


def load_config(path):
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw)


def to_dict(cfg):
    return dataclasses.asdict(cfg)
