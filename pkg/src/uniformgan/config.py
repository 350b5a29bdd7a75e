"""Strictly validated YAML run configurations.

A config file is a nested mapping whose sections mirror the library dataclasses.
Unknown keys are rejected with the full dotted key path; anything omitted takes
the dataclass default, and the fully resolved result is echoed into the run
directory.
"""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .gan import GanConfig
from .regularizers import RegularizerConfig
from .scm import BenchConfig, EncoderConfig, ScmSpec


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    kind: str = "ring"
    k_modes: int = 8
    radius: float = 2.0
    side: int = 5
    spacing: float = 2.0
    sigma: float = 0.02
    n_per_mode: int = 50
    n_classes: int | None = None
    n_per_class: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("ring", "grid"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")


@dataclass
class GanRunConfig:
    seed: int = 0
    output_dir: str = "runs/gan"
    data: DataConfig = field(default_factory=DataConfig)
    gan: GanConfig = field(default_factory=GanConfig)


@dataclass
class ScmRunConfig:
    seed: int = 0
    output_dir: str = "runs/scm"
    scm: ScmSpec = field(default_factory=ScmSpec)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)


def build(cls, mapping, path: str = ""):
    """Instantiate dataclass ``cls`` from a mapping, recursing into dataclass fields."""
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(mapping).__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in mapping.items():
        dotted = f"{path}.{key}" if path else str(key)
        if key not in fields:
            raise ConfigError(f"unknown config key {dotted!r}")
        hint = hints[key]
        if dataclasses.is_dataclass(hint):
            kwargs[key] = build(hint, value, dotted)
        else:
            kwargs[key] = _check_scalar(hint, value, dotted)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def _check_scalar(hint, value, dotted):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        hint = next(a for a in args if a is not type(None))
        origin = typing.get_origin(hint)
    if hint is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if hint is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if hint is bool and isinstance(value, bool):
        return value
    if hint is str and isinstance(value, str):
        return value
    if (hint is list or origin is list) and isinstance(value, list):
        return list(value)
    raise ConfigError(f"{dotted}: invalid value {value!r}")


def load_yaml(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc.strerror}") from None
    data = yaml.safe_load(text)
    return data or {}


def load_gan_config(path) -> GanRunConfig:
    cfg = build(GanRunConfig, load_yaml(path))
    cfg.gan.seed = cfg.seed
    return cfg


def load_scm_config(path) -> ScmRunConfig:
    cfg = build(ScmRunConfig, load_yaml(path))
    cfg.bench.seed = cfg.seed
    return cfg


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


__all__ = [
    "ConfigError",
    "DataConfig",
    "GanRunConfig",
    "RegularizerConfig",
    "ScmRunConfig",
    "build",
    "load_gan_config",
    "load_scm_config",
    "to_dict",
]
