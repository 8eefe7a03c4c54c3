"""Run configuration: tier presets, flat dotted-key config files and overrides.

A config file is a flat mapping (YAML or JSON) such as::

    model.backbone_layers: 2
    train.max_iters: 500
    window.stride_s: 1.0

Command-line flags use the same dotted names.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from .inference import SlidingWindowConfig
from .model import ModelConfig
from .synth import GeneratorConfig
from .trainer import TrainConfig

TIERS = ("paper", "test")

SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "window": SlidingWindowConfig,
    "generator": GeneratorConfig,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    tier: str = "paper"
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    window: SlidingWindowConfig = field(default_factory=SlidingWindowConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def to_flat(self) -> Dict[str, Any]:
        flat = {"tier": self.tier, "seed": self.seed}
        for name in SECTIONS:
            for k, v in dataclasses.asdict(getattr(self, name)).items():
                flat[f"{name}.{k}"] = list(v) if isinstance(v, tuple) else v
        return flat

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.to_flat(), fh, indent=2, sort_keys=True)
        return path


def _field_types(cls) -> Dict[str, Any]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def key_types() -> Dict[str, Any]:
    out: Dict[str, Any] = {"tier": str, "seed": int}
    for name, cls in SECTIONS.items():
        for k, t in _field_types(cls).items():
            out[f"{name}.{k}"] = t
    return out


def _unwrap(t):
    origin = typing.get_origin(t)
    if origin is Union:
        args = [a for a in typing.get_args(t) if a is not type(None)]
        return _unwrap(args[0])
    return t


def coerce(key: str, value: Any, t=None):
    """Convert a string or loaded config value to the field's type."""
    t = _unwrap(t if t is not None else key_types()[key])
    if value is None:
        return None
    origin = typing.get_origin(t)
    try:
        if origin in (tuple, list) or t in (tuple, list):
            args = typing.get_args(t)
            elem = args[0] if args else float
            if isinstance(value, str):
                value = [v for v in value.replace(" ", "").split(",") if v]
            return tuple(elem(v) for v in value)
        if t is bool:
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if t is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"not an integer: {value!r}")
            return int(value)
        if t is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a flat mapping")
    flat: Dict[str, Any] = {}
    for k, v in data.items():
        if isinstance(v, dict):
            raise ConfigError(f"config file {path}: nested section {k!r}; use dotted keys like {k}.<field>")
        flat[str(k)] = v
    return flat


def resolve(values: Optional[Dict[str, Any]] = None, tier: Optional[str] = None) -> RunConfig:
    """Build a :class:`RunConfig` from a tier preset overridden by ``values``."""
    values = dict(values or {})
    types = key_types()
    unknown = sorted(set(values) - set(types))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    tier = tier or values.pop("tier", None) or "paper"
    values.pop("tier", None)
    if tier not in TIERS:
        raise ConfigError(f"tier must be one of {TIERS}, got {tier!r}")
    seed = coerce("seed", values.pop("seed", 0))

    sections: Dict[str, Dict[str, Any]] = {s: {} for s in SECTIONS}
    for key, v in values.items():
        sec, name = key.split(".", 1)
        sections[sec][name] = coerce(key, v)
    sections["train"].setdefault("seed", seed)
    try:
        gen_tier = "test" if tier == "test" else "paper"
        return RunConfig(
            tier=tier,
            seed=seed,
            model=ModelConfig.preset(tier, **sections["model"]),
            train=TrainConfig.preset(tier, **sections["train"]),
            window=SlidingWindowConfig(**sections["window"]),
            generator=GeneratorConfig.preset(gen_tier, **sections["generator"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
