"""Flat ``section.key = value`` config files and layered settings resolution.

Precedence: defaults <- config file <- command-line flags. ``QSER_SEED`` only
applies when neither the file nor a flag sets ``train.seed``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .features import FeatureConfig
from .training import ModelSpec, TrainConfig

SECTIONS = {"feature": FeatureConfig, "model": ModelSpec, "train": TrainConfig}


def read_config(path) -> dict[str, dict[str, str]]:
    out = {name: {} for name in SECTIONS}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[section][name] = value
    return out


def _coerce(value, default, key: str):
    if not isinstance(value, str):
        return value
    try:
        if isinstance(default, bool):
            if value.lower() in ("1", "true", "yes"):
                return True
            if value.lower() in ("0", "false", "no"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            items = [v.strip() for v in value.split(",") if v.strip()]
            if default and isinstance(default[0], bool):
                return tuple(_coerce(v, True, key) for v in items)
            return tuple(int(v) for v in items)
    except ValueError:
        raise ConfigError(f"bad value {value!r} for {key}") from None
    return value


def apply_overrides(obj, values: dict, section: str):
    names = {f.name for f in fields(obj)}
    changes = {}
    for key, value in values.items():
        if key not in names:
            raise ConfigError(f"unknown setting {section}.{key}")
        changes[key] = _coerce(value, getattr(obj, key), f"{section}.{key}")
    return replace(obj, **changes) if changes else obj


@dataclass
class CliConfig:
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    model: dict = field(default_factory=dict)  # ModelSpec overrides; class count comes from data
    train: TrainConfig = field(default_factory=TrainConfig)

    def model_spec(self, n_classes: int, height: int, width: int) -> ModelSpec:
        base = ModelSpec(n_classes=n_classes, height=height, width=width)
        return apply_overrides(base, self.model, "model")

    def echo(self, spec: ModelSpec | None = None) -> str:
        parts = [f"feature.{f.name}={getattr(self.feature, f.name)!r}" for f in fields(self.feature)]
        if spec is not None:
            parts += [f"model.{f.name}={getattr(spec, f.name)!r}" for f in fields(spec)]
        parts += [f"train.{f.name}={getattr(self.train, f.name)!r}" for f in fields(self.train)]
        return "config: " + " ".join(parts)


def resolve(config_file=None, flags: dict | None = None, env=None) -> CliConfig:
    """Merge defaults, an optional config file and ``{"section": {key: value}}`` flag overrides."""
    env = os.environ if env is None else env
    flags = {k: {n: v for n, v in d.items() if v is not None} for k, d in (flags or {}).items()}
    layered = read_config(config_file) if config_file else {name: {} for name in SECTIONS}
    seed_set = "seed" in layered["train"] or "seed" in flags.get("train", {})
    cfg = CliConfig()
    if not seed_set and env.get("QSER_SEED"):
        cfg.train = apply_overrides(cfg.train, {"seed": env["QSER_SEED"]}, "train")
    for layer in (layered, flags):
        cfg.feature = apply_overrides(cfg.feature, layer.get("feature", {}), "feature")
        cfg.train = apply_overrides(cfg.train, layer.get("train", {}), "train")
        for key, value in layer.get("model", {}).items():
            if key not in {f.name for f in fields(ModelSpec)}:
                raise ConfigError(f"unknown setting model.{key}")
            cfg.model[key] = value
    return cfg
