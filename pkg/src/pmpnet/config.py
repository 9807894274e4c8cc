"""Experiment configuration: JSON with per-module sections.

Keys follow the dotted names used throughout (backbone.side, small.k,
train.epochs, ...). Unknown keys fail fast; all divisibility and
k-vs-patch-count constraints are checked before a run starts.
"""

import json
from dataclasses import dataclass, field

from .data import SyntheticSpec, default_spec
from .errors import ConfigError
from .head import BranchConfig
from .train import TrainConfig

DEFAULTS = {
    "seed": 0,
    "out": "runs/default",
    "classes": 4,
    "backbone": {"side": 192, "base_channels": 16, "window": 3, "blocks_per_stage": 1},
    "small": {"patch_size": 1, "k": 8, "n": 3},
    "large": {"patch_size": 2, "k": 4, "n": 3},
    "train": {"epochs": 30, "batch_size": 8, "lr_max": 1e-3, "lr_min": 1e-5,
              "seed": 0, "folds": 5},
    "data": {"path": "", "side": 192, "per_class": 100, "noise": 0.05, "seed": 0},
}


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/default"
    classes: int = 4
    backbone: dict = field(default_factory=lambda: dict(DEFAULTS["backbone"]))
    small: dict = field(default_factory=lambda: dict(DEFAULTS["small"]))
    large: dict = field(default_factory=lambda: dict(DEFAULTS["large"]))
    train: dict = field(default_factory=lambda: dict(DEFAULTS["train"]))
    data: dict = field(default_factory=lambda: dict(DEFAULTS["data"]))

    def validate(self):
        from .backbone import BackboneConfig

        if self.classes < 2:
            raise ConfigError(f"classes must be >= 2, got {self.classes}")
        bcfg = BackboneConfig(
            side=self.backbone["side"],
            base_channels=self.backbone["base_channels"],
            window=self.backbone["window"],
            blocks_per_stage=self.backbone["blocks_per_stage"],
        )
        bcfg.validate()
        grid = bcfg.grid_side(3)
        for name in ("small", "large"):
            section = getattr(self, name)
            BranchConfig(section["patch_size"], section["k"], section["n"]).validate(
                grid, grid, name
            )
        t = self.train
        if t["epochs"] < 1 or t["batch_size"] < 1:
            raise ConfigError("train.epochs and train.batch_size must be >= 1")
        if t["folds"] < 2:
            raise ConfigError(f"train.folds must be >= 2, got {t['folds']}")
        if t["lr_max"] <= 0 or t["lr_min"] < 0 or t["lr_min"] > t["lr_max"]:
            raise ConfigError("train learning rates must satisfy 0 < lr_min <= lr_max")
        if not self.data["path"]:
            if self.data["side"] != self.backbone["side"]:
                raise ConfigError(
                    f"data.side {self.data['side']} must equal backbone.side "
                    f"{self.backbone['side']}"
                )
            if self.data["per_class"] < 1:
                raise ConfigError("data.per_class must be >= 1")
        return self

    def train_config(self):
        t = self.train
        return TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"],
                           lr_max=t["lr_max"], lr_min=t["lr_min"],
                           seed=t["seed"], folds=t["folds"])

    def synthetic_spec(self):
        if self.data["path"]:
            return None
        return default_spec(self.data["side"], classes=self.classes,
                            noise=self.data["noise"], seed=self.data["seed"])


def _merge(section, defaults, raw, path):
    merged = dict(defaults)
    for key, value in raw.items():
        dotted = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {dotted!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {dotted!r} must be a section")
            merged[key] = _merge(section, defaults[key], value, dotted)
        else:
            if isinstance(value, dict):
                raise ConfigError(f"config key {dotted!r} is not a section")
            merged[key] = value
    return merged


def from_dict(raw):
    merged = _merge(None, DEFAULTS, raw, "")
    return ExperimentConfig(
        seed=int(merged["seed"]),
        out=str(merged["out"]),
        classes=int(merged["classes"]),
        backbone=merged["backbone"],
        small=merged["small"],
        large=merged["large"],
        train=merged["train"],
        data=merged["data"],
    ).validate()


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return from_dict(raw)
