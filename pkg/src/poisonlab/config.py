"""Experiment configuration: one nested key-value file, flag overrides.

The file is YAML with sections `dataset`, `trigger`, `mode`, `strategy`,
`train`, and `sweep`. Every CLI flag maps to a dotted key path and wins
over the file value.
"""

from __future__ import annotations

import copy

import numpy as np
import yaml

from . import data
from .model import TrainConfig
from .selection import FusConfig, LpsConfig
from .trigger import BLEND, LabelMode, TriggerSpec, default_patch, patch_pattern_from_csv

DEFAULTS = {
    "dataset": {
        "kind": "blobs",          # blobs | idx | cifar | csv
        "num_classes": 4,
        "per_class": 200,
        "dim": 16,
        "spread": 0.15,
        "seed": 0,
        "test_fraction": 0.2,
        # idx: images/labels paths; cifar: paths list; csv: path
    },
    "trigger": {
        "kind": BLEND,
        "blend_alpha": 0.1,
        "pattern": None,          # blend vector or patch CSV path
        "patch_origin": [0, 0],
        "signal_amplitude": 0.1,
        "signal_frequency": 2,
        "image_shape": None,
    },
    "mode": {"mode": "all_to_one", "target": 0},
    "strategy": {
        "name": "lps",
        "alpha": 0.0075,
        "seed": 0,
        "lps": {"iterations": 15},
        "fus": {"iterations": 10, "epochs_per_iteration": 60,
                "filter_ratio": 0.5},
        "surrogate_train": {},
    },
    "train": {
        "epochs": 60,
        "batch_size": 128,
        "lr": 0.01,
        "lr_decay_epochs": [21, 33],
        "lr_decay_factor": 0.1,
        "weight_decay": 5e-4,
        "target_dims": None,
    },
    "sweep": {
        "strategies": ["random", "lps"],
        "alphas": [0.00375, 0.0075],
        "seeds": [0, 1, 2, 3, 4],
        "csv": "sweep.csv",
        "json": "sweep.json",
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path=None) -> dict:
    """Merge a YAML config file over the defaults."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        cfg = _deep_merge(cfg, loaded)
    return cfg


def apply_overrides(cfg: dict, overrides: dict) -> dict:
    """Set dotted-path keys, e.g. {'strategy.alpha': 0.01}."""
    cfg = copy.deepcopy(cfg)
    for dotted, value in overrides.items():
        node = cfg
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return cfg


def dataset_from_config(section: dict):
    """Returns (train, test) datasets for the configured source."""
    kind = section.get("kind", "blobs")
    if kind == "blobs":
        ds = data.synth_blobs(int(section["num_classes"]),
                              int(section["per_class"]),
                              int(section["dim"]),
                              float(section["spread"]),
                              int(section.get("seed", 0)))
    elif kind == "idx":
        ds = data.load_idx(section["images"], section["labels"])
    elif kind == "cifar":
        ds = data.load_cifar_binary(section["paths"],
                                    int(section.get("num_classes", 10)))
    elif kind == "csv":
        ds = data.LabeledDataset.from_csv(section["path"])
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    frac = float(section.get("test_fraction", 0.2))
    return data.split(ds, frac, int(section.get("seed", 0)) + 1)


def trigger_from_config(section: dict, dim: int) -> TriggerSpec:
    kind = section.get("kind", BLEND)
    pattern = section.get("pattern")
    image_shape = section.get("image_shape")
    if kind == "patch":
        if pattern is None:
            return default_patch(tuple(image_shape or (1, dim)))
        block = (patch_pattern_from_csv(pattern) if isinstance(pattern, str)
                 else np.array(pattern, dtype=np.float64))
        return TriggerSpec(kind="patch", pattern=block,
                           patch_origin=tuple(section.get("patch_origin",
                                                          (0, 0))),
                           image_shape=tuple(image_shape or (1, dim)))
    if kind == BLEND:
        if pattern is None:
            # alternating high/low vector; any fixed pattern works
            vec = np.where(np.arange(dim) % 2 == 0, 1.0, 0.0)
        else:
            vec = np.array(pattern, dtype=np.float64)
        return TriggerSpec(kind=BLEND, pattern=vec,
                           blend_alpha=float(section.get("blend_alpha", 0.1)))
    if kind == "signal":
        return TriggerSpec(
            kind="signal",
            signal_amplitude=float(section.get("signal_amplitude", 0.1)),
            signal_frequency=int(section.get("signal_frequency", 2)),
            image_shape=None if image_shape is None else tuple(image_shape))
    raise ValueError(f"unknown trigger kind {kind!r}")


def mode_from_config(section: dict) -> LabelMode:
    return LabelMode.from_dict(section)


def train_config_from(section: dict, seed: int = 0) -> TrainConfig:
    return TrainConfig(
        epochs=int(section.get("epochs", 60)),
        batch_size=int(section.get("batch_size", 128)),
        lr=float(section.get("lr", 0.01)),
        lr_decay_epochs=tuple(section.get("lr_decay_epochs", (21, 33))),
        lr_decay_factor=float(section.get("lr_decay_factor", 0.1)),
        weight_decay=float(section.get("weight_decay", 5e-4)),
        seed=seed,
    )


def _surrogate_train(cfg: dict) -> TrainConfig:
    # surrogate_train keys override the shared train section
    merged = _deep_merge(cfg["train"],
                         cfg["strategy"].get("surrogate_train") or {})
    return train_config_from(merged)


def lps_config_from(cfg: dict) -> LpsConfig:
    lps = cfg["strategy"].get("lps", {})
    return LpsConfig(iterations=int(lps.get("iterations", 15)),
                     train=_surrogate_train(cfg))


def fus_config_from(cfg: dict) -> FusConfig:
    fus = cfg["strategy"].get("fus", {})
    return FusConfig(
        iterations=int(fus.get("iterations", 10)),
        epochs_per_iteration=int(fus.get("epochs_per_iteration", 60)),
        filter_ratio=float(fus.get("filter_ratio", 0.5)),
        train=_surrogate_train(cfg))
