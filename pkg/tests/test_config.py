from pathlib import Path

import numpy as np
import yaml

from poisonlab import config as cfgmod

REPO_ROOT = Path(__file__).resolve().parent.parent


def test_defaults_load_without_file():
    cfg = cfgmod.load_config(None)
    assert cfg["strategy"]["name"] == "lps"
    assert cfg["dataset"]["kind"] == "blobs"


def test_file_merges_over_defaults(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"strategy": {"alpha": 0.02}}))
    cfg = cfgmod.load_config(path)
    assert cfg["strategy"]["alpha"] == 0.02
    # untouched siblings keep their defaults
    assert cfg["strategy"]["name"] == "lps"


def test_apply_overrides_dotted():
    cfg = cfgmod.load_config(None)
    out = cfgmod.apply_overrides(cfg, {"train.lr": 0.5,
                                       "dataset.per_class": 10})
    assert out["train"]["lr"] == 0.5
    assert out["dataset"]["per_class"] == 10
    assert cfg["train"]["lr"] != 0.5


def test_dataset_from_config_blobs():
    cfg = cfgmod.load_config(None)
    cfg["dataset"].update({"per_class": 20, "num_classes": 3, "dim": 5})
    train, test = cfgmod.dataset_from_config(cfg["dataset"])
    assert train.num_classes == 3
    assert train.size + test.size == 60


def test_trigger_fallback_pattern_matches_dim():
    spec = cfgmod.trigger_from_config({"kind": "blend"}, dim=6)
    assert spec.pattern.shape == (6,)


def test_trigger_pattern_list():
    spec = cfgmod.trigger_from_config(
        {"kind": "blend", "pattern": [0.1, 0.9], "blend_alpha": 0.4}, dim=2)
    assert np.array_equal(spec.pattern, [0.1, 0.9])
    assert spec.blend_alpha == 0.4


def test_surrogate_train_overrides_shared_section():
    cfg = cfgmod.load_config(None)
    cfg["train"].update({"batch_size": 8, "lr": 0.1})
    cfg["strategy"]["surrogate_train"] = {"batch_size": 32}
    lps = cfgmod.lps_config_from(cfg)
    assert lps.train.batch_size == 32
    assert lps.train.lr == 0.1
    fus = cfgmod.fus_config_from(cfg)
    assert fus.train.batch_size == 32


def test_train_config_from_section():
    cfg = cfgmod.train_config_from({"epochs": 5, "lr": 0.2,
                                    "lr_decay_epochs": [2]}, seed=9)
    assert cfg.epochs == 5
    assert cfg.lr_decay_epochs == (2,)
    assert cfg.seed == 9


def test_shipped_experiment_config_parses():
    cfg = cfgmod.load_config(REPO_ROOT / "configs" / "blobs_minmax.yaml")
    assert cfg["trigger"]["blend_alpha"] == 0.5
    assert cfg["strategy"]["surrogate_train"]["batch_size"] == 32
    train, test = cfgmod.dataset_from_config(cfg["dataset"])
    assert train.size == 800 and test.size == 200
