import csv
import json

import numpy as np
import pytest

from poisonlab import data, harness, model
from poisonlab.errors import PoisonlabError
from poisonlab.harness import (
    CSV_COLUMNS,
    AttackResult,
    evaluate_accuracy,
    evaluate_asr,
    fingerprint,
    phase_timer_report,
    run_attack,
    sweep,
    train_clean_control,
)
from poisonlab.model import TrainConfig
from poisonlab.selection import FusConfig, LpsConfig
from poisonlab.trigger import LabelMode, TriggerSpec

FAST = TrainConfig(epochs=2, batch_size=32, lr=0.05, lr_decay_epochs=(),
                   weight_decay=0.0)
FAST_LPS = LpsConfig(iterations=2, train=FAST)
FAST_FUS = FusConfig(iterations=1, epochs_per_iteration=2, train=FAST)


@pytest.fixture(scope="module")
def corpus():
    ds = data.synth_blobs(3, 40, 6, 0.2, 0)
    return data.split(ds, 0.25, 1)


@pytest.fixture(scope="module")
def trig():
    return TriggerSpec(kind="blend", pattern=np.ones(6), blend_alpha=0.3)


class TestEvaluate:
    def test_accuracy_perfect_model(self, corpus):
        train_ds, test_ds = corpus
        net = model.init([6, 16, 3], seed=0)
        model.train(net, train_ds, None,
                    TrainConfig(epochs=20, batch_size=16, lr=0.1,
                                lr_decay_epochs=(), weight_decay=0.0))
        assert evaluate_accuracy(net, test_ds) > 0.9

    def test_asr_excludes_target_class(self, corpus, trig):
        _, test_ds = corpus
        # constant-prediction model: always class 0
        w = np.zeros((6, 3))
        b = np.array([10.0, 0.0, 0.0])
        net = model.Classifier([6, 3], [w], [b])
        asr = evaluate_asr(net, test_ds, trig, LabelMode("all_to_one", 0))
        assert asr == 1.0
        # same model scored against target 1: never predicts 1
        asr1 = evaluate_asr(net, test_ds, trig, LabelMode("all_to_one", 1))
        assert asr1 == 0.0

    def test_asr_all_to_all_uses_all_samples(self, corpus, trig):
        _, test_ds = corpus
        net = model.init([6, 16, 3], seed=0)
        asr = evaluate_asr(net, test_ds, trig, LabelMode("all_to_all"))
        assert 0.0 <= asr <= 1.0

    def test_asr_error_when_pool_empty(self, trig):
        one_class = data.from_arrays(np.random.default_rng(0).uniform(
            0, 1, (4, 6)), np.zeros(4, dtype=int), 1)
        net = model.init([6, 1], seed=0)
        with pytest.raises(PoisonlabError):
            evaluate_asr(net, one_class, trig, LabelMode("all_to_one", 0))


class TestFingerprint:
    def test_sensitive_to_every_knob(self, corpus, trig):
        train_ds, test_ds = corpus
        base = dict(strategy="random", strategy_cfg={}, trig=trig,
                    mode=LabelMode("all_to_one", 0), alpha=0.05,
                    target_cfg=FAST, target_dims=[6, 8, 3], seed=0)

        def fp(**kw):
            d = {**base, **kw}
            return fingerprint(train_ds, test_ds, d["strategy"],
                               d["strategy_cfg"], d["trig"], d["mode"],
                               d["alpha"], d["target_cfg"],
                               d["target_dims"], d["seed"])

        ref = fp()
        assert fp() == ref
        assert fp(seed=1) != ref
        assert fp(alpha=0.1) != ref
        assert fp(strategy="lps") != ref
        assert fp(mode=LabelMode("all_to_all")) != ref
        assert fp(target_dims=[6, 4, 3]) != ref
        assert len(ref) == 16


class TestRunAttack:
    def test_random_attack_runs(self, corpus, trig):
        train_ds, test_ds = corpus
        res = run_attack(train_ds, test_ds, "random", trig,
                         LabelMode("all_to_one", 0), 0.1, FAST, seed=0,
                         target_dims=[6, 8, 3])
        assert 0.0 <= res.clean_accuracy <= 1.0
        assert 0.0 <= res.attack_success_rate <= 1.0
        assert res.select_seconds >= 0.0 and res.train_seconds > 0.0

    def test_deterministic_metrics(self, corpus, trig):
        train_ds, test_ds = corpus
        args = (train_ds, test_ds, "lps", trig, LabelMode("all_to_all"),
                0.1, FAST)
        a = run_attack(*args, seed=1, target_dims=[6, 8, 3],
                       lps_cfg=FAST_LPS)
        b = run_attack(*args, seed=1, target_dims=[6, 8, 3],
                       lps_cfg=FAST_LPS)
        assert a.clean_accuracy == b.clean_accuracy
        assert a.attack_success_rate == b.attack_success_rate
        assert a.fingerprint == b.fingerprint

    def test_clean_control(self, corpus):
        train_ds, test_ds = corpus
        acc = train_clean_control(train_ds, test_ds, FAST, seed=0,
                                  target_dims=[6, 8, 3])
        assert 0.0 <= acc <= 1.0


class TestSweep:
    def run_sweep(self, corpus, trig, tmp_path, name="s"):
        train_ds, test_ds = corpus
        return sweep(train_ds, test_ds, ["random", "fus"], [0.1], [0, 1],
                     trig, LabelMode("all_to_one", 0), FAST,
                     tmp_path / f"{name}.csv",
                     json_path=tmp_path / f"{name}.json",
                     target_dims=[6, 8, 3], lps_cfg=FAST_LPS,
                     fus_cfg=FAST_FUS)

    def test_grid_rows_and_columns(self, corpus, trig, tmp_path):
        report = self.run_sweep(corpus, trig, tmp_path)
        assert len(report["new_results"]) == 4
        with open(tmp_path / "s.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == CSV_COLUMNS
        assert len(rows) == 5

    def test_rerun_skips_everything(self, corpus, trig, tmp_path):
        self.run_sweep(corpus, trig, tmp_path, "r")
        report = self.run_sweep(corpus, trig, tmp_path, "r")
        assert report["new_results"] == []
        assert report["skipped_existing"] == 4

    def test_json_report_shape(self, corpus, trig, tmp_path):
        self.run_sweep(corpus, trig, tmp_path, "j")
        report = json.loads((tmp_path / "j.json").read_text())
        assert report["config"]["strategies"] == ["random", "fus"]
        assert report["errors"] == []
        assert len(report["new_results"]) == 4

    def test_cell_errors_recorded_and_continue(self, corpus, trig, tmp_path):
        train_ds, test_ds = corpus
        # alpha 1.0 exceeds the eligible pool -> per-cell error, not a crash
        report = sweep(train_ds, test_ds, ["random"], [1.0, 0.1], [0],
                       trig, LabelMode("all_to_one", 0), FAST,
                       tmp_path / "e.csv", target_dims=[6, 8, 3])
        assert len(report["errors"]) == 1
        assert len(report["new_results"]) == 1

    def test_empty_grid_rejected(self, corpus, trig, tmp_path):
        train_ds, test_ds = corpus
        with pytest.raises(ValueError):
            sweep(train_ds, test_ds, [], [0.1], [0], trig,
                  LabelMode("all_to_all"), FAST, tmp_path / "x.csv")


class TestTiming:
    def test_phase_report(self):
        mk = lambda s, sel, tr: AttackResult(s, 0.1, 0, 0.9, 0.5, sel, tr, "x")
        report = phase_timer_report([mk("lps", 1.0, 2.0),
                                     mk("fus", 8.0, 2.0)])
        assert report["per_strategy"]["lps"]["mean_select_s"] == 1.0
        assert report["lps_vs_fus_select_ratio"] == pytest.approx(0.125)
        assert report["lps_cheaper_than_fus"] is True

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            phase_timer_report([])

    def test_to_row_formats(self):
        res = AttackResult("random", 0.05, 3, 0.875, 0.5, 1.23456, 2.5, "ab")
        row = res.to_row()
        assert row == ["random", "0.05", 3, "0.875", "0.5", "1.235",
                       "2.500", "ab"]
