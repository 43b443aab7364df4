import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poisonlab import data, model
from poisonlab.errors import InfeasibleConstraintError
from poisonlab.poisoning import SelectionConstraint, build_constraint, check_mask
from poisonlab.selection import (
    ForgettingCounter,
    FusConfig,
    LpsConfig,
    count_forgetting,
    fus_select,
    lps_select,
    random_select,
    score_samples,
    solve_inner,
)
from poisonlab.trigger import LabelMode, TriggerSpec
from poisonlab.verify import brute_force_best_objective


def make_ds(counts, d=4, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(counts)), counts)
    return data.from_arrays(rng.uniform(0, 1, (labels.size, d)), labels,
                            len(counts))


def blend(d=4):
    return TriggerSpec(kind="blend", pattern=np.ones(d), blend_alpha=0.3)


FAST = model.TrainConfig(epochs=1, batch_size=16, lr=0.05,
                         lr_decay_epochs=(), weight_decay=0.0)


class TestRandomSelect:
    def test_satisfies_quotas(self):
        ds = make_ds([10, 10, 10])
        con = build_constraint(ds, 0.2, LabelMode("all_to_one", 0))
        mask = random_select(ds, con, seed=3)
        check_mask(ds, mask, con)

    def test_deterministic_in_seed(self):
        ds = make_ds([10, 10])
        con = build_constraint(ds, 0.2, LabelMode("all_to_all"))
        assert np.array_equal(random_select(ds, con, 1),
                              random_select(ds, con, 1))
        assert not np.array_equal(random_select(ds, con, 1),
                                  random_select(ds, con, 2))

    def test_infeasible_quota(self):
        ds = make_ds([3, 3])
        con = SelectionConstraint(quotas=np.array([5, 0]), alpha_tilde=1.0,
                                  eligible=np.array([True, False]))
        with pytest.raises(InfeasibleConstraintError):
            random_select(ds, con, 0)


class TestSolveInner:
    def test_picks_top_scores_per_class(self):
        ds = make_ds([4, 4])
        con = SelectionConstraint(quotas=np.array([2, 1]), alpha_tilde=0.5,
                                  eligible=np.array([True, True]))
        scores = np.array([0.1, 0.9, 0.5, 0.3, -1.0, 2.0, 0.0, 1.5])
        mask = solve_inner(scores, ds, con)
        assert list(np.flatnonzero(mask)) == [1, 2, 5]

    def test_ties_prefer_lower_index(self):
        ds = make_ds([4])
        con = SelectionConstraint(quotas=np.array([2]), alpha_tilde=0.5,
                                  eligible=np.array([True]))
        mask = solve_inner(np.zeros(4), ds, con)
        assert list(np.flatnonzero(mask)) == [0, 1]

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        ds = make_ds([3, 4, 2])
        quotas = np.array([1, 2, 1])
        con = SelectionConstraint(quotas=quotas, alpha_tilde=0.4,
                                  eligible=quotas > 0)
        scores = rng.normal(size=9)
        mask = solve_inner(scores, ds, con)
        got = float(sum(scores[i] for i in np.flatnonzero(mask)))
        assert got == brute_force_best_objective(scores, ds.class_counts,
                                                 quotas)

    @given(st.integers(0, 2**31 - 1), st.floats(-10, 10))
    @settings(max_examples=30, deadline=None)
    def test_invariant_to_per_class_shift(self, seed, shift):
        # adding a constant per class cannot change the chosen mask
        rng = np.random.default_rng(seed)
        ds = make_ds([4, 4])
        con = SelectionConstraint(quotas=np.array([2, 2]), alpha_tilde=0.5,
                                  eligible=np.array([True, True]))
        scores = rng.normal(size=8)
        shifted = scores.copy()
        shifted[:4] += shift
        assert np.array_equal(solve_inner(scores, ds, con),
                              solve_inner(shifted, ds, con))

    def test_wrong_length(self):
        ds = make_ds([4, 4])
        con = SelectionConstraint(quotas=np.array([1, 1]), alpha_tilde=0.25,
                                  eligible=np.array([True, True]))
        with pytest.raises(ValueError):
            solve_inner(np.zeros(7), ds, con)


class TestScores:
    def test_shape_and_finiteness(self):
        ds = make_ds([5, 5])
        net = model.init([4, 6, 2], seed=0)
        s = score_samples(net, ds, blend(), LabelMode("all_to_one", 0))
        assert s.shape == (10,)
        assert np.all(np.isfinite(s))

    def test_zero_trigger_clean_label_scores_zero(self):
        # identity fusion + unchanged labels: the gap vanishes
        ds = make_ds([5, 5])
        net = model.init([4, 6, 2], seed=0)
        trig = TriggerSpec(kind="blend", pattern=np.ones(4), blend_alpha=0.0)
        s = score_samples(net, ds, trig, LabelMode("clean_label", 0))
        assert np.allclose(s, 0.0)


class TestLps:
    def test_quotas_and_determinism(self):
        ds = make_ds([12, 12, 12], seed=1)
        con = build_constraint(ds, 0.2, LabelMode("all_to_one", 0))
        cfg = LpsConfig(iterations=3, train=FAST)
        a = lps_select(ds, blend(), LabelMode("all_to_one", 0), con, cfg, 5)
        b = lps_select(ds, blend(), LabelMode("all_to_one", 0), con, cfg, 5)
        check_mask(ds, a, con)
        assert np.array_equal(a, b)

    def test_trace_records_iterations(self, tmp_path):
        ds = make_ds([10, 10], seed=2)
        con = build_constraint(ds, 0.2, LabelMode("all_to_all"))
        cfg = LpsConfig(iterations=4, train=FAST)
        path = tmp_path / "trace.jsonl"
        lps_select(ds, blend(), LabelMode("all_to_all"), con, cfg, 0,
                   trace_path=path)
        records = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(records) == 4
        assert [r["iteration"] for r in records] == [0, 1, 2, 3]
        assert all(np.isfinite(r["inner_objective"]) for r in records)

    def test_final_mask_maximizes_last_scores(self):
        # the returned mask is an inner solve, so it satisfies quotas and
        # no feasible mask can beat its objective under the final scores
        ds = make_ds([6, 6], seed=3)
        con = build_constraint(ds, 0.25, LabelMode("all_to_all"))
        cfg = LpsConfig(iterations=2, train=FAST)
        mask = lps_select(ds, blend(), LabelMode("all_to_all"), con, cfg, 0)
        check_mask(ds, mask, con)


class TestForgetting:
    def test_counts_transitions(self):
        c = ForgettingCounter(3)
        c.update(np.array([True, True, False]))
        c.update(np.array([False, True, True]))
        c.update(np.array([False, False, False]))
        assert list(c.counts) == [1, 1, 1]

    def test_first_epoch_counts_nothing(self):
        c = ForgettingCounter(2)
        c.update(np.array([False, False]))
        assert list(c.counts) == [0, 0]

    def test_count_forgetting_uses_predictions(self):
        net = model.Classifier([2, 2], [np.array([[1.0, 0.0], [0.0, 1.0]])],
                               [np.zeros(2)])
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        c = ForgettingCounter(2)
        count_forgetting(net, X, np.array([0, 1]), c)
        assert list(c.prev_correct) == [True, True]


class TestFus:
    def test_quotas_and_determinism(self):
        ds = make_ds([10, 10], seed=4)
        con = build_constraint(ds, 0.2, LabelMode("all_to_all"))
        cfg = FusConfig(iterations=2, epochs_per_iteration=2, train=FAST)
        a = fus_select(ds, blend(), LabelMode("all_to_all"), con, cfg, 1)
        b = fus_select(ds, blend(), LabelMode("all_to_all"), con, cfg, 1)
        check_mask(ds, a, con)
        assert np.array_equal(a, b)

    def test_filter_ratio_zero_keeps_initial_pool(self):
        ds = make_ds([10, 10], seed=5)
        con = build_constraint(ds, 0.2, LabelMode("all_to_all"))
        cfg = FusConfig(iterations=2, epochs_per_iteration=1,
                        filter_ratio=0.0, train=FAST)
        mask = fus_select(ds, blend(), LabelMode("all_to_all"), con, cfg, 2)
        init = random_select(ds, con, 2)
        assert np.array_equal(mask, init)

    def test_filter_ratio_validation(self):
        with pytest.raises(ValueError):
            FusConfig(filter_ratio=1.0)
        with pytest.raises(ValueError):
            FusConfig(filter_ratio=-0.1)

    def test_trace_records_drops(self, tmp_path):
        ds = make_ds([10, 10], seed=6)
        con = build_constraint(ds, 0.3, LabelMode("all_to_all"))
        cfg = FusConfig(iterations=2, epochs_per_iteration=1,
                        filter_ratio=0.5, train=FAST)
        path = tmp_path / "trace.jsonl"
        fus_select(ds, blend(), LabelMode("all_to_all"), con, cfg, 0,
                   trace_path=path)
        records = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(records) == 2
        assert all(r["dropped"] == 3 for r in records)
