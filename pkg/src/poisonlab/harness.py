"""End-to-end attack runs, sweeps, and timing summaries.

A run: build constraint -> select mask -> poison -> train a fresh target
model -> report clean accuracy and attack success rate. Sweeps write a CSV
with a fixed column set and are resumable by config fingerprint.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .errors import PoisonlabError
from .model import Classifier, TrainConfig, init, predict_batch, train
from .poisoning import PoisonPlan, apply_plan, build_constraint
from .selection import (
    FUS,
    LPS,
    RANDOM,
    FusConfig,
    LpsConfig,
    fus_select,
    lps_select,
    random_select,
)
from .trigger import ALL_TO_ALL, ALL_TO_ONE, LabelMode, TriggerSpec, fuse_batch, map_labels

CSV_COLUMNS = ["strategy", "alpha", "seed", "acc", "asr",
               "select_s", "train_s", "fingerprint"]

DEFAULT_SURROGATE_HIDDEN = (64, 32)
DEFAULT_TARGET_HIDDEN = (128, 64)


@dataclass(frozen=True)
class AttackResult:
    strategy: str
    alpha: float
    seed: int
    clean_accuracy: float
    attack_success_rate: float
    select_seconds: float
    train_seconds: float
    fingerprint: str

    def to_row(self) -> list:
        return [self.strategy, repr(self.alpha), self.seed,
                repr(self.clean_accuracy), repr(self.attack_success_rate),
                f"{self.select_seconds:.3f}", f"{self.train_seconds:.3f}",
                self.fingerprint]


def evaluate_accuracy(model: Classifier, test: LabeledDataset) -> float:
    preds = predict_batch(model, test.inputs)
    return float(np.mean(preds == test.labels))


def evaluate_asr(model: Classifier, test: LabeledDataset, trig: TriggerSpec,
                 mode: LabelMode) -> float:
    """Fraction of triggered evaluation inputs predicted as their poisoned
    label; true-target-class samples are excluded outside all-to-all."""
    if mode.mode == ALL_TO_ALL:
        keep = np.ones(test.size, dtype=bool)
    else:
        keep = test.labels != mode.target
    if not keep.any():
        raise PoisonlabError("no evaluation samples outside the target class")
    fused = fuse_batch(test.inputs[keep], trig)
    wanted = map_labels(test.labels[keep], test.num_classes,
                        LabelMode(ALL_TO_ALL) if mode.mode == ALL_TO_ALL
                        else LabelMode(ALL_TO_ONE, mode.target))
    preds = predict_batch(model, fused)
    return float(np.mean(preds == wanted))


def _dataset_digest(ds: LabeledDataset) -> str:
    h = hashlib.sha256()
    h.update(ds.inputs.tobytes())
    h.update(ds.labels.tobytes())
    return h.hexdigest()


def fingerprint(train_ds: LabeledDataset, test_ds: LabeledDataset,
                strategy: str, strategy_cfg: dict, trig: TriggerSpec,
                mode: LabelMode, alpha: float, target_cfg: TrainConfig,
                target_dims, seed: int) -> str:
    payload = {
        "train": _dataset_digest(train_ds),
        "test": _dataset_digest(test_ds),
        "strategy": strategy,
        "strategy_cfg": strategy_cfg,
        "trigger": trig.to_dict(),
        "mode": mode.to_dict(),
        "alpha": alpha,
        "target_cfg": target_cfg.to_dict(),
        "target_dims": list(target_dims),
        "seed": seed,
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _strategy_cfg_dict(strategy: str, lps_cfg: LpsConfig | None,
                       fus_cfg: FusConfig | None) -> dict:
    if strategy == LPS:
        cfg = lps_cfg or LpsConfig()
        return {"iterations": cfg.iterations, "train": cfg.train.to_dict()}
    if strategy == FUS:
        cfg = fus_cfg or FusConfig()
        return {"iterations": cfg.iterations,
                "epochs_per_iteration": cfg.epochs_per_iteration,
                "filter_ratio": cfg.filter_ratio,
                "train": cfg.train.to_dict()}
    return {}


def select_mask(strategy: str, train_ds: LabeledDataset, trig: TriggerSpec,
                mode: LabelMode, con, seed: int, lps_cfg: LpsConfig | None = None,
                fus_cfg: FusConfig | None = None, trace_path=None) -> np.ndarray:
    if strategy == RANDOM:
        return random_select(train_ds, con, seed)
    if strategy == LPS:
        return lps_select(train_ds, trig, mode, con, lps_cfg or LpsConfig(),
                          seed, trace_path=trace_path)
    if strategy == FUS:
        return fus_select(train_ds, trig, mode, con, fus_cfg or FusConfig(),
                          seed, trace_path=trace_path)
    raise ValueError(f"unknown strategy {strategy!r}")


def run_attack(train_ds: LabeledDataset, test_ds: LabeledDataset,
               strategy: str, trig: TriggerSpec, mode: LabelMode,
               alpha: float, target_cfg: TrainConfig, seed: int,
               target_dims=None, lps_cfg: LpsConfig | None = None,
               fus_cfg: FusConfig | None = None,
               trace_path=None) -> AttackResult:
    """Full pipeline for one (strategy, alpha, seed) cell.

    The target model architecture is distinct from the surrogate's so the
    mask must transfer, mirroring the surrogate-to-victim setting.
    """
    target_dims = list(target_dims or
                       (train_ds.dim, *DEFAULT_TARGET_HIDDEN,
                        train_ds.num_classes))
    con = build_constraint(train_ds, alpha, mode)
    strategy_cfg = _strategy_cfg_dict(strategy, lps_cfg, fus_cfg)
    fp = fingerprint(train_ds, test_ds, strategy, strategy_cfg, trig, mode,
                     alpha, target_cfg, target_dims, seed)

    t0 = time.perf_counter()
    mask = select_mask(strategy, train_ds, trig, mode, con, seed,
                       lps_cfg=lps_cfg, fus_cfg=fus_cfg,
                       trace_path=trace_path)
    select_s = time.perf_counter() - t0

    plan = PoisonPlan(mask=mask, alpha=alpha, label_mode=mode, trigger=trig)
    target_train_cfg = TrainConfig.from_dict(
        {**target_cfg.to_dict(), "seed": seed})
    target = init(target_dims, seed + 1)
    t0 = time.perf_counter()
    train(target, train_ds, plan, target_train_cfg)
    train_s = time.perf_counter() - t0

    return AttackResult(
        strategy=strategy,
        alpha=alpha,
        seed=seed,
        clean_accuracy=evaluate_accuracy(target, test_ds),
        attack_success_rate=evaluate_asr(target, test_ds, trig, mode),
        select_seconds=select_s,
        train_seconds=train_s,
        fingerprint=fp,
    )


def train_clean_control(train_ds: LabeledDataset, test_ds: LabeledDataset,
                        target_cfg: TrainConfig, seed: int,
                        target_dims=None) -> float:
    """Clean-trained target accuracy, for neutrality comparisons."""
    target_dims = list(target_dims or
                       (train_ds.dim, *DEFAULT_TARGET_HIDDEN,
                        train_ds.num_classes))
    cfg = TrainConfig.from_dict({**target_cfg.to_dict(), "seed": seed})
    target = init(target_dims, seed + 1)
    train(target, train_ds, None, cfg)
    return evaluate_accuracy(target, test_ds)


def _existing_fingerprints(csv_path) -> set:
    try:
        with open(csv_path) as fh:
            return {row["fingerprint"] for row in csv.DictReader(fh)}
    except FileNotFoundError:
        return set()


def sweep(train_ds: LabeledDataset, test_ds: LabeledDataset,
          strategies, alphas, seeds, trig: TriggerSpec, mode: LabelMode,
          target_cfg: TrainConfig, csv_path, json_path=None,
          target_dims=None, lps_cfg: LpsConfig | None = None,
          fus_cfg: FusConfig | None = None) -> dict:
    """Cartesian product of strategies x alphas x seeds, flushed per cell.

    Cells whose fingerprint already appears in the CSV are skipped, so an
    interrupted sweep resumes where it left off.
    """
    strategies, alphas, seeds = list(strategies), list(alphas), list(seeds)
    if not (strategies and alphas and seeds):
        raise ValueError("sweep grid must be nonempty")
    done = _existing_fingerprints(csv_path)
    new_file = not done and _is_empty(csv_path)
    results, errors, skipped = [], [], 0
    with open(csv_path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(CSV_COLUMNS)
            fh.flush()
        dims = list(target_dims or (train_ds.dim, *DEFAULT_TARGET_HIDDEN,
                                    train_ds.num_classes))
        for strategy in strategies:
            for alpha in alphas:
                for seed in seeds:
                    fp = fingerprint(
                        train_ds, test_ds, strategy,
                        _strategy_cfg_dict(strategy, lps_cfg, fus_cfg),
                        trig, mode, alpha, target_cfg, dims, seed)
                    if fp in done:
                        skipped += 1
                        continue
                    try:
                        result = run_attack(
                            train_ds, test_ds, strategy, trig, mode, alpha,
                            target_cfg, seed, target_dims=dims,
                            lps_cfg=lps_cfg, fus_cfg=fus_cfg)
                    except PoisonlabError as exc:
                        errors.append({"strategy": strategy, "alpha": alpha,
                                       "seed": seed, "error": str(exc)})
                        continue
                    writer.writerow(result.to_row())
                    fh.flush()
                    done.add(result.fingerprint)
                    results.append(result)
    report = {
        "config": {
            "strategies": strategies,
            "alphas": [float(a) for a in alphas],
            "seeds": [int(s) for s in seeds],
            "trigger": trig.to_dict(),
            "mode": mode.to_dict(),
            "target_train": target_cfg.to_dict(),
            "schedule_note": "60-epoch budget with decay points scaled "
                             "from the 100-epoch recipe",
        },
        "new_results": [result.__dict__ for result in results],
        "skipped_existing": skipped,
        "errors": errors,
    }
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(report, fh, indent=2)
    return report


def _is_empty(path) -> bool:
    try:
        with open(path) as fh:
            return fh.read(1) == ""
    except FileNotFoundError:
        return True


def phase_timer_report(results) -> dict:
    """Mean per-phase wall-clock per strategy, plus the min-max-vs-FUS
    selection cost comparison when both are present."""
    if not results:
        raise ValueError("no results to summarize")
    by_strategy: dict[str, list[AttackResult]] = {}
    for r in results:
        by_strategy.setdefault(r.strategy, []).append(r)
    summary = {
        name: {
            "runs": len(rs),
            "mean_select_s": float(np.mean([r.select_seconds for r in rs])),
            "mean_train_s": float(np.mean([r.train_seconds for r in rs])),
        }
        for name, rs in by_strategy.items()
    }
    out = {"per_strategy": summary}
    if LPS in summary and FUS in summary:
        lps_cost = summary[LPS]["mean_select_s"]
        fus_cost = summary[FUS]["mean_select_s"]
        out["lps_vs_fus_select_ratio"] = (
            lps_cost / fus_cost if fus_cost > 0 else float("inf"))
        out["lps_cheaper_than_fus"] = lps_cost < fus_cost
    return out
