"""Poisoning-sample selection strategies: Random, FUS, and the min-max one.

All strategies emit a binary mask aligned to the class-sorted dataset order
and satisfying the per-class quotas exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .errors import InfeasibleConstraintError, PoolExhaustedError
from .model import Classifier, TrainConfig, batch_losses, init, predict_batch, train_epoch
from .poisoning import PoisonPlan, SelectionConstraint, mask_from_indices
from .trigger import LabelMode, TriggerSpec, fuse_batch, map_labels

RANDOM = "random"
FUS = "fus"
LPS = "lps"
STRATEGIES = (RANDOM, FUS, LPS)


@dataclass
class LpsConfig:
    """Alternating min-max schedule: T iterations, one surrogate epoch each."""

    iterations: int = 15
    surrogate_dims: tuple[int, ...] | None = None
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass
class FusConfig:
    """Filter-and-refill schedule with a freshly initialized surrogate per
    iteration."""

    iterations: int = 10
    epochs_per_iteration: int = 60
    filter_ratio: float = 0.5
    surrogate_dims: tuple[int, ...] | None = None
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.iterations < 1 or self.epochs_per_iteration < 1:
            raise ValueError("iteration counts must be >= 1")
        if not 0.0 <= self.filter_ratio < 1.0:
            raise ValueError("filter_ratio must lie in [0, 1)")


def _check_feasible(ds: LabeledDataset, con: SelectionConstraint) -> None:
    for k in range(ds.num_classes):
        if con.quotas[k] > ds.class_counts[k]:
            raise InfeasibleConstraintError(
                f"quota {con.quotas[k]} exceeds class {k} size "
                f"{ds.class_counts[k]}")


def random_select(ds: LabeledDataset, con: SelectionConstraint,
                  seed: int) -> np.ndarray:
    """Uniform draw without replacement of q_k indices per eligible class."""
    _check_feasible(ds, con)
    rng = np.random.default_rng([seed, 0x5e1ec7])
    picked = []
    for k in range(ds.num_classes):
        q = int(con.quotas[k])
        if q == 0:
            continue
        blk = ds.class_block(k)
        picked.append(blk.start + rng.choice(blk.stop - blk.start, size=q,
                                             replace=False))
    if not picked:
        return np.zeros(ds.size, dtype=np.int8)
    return mask_from_indices(ds.size, np.concatenate(picked))


def score_samples(model: Classifier, ds: LabeledDataset, trig: TriggerSpec,
                  mode: LabelMode) -> np.ndarray:
    """Poisoned-minus-clean loss gap per sample under the current surrogate."""
    fused = fuse_batch(ds.inputs, trig)
    mapped = map_labels(ds.labels, ds.num_classes, mode)
    return (batch_losses(model, fused, mapped)
            - batch_losses(model, ds.inputs, ds.labels))


def solve_inner(scores: np.ndarray, ds: LabeledDataset,
                con: SelectionConstraint) -> np.ndarray:
    """Exact maximizer of the scored mask under per-class quotas.

    Per eligible class, take the q_k highest scores; ties go to the lowest
    class-sorted index. Ineligible classes keep a zero sub-mask.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (ds.size,):
        raise ValueError(f"scores length {scores.shape} vs |D|={ds.size}")
    _check_feasible(ds, con)
    picked = []
    for k in range(ds.num_classes):
        q = int(con.quotas[k])
        if q == 0:
            continue
        blk = ds.class_block(k)
        order = np.argsort(-scores[blk], kind="stable")
        picked.append(blk.start + order[:q])
    if not picked:
        return np.zeros(ds.size, dtype=np.int8)
    return mask_from_indices(ds.size, np.concatenate(picked))


class TraceWriter:
    """Appends per-iteration diagnostics as JSON lines; no-op without path."""

    def __init__(self, path=None):
        self.path = path
        if path is not None:
            open(path, "w").close()

    def emit(self, record: dict) -> None:
        if self.path is None:
            return
        with open(self.path, "a") as fh:
            fh.write(json.dumps(record) + "\n")


def _mask_overlap(a: np.ndarray, b: np.ndarray) -> int:
    return int(np.sum((a == 1) & (b == 1)))


def lps_select(ds: LabeledDataset, trig: TriggerSpec, mode: LabelMode,
               con: SelectionConstraint, cfg: LpsConfig, seed: int,
               trace_path=None) -> np.ndarray:
    """Alternating selection: maximize the loss gap over the mask, then
    train the surrogate one epoch on the resulting poisoned data.

    The surrogate persists across iterations; the final mask is the last
    inner solve.
    """
    _check_feasible(ds, con)
    dims = cfg.surrogate_dims or (ds.dim, 64, 32, ds.num_classes)
    surrogate = init(dims, seed)
    mask = random_select(ds, con, seed)
    train_cfg = TrainConfig.from_dict({**cfg.train.to_dict(), "seed": seed})
    trace = TraceWriter(trace_path)
    for t in range(cfg.iterations):
        plan = PoisonPlan(mask=mask, alpha=con.budget / ds.size,
                          label_mode=mode, trigger=trig)
        report = train_epoch(surrogate, ds, plan, train_cfg, t)
        scores = score_samples(surrogate, ds, trig, mode)
        new_mask = solve_inner(scores, ds, con)
        trace.emit({
            "strategy": LPS,
            "iteration": t,
            "surrogate_loss": report.mean_loss,
            "inner_objective": float(scores[new_mask == 1].sum()),
            "mask_overlap_prev": _mask_overlap(mask, new_mask),
        })
        mask = new_mask
    return mask


class ForgettingCounter:
    """Counts correct-to-incorrect transitions across epoch-end checks."""

    def __init__(self, size: int):
        self.counts = np.zeros(size, dtype=np.int64)
        self.prev_correct = None

    def update(self, correct: np.ndarray) -> None:
        correct = np.asarray(correct, dtype=bool)
        if correct.shape != self.counts.shape:
            raise ValueError(
                f"correctness length {correct.shape} vs {self.counts.shape}")
        if self.prev_correct is not None:
            self.counts += (self.prev_correct & ~correct).astype(np.int64)
        self.prev_correct = correct


def count_forgetting(model: Classifier, inputs: np.ndarray,
                     labels: np.ndarray,
                     counter: ForgettingCounter) -> ForgettingCounter:
    """Evaluate every sample and record forgetting transitions."""
    if len(inputs) != counter.counts.size:
        raise ValueError(
            f"{len(inputs)} samples vs counter of {counter.counts.size}")
    preds = predict_batch(model, inputs)
    counter.update(preds == np.asarray(labels))
    return counter


def fus_select(ds: LabeledDataset, trig: TriggerSpec, mode: LabelMode,
               con: SelectionConstraint, cfg: FusConfig, seed: int,
               trace_path=None) -> np.ndarray:
    """Filter-and-refill: drop the most-forgotten pooled poisoned samples,
    refill per class to quota from unpooled eligible samples."""
    _check_feasible(ds, con)
    dims = cfg.surrogate_dims or (ds.dim, 64, 32, ds.num_classes)
    rng = np.random.default_rng([seed, 0xf05])
    mask = random_select(ds, con, seed)
    trace = TraceWriter(trace_path)
    alpha = con.budget / ds.size
    for it in range(cfg.iterations):
        surrogate = init(dims, seed + it)
        plan = PoisonPlan(mask=mask, alpha=alpha, label_mode=mode, trigger=trig)
        pool = plan.selected
        fused = fuse_batch(ds.inputs[pool], trig)
        mapped = map_labels(ds.labels[pool], ds.num_classes, mode)
        counter = ForgettingCounter(pool.size)
        train_cfg = TrainConfig.from_dict(
            {**cfg.train.to_dict(), "seed": seed + it})
        last_loss = None
        for e in range(cfg.epochs_per_iteration):
            report = train_epoch(surrogate, ds, plan, train_cfg, e)
            last_loss = report.mean_loss
            count_forgetting(surrogate, fused, mapped, counter)
        n_drop = int(round(cfg.filter_ratio * pool.size))
        order = np.lexsort((pool, -counter.counts))
        kept = np.sort(pool[order[n_drop:]])
        mask = _refill(ds, con, kept, rng)
        trace.emit({
            "strategy": FUS,
            "iteration": it,
            "surrogate_loss": last_loss,
            "dropped": n_drop,
            "mask_overlap_prev": _mask_overlap(
                mask, mask_from_indices(ds.size, pool)),
        })
    return mask


def _refill(ds: LabeledDataset, con: SelectionConstraint,
            kept: np.ndarray, rng) -> np.ndarray:
    kept_set = set(int(i) for i in kept)
    picked = list(kept)
    for k in range(ds.num_classes):
        q = int(con.quotas[k])
        blk = ds.class_block(k)
        have = [i for i in kept if blk.start <= i < blk.stop]
        need = q - len(have)
        if need < 0:
            raise PoolExhaustedError(f"class {k} over quota after filtering")
        if need == 0:
            continue
        candidates = np.array([i for i in range(blk.start, blk.stop)
                               if i not in kept_set], dtype=np.int64)
        if candidates.size < need:
            raise PoolExhaustedError(
                f"class {k}: need {need} refills, only {candidates.size} left")
        picked.extend(rng.choice(candidates, size=need, replace=False))
    if not picked:
        return np.zeros(ds.size, dtype=np.int8)
    return mask_from_indices(ds.size, np.asarray(picked, dtype=np.int64))
