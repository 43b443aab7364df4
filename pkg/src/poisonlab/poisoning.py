"""Poisoning masks, the per-class selection constraint, and the masked loss.

The constraint system is the per-class block-sum identity: row k of the
(never materialized) constraint matrix sums the mask entries of class block
k, which class_offsets make directly addressable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset, from_arrays
from .errors import InfeasibleConstraintError, MaskConstraintError, NonFiniteError
from .trigger import (
    ALL_TO_ALL,
    ALL_TO_ONE,
    CLEAN_LABEL,
    LabelMode,
    TriggerSpec,
    fuse_batch,
    map_labels,
)


@dataclass(frozen=True)
class SelectionConstraint:
    """Per-class selection quotas with the normalized poisoning ratio."""

    quotas: np.ndarray
    alpha_tilde: float
    eligible: np.ndarray

    def __post_init__(self):
        self.quotas.flags.writeable = False
        self.eligible.flags.writeable = False

    @property
    def budget(self) -> int:
        return int(self.quotas.sum())


def eligible_classes(num_classes: int, mode: LabelMode) -> np.ndarray:
    """Which classes may contribute poisoned samples under a label mode."""
    elig = np.ones(num_classes, dtype=bool)
    if mode.mode == ALL_TO_ONE:
        elig[mode.target] = False
    elif mode.mode == CLEAN_LABEL:
        elig[:] = False
        elig[mode.target] = True
    return elig


def build_constraint(ds: LabeledDataset, alpha: float,
                     mode: LabelMode) -> SelectionConstraint:
    """Quotas: floor share per eligible class, remainder by ascending index."""
    if mode.target is not None and mode.target >= ds.num_classes:
        raise ValueError(f"target {mode.target} >= {ds.num_classes} classes")
    if alpha <= 0:
        raise InfeasibleConstraintError("poisoning ratio must be positive")
    budget = int(round(alpha * ds.size))
    if budget == 0:
        raise InfeasibleConstraintError(
            f"alpha={alpha} rounds to a zero budget on {ds.size} samples")
    elig = eligible_classes(ds.num_classes, mode)
    pool = int(ds.class_counts[elig].sum())
    if budget > pool:
        raise InfeasibleConstraintError(
            f"budget {budget} exceeds eligible pool {pool}")
    quotas = np.zeros(ds.num_classes, dtype=np.int64)
    for k in np.flatnonzero(elig):
        quotas[k] = budget * int(ds.class_counts[k]) // pool
    remainder = budget - int(quotas.sum())
    for k in np.flatnonzero(elig):
        if remainder == 0:
            break
        if quotas[k] < ds.class_counts[k]:
            quotas[k] += 1
            remainder -= 1
    if remainder:
        raise InfeasibleConstraintError("could not place remainder quota")
    return SelectionConstraint(quotas=quotas, alpha_tilde=budget / pool,
                               eligible=elig)


@dataclass(frozen=True)
class PoisonPlan:
    """Binary mask (class-sorted order) plus ratio, label mode, and trigger."""

    mask: np.ndarray
    alpha: float
    label_mode: LabelMode
    trigger: TriggerSpec

    def __post_init__(self):
        mask = np.ascontiguousarray(self.mask, dtype=np.int8)
        if mask.size and not np.all((mask == 0) | (mask == 1)):
            raise ValueError("mask must be binary")
        object.__setattr__(self, "mask", mask)
        mask.flags.writeable = False

    @property
    def selected(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


def check_mask(ds: LabeledDataset, mask: np.ndarray,
               con: SelectionConstraint) -> None:
    """Raise unless per-class block sums of the mask equal the quotas."""
    mask = np.asarray(mask)
    if mask.shape != (ds.size,):
        raise MaskConstraintError(
            f"mask length {mask.shape} vs dataset size {ds.size}")
    for k in range(ds.num_classes):
        got = int(mask[ds.class_block(k)].sum())
        if got != con.quotas[k]:
            raise MaskConstraintError(
                f"class {k}: selected {got}, quota {con.quotas[k]}")


def mask_from_indices(size: int, indices) -> np.ndarray:
    mask = np.zeros(size, dtype=np.int8)
    mask[np.asarray(indices, dtype=np.int64)] = 1
    return mask


def poisoned_view(ds: LabeledDataset, plan: PoisonPlan):
    """(inputs, labels) with selected rows fused and relabeled, order kept."""
    sel = plan.selected
    X = ds.inputs.copy()
    ys = ds.labels.copy()
    if sel.size:
        X[sel] = fuse_batch(ds.inputs[sel], plan.trigger)
        ys[sel] = map_labels(ds.labels[sel], ds.num_classes, plan.label_mode)
    return X, ys


def apply_plan(ds: LabeledDataset, plan: PoisonPlan) -> LabeledDataset:
    """Materialize the poisoned dataset; same size, selected rows replaced."""
    if plan.mask.shape != (ds.size,):
        raise MaskConstraintError(
            f"mask length {plan.mask.size} vs dataset size {ds.size}")
    X, ys = poisoned_view(ds, plan)
    return from_arrays(X, ys, num_classes=ds.num_classes)


def masked_loss(model, ds: LabeledDataset, plan: PoisonPlan) -> float:
    """Mean of (1-m)*clean cross-entropy + m*poisoned cross-entropy."""
    from .model import batch_losses

    X, ys = poisoned_view(ds, plan)
    losses = batch_losses(model, X, ys)
    value = float(losses.mean())
    if not np.isfinite(value):
        raise NonFiniteError("masked loss is not finite")
    return value


def save_mask(path, ds: LabeledDataset, plan: PoisonPlan) -> None:
    """Text format: header `alpha=.. target=.. mode=..`, one index per line."""
    target = plan.label_mode.target
    header = (f"alpha={plan.alpha!r} "
              f"target={-1 if target is None else target} "
              f"mode={plan.label_mode.mode}")
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in plan.selected:
            fh.write(f"{int(i)}\n")


def load_mask(path, size: int):
    """Returns (mask, alpha, LabelMode) parsed from the mask file."""
    with open(path) as fh:
        header = fh.readline().strip()
        fields = dict(kv.split("=", 1) for kv in header.split())
        indices = [int(line) for line in fh if line.strip()]
    target = int(fields["target"])
    mode = LabelMode(mode=fields["mode"],
                     target=None if target < 0 else target)
    return mask_from_indices(size, indices), float(fields["alpha"]), mode
