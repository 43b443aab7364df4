"""Desk-scale simulator of data-poisoning backdoor attacks."""

from .data import LabeledDataset, load_cifar_binary, load_idx, split, synth_blobs
from .model import Classifier, TrainConfig, init, per_sample_loss, predict, train, train_epoch
from .poisoning import (
    PoisonPlan,
    SelectionConstraint,
    apply_plan,
    build_constraint,
    masked_loss,
)
from .selection import (
    FusConfig,
    LpsConfig,
    fus_select,
    lps_select,
    random_select,
    score_samples,
    solve_inner,
)
from .trigger import LabelMode, TriggerSpec, fuse, map_label
from .harness import AttackResult, evaluate_asr, run_attack, sweep

__version__ = "0.1.0"
