"""Feed-forward classifier with exact backpropagation and plain SGD.

ReLU hidden layers, softmax head, cross-entropy loss. Everything is float64
numpy; training is bitwise deterministic under (seed, epoch_index).
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .data import LabeledDataset
from .errors import DimensionMismatchError, NonFiniteError

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """SGD hyperparameters with a step learning-rate schedule.

    Defaults scale the full-size recipe down to a 60-epoch budget: decay
    x0.1 at epochs 21 and 33, lr 0.01, weight decay 5e-4, batch 128.
    """

    epochs: int = 60
    batch_size: int = 128
    lr: float = 0.01
    lr_decay_epochs: tuple[int, ...] = (21, 33)
    lr_decay_factor: float = 0.1
    weight_decay: float = 5e-4
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.lr_decay_factor <= 1.0:
            raise ValueError("lr_decay_factor must lie in (0, 1]")
        self.lr_decay_epochs = tuple(int(e) for e in self.lr_decay_epochs)

    def lr_at(self, epoch_index: int) -> float:
        steps = sum(1 for e in self.lr_decay_epochs if epoch_index >= e)
        return self.lr * self.lr_decay_factor ** steps

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr_decay_epochs"] = list(self.lr_decay_epochs)
        return d

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        if "lr_decay_epochs" in d:
            d["lr_decay_epochs"] = tuple(d["lr_decay_epochs"])
        return TrainConfig(**d)


class Classifier:
    """MLP over [d, h1, ..., K] with per-layer weights and biases."""

    def __init__(self, dims, weights, biases):
        self.dims = [int(v) for v in dims]
        self.weights = weights
        self.biases = biases

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def num_classes(self) -> int:
        return self.dims[-1]

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Class probabilities for a batch; rows sum to 1."""
        return self._forward_cached(X)[0]

    def _forward_cached(self, X: np.ndarray):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.in_dim:
            raise DimensionMismatchError(
                f"input dim {X.shape[1]} vs model dim {self.in_dim}")
        acts = [X]
        a = X
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == len(self.weights) - 1 else np.maximum(z, 0.0)
            acts.append(a)
        logits = acts[-1]
        logits = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(logits)
        probs = exp / exp.sum(axis=1, keepdims=True)
        return probs, acts

    def save(self, path) -> None:
        """Checkpoint dims + row-major parameters; round-trips bit-exactly."""
        payload = {"version": np.int64(CHECKPOINT_VERSION),
                   "dims": np.array(self.dims, dtype=np.int64)}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            payload[f"w{i}"] = w
            payload[f"b{i}"] = b
        np.savez(path, **payload)

    @staticmethod
    def load(path) -> "Classifier":
        with np.load(path) as z:
            if int(z["version"]) != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {z['version']}")
            dims = z["dims"].tolist()
            weights = [z[f"w{i}"] for i in range(len(dims) - 1)]
            biases = [z[f"b{i}"] for i in range(len(dims) - 1)]
        return Classifier(dims, weights, biases)


def init(dims, seed: int) -> Classifier:
    """Scaled-uniform weights (Glorot bounds), zero biases, seeded."""
    dims = [int(v) for v in dims]
    if len(dims) < 2 or any(v < 1 for v in dims):
        raise ValueError(f"invalid layer dims {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Classifier(dims, weights, biases)


def per_sample_loss(model: Classifier, x: np.ndarray, y: int) -> float:
    """Cross-entropy -ln p_y of a single sample."""
    probs = model.forward(np.asarray(x)[None, :])[0]
    loss = -np.log(probs[int(y)])
    if not np.isfinite(loss):
        raise NonFiniteError("per-sample loss is not finite")
    return float(loss)


def batch_losses(model: Classifier, X: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Per-sample cross-entropy over a batch."""
    probs, _ = model._forward_cached(X)
    p = probs[np.arange(len(ys)), np.asarray(ys, dtype=np.int64)]
    losses = -np.log(p)
    if not np.all(np.isfinite(losses)):
        raise NonFiniteError("batch loss is not finite")
    return losses


def gradients(model: Classifier, X: np.ndarray, ys: np.ndarray):
    """Analytic gradients of the mean cross-entropy over the batch.

    Returns (mean_loss, [dW...], [db...]).
    """
    ys = np.asarray(ys, dtype=np.int64)
    probs, acts = model._forward_cached(X)
    n = X.shape[0]
    p = probs[np.arange(n), ys]
    loss = float(np.mean(-np.log(p)))
    delta = probs.copy()
    delta[np.arange(n), ys] -= 1.0
    delta /= n
    dWs = [None] * len(model.weights)
    dbs = [None] * len(model.biases)
    for i in range(len(model.weights) - 1, -1, -1):
        dWs[i] = acts[i].T @ delta
        dbs[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0.0)
    return loss, dWs, dbs


def predict(model: Classifier, x: np.ndarray) -> int:
    """Argmax class; ties go to the lowest class index."""
    return int(np.argmax(model.forward(np.asarray(x)[None, :])[0]))


def predict_batch(model: Classifier, X: np.ndarray) -> np.ndarray:
    return np.argmax(model.forward(X), axis=1)


@dataclass(frozen=True)
class EpochReport:
    mean_loss: float
    accuracy: float


def train_epoch(model: Classifier, ds: LabeledDataset, plan,
                cfg: TrainConfig, epoch_index: int) -> EpochReport:
    """One SGD pass over a seeded shuffle of the (optionally poisoned) data.

    plan is a PoisonPlan or None; selected samples are trained on their
    fused inputs and mapped labels. Mutates model in place.
    """
    from .poisoning import poisoned_view

    if plan is not None:
        X, ys = poisoned_view(ds, plan)
    else:
        X, ys = ds.inputs, ds.labels
    n = X.shape[0]
    rng = np.random.default_rng([cfg.seed, epoch_index])
    perm = rng.permutation(n)
    lr = cfg.lr_at(epoch_index)
    bs = min(cfg.batch_size, n)
    total_loss = 0.0
    correct = 0
    for start in range(0, n, bs):
        idx = perm[start:start + bs]
        xb, yb = X[idx], ys[idx]
        loss, dWs, dbs = gradients(model, xb, yb)
        total_loss += loss * len(idx)
        preds = predict_batch(model, xb)
        correct += int(np.sum(preds == yb))
        sgd_step(model, dWs, dbs, lr, cfg.weight_decay)
    return EpochReport(mean_loss=total_loss / n, accuracy=correct / n)


def sgd_step(model: Classifier, dWs, dbs, lr: float,
             weight_decay: float) -> None:
    """w <- w - lr*(grad + weight_decay*w), applied to all parameters."""
    for w, b, dw, db in zip(model.weights, model.biases, dWs, dbs):
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise NonFiniteError("non-finite gradient")
        w -= lr * (dw + weight_decay * w)
        b -= lr * (db + weight_decay * b)


def train(model: Classifier, ds: LabeledDataset, plan,
          cfg: TrainConfig) -> list[EpochReport]:
    """Run cfg.epochs epochs; returns the per-epoch reports."""
    return [train_epoch(model, ds, plan, cfg, e) for e in range(cfg.epochs)]
