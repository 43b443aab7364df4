"""Self-check oracles: brute-force inner-solver audit and gradient checks.

These are the independent references the test suite (and the `verify` CLI
command) compares the fast paths against.
"""

from __future__ import annotations

from itertools import combinations, product

import numpy as np

from .data import from_arrays
from .model import Classifier, gradients, init
from .poisoning import SelectionConstraint
from .selection import solve_inner


def brute_force_best_objective(scores: np.ndarray, class_counts,
                               quotas) -> float:
    """Enumerate every quota-feasible mask; return the best score sum.

    Builds the full cross product of per-class index combinations, so it
    touches each feasible mask exactly once.
    """
    scores = np.asarray(scores, dtype=np.float64)
    offsets = np.concatenate(([0], np.cumsum(class_counts)[:-1]))
    per_class_choices = []
    for off, n_k, q in zip(offsets, class_counts, quotas):
        per_class_choices.append(
            [tuple(off + i for i in c)
             for c in combinations(range(n_k), int(q))])
    best = -np.inf
    for combo in product(*per_class_choices):
        total = sum(scores[i] for c in combo for i in c)
        best = max(best, total)
    return float(best)


def random_inner_instance(rng):
    """A small random dataset + constraint + scores for solver auditing."""
    K = int(rng.integers(2, 5))
    counts = rng.integers(1, 5, size=K)
    while counts.sum() > 12 or counts.sum() < K:
        counts = rng.integers(1, 5, size=K)
    labels = np.repeat(np.arange(K), counts)
    inputs = rng.uniform(0, 1, size=(labels.size, 2))
    ds = from_arrays(inputs, labels, num_classes=K)
    quotas = np.array([int(rng.integers(0, c + 1)) for c in counts],
                      dtype=np.int64)
    eligible = quotas > 0
    total = int(counts[eligible].sum()) or 1
    con = SelectionConstraint(quotas=quotas,
                              alpha_tilde=quotas.sum() / total,
                              eligible=eligible)
    scores = rng.normal(0, 1, size=labels.size)
    return ds, con, scores


def check_inner_solver(n_instances: int = 200, seed: int = 0) -> dict:
    """Compare solve_inner's objective to exhaustive enumeration."""
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(n_instances):
        ds, con, scores = random_inner_instance(rng)
        mask = solve_inner(scores, ds, con)
        # same left-to-right accumulation order as the enumerator, so the
        # equality check is exact rather than tolerance-based
        got = float(sum(scores[i] for i in np.flatnonzero(mask)))
        want = brute_force_best_objective(scores, ds.class_counts, con.quotas)
        if got != want:
            failures += 1
    return {"instances": n_instances, "failures": failures,
            "passed": failures == 0}


def finite_difference_gradients(model: Classifier, X: np.ndarray,
                                ys: np.ndarray, step: float = 1e-5):
    """Central finite differences of the mean batch loss per parameter."""

    def loss_at() -> float:
        probs = model.forward(X)
        p = probs[np.arange(len(ys)), ys]
        return float(np.mean(-np.log(p)))

    dWs, dbs = [], []
    for params, grads in ((model.weights, dWs), (model.biases, dbs)):
        for arr in params:
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + step
                up = loss_at()
                arr[idx] = orig - step
                down = loss_at()
                arr[idx] = orig
                g[idx] = (up - down) / (2.0 * step)
            grads.append(g)
    return dWs, dbs


def max_gradient_error(model: Classifier, X: np.ndarray,
                       ys: np.ndarray, step: float = 1e-5) -> float:
    """Worst relative error between analytic and finite-difference grads."""
    _, aWs, abs_ = gradients(model, X, ys)
    fWs, fbs = finite_difference_gradients(model, X, ys, step)
    worst = 0.0
    for a, f in list(zip(aWs, fWs)) + list(zip(abs_, fbs)):
        err = np.abs(a - f) / np.maximum(1.0, np.abs(f))
        worst = max(worst, float(err.max()))
    return worst


def check_gradients(n_models: int = 50, seed: int = 0,
                    tol: float = 1e-4) -> dict:
    """Audit analytic gradients on random small models and batches."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = 0
    for i in range(n_models):
        d = int(rng.integers(2, 6))
        h = int(rng.integers(2, 8))
        K = int(rng.integers(2, 5))
        model = init([d, h, K], int(rng.integers(0, 2**31)))
        n = int(rng.integers(1, 8))
        X = rng.uniform(0, 1, size=(n, d))
        ys = rng.integers(0, K, size=n)
        err = max_gradient_error(model, X, ys)
        worst = max(worst, err)
        if err > tol:
            failures += 1
    return {"models": n_models, "worst_relative_error": worst,
            "failures": failures, "passed": failures == 0}
