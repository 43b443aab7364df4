"""Trigger patterns, the fusion operator, and poisoned-label mappings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError

PATCH = "patch"
BLEND = "blend"
SIGNAL = "signal"
KINDS = (PATCH, BLEND, SIGNAL)

ALL_TO_ONE = "all_to_one"
ALL_TO_ALL = "all_to_all"
CLEAN_LABEL = "clean_label"
MODES = (ALL_TO_ONE, ALL_TO_ALL, CLEAN_LABEL)


@dataclass(frozen=True)
class TriggerSpec:
    """A trigger pattern plus the parameters of its fusion rule.

    kind 'patch' overwrites a rectangular block of the image grid; 'blend'
    alpha-blends a full-size pattern into the input; 'signal' adds a
    horizontal sinusoid. image_shape (rows, cols) is required for patch and
    defaults to a single row of length d otherwise.
    """

    kind: str
    pattern: np.ndarray | None = None
    blend_alpha: float = 0.1
    patch_origin: tuple[int, int] = (0, 0)
    signal_amplitude: float = 0.0
    signal_frequency: int = 1
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown trigger kind {self.kind!r}")
        if self.kind in (PATCH, BLEND):
            if self.pattern is None:
                raise ValueError(f"{self.kind} trigger needs a pattern")
            pat = np.ascontiguousarray(self.pattern, dtype=np.float64)
            if pat.size and (pat.min() < 0.0 or pat.max() > 1.0):
                raise ValueError("pattern values must lie in [0, 1]")
            object.__setattr__(self, "pattern", pat)
            pat.flags.writeable = False
        if self.kind == BLEND and not 0.0 <= self.blend_alpha <= 1.0:
            raise ValueError("blend_alpha must lie in [0, 1]")
        if self.kind == PATCH:
            if self.pattern.ndim != 2:
                raise ValueError("patch pattern must be a 2-D block")
            if self.image_shape is None:
                raise ValueError("patch trigger needs image_shape")
            r0, c0 = self.patch_origin
            pr, pc = self.pattern.shape
            rows, cols = self.image_shape
            if r0 < 0 or c0 < 0 or r0 + pr > rows or c0 + pc > cols:
                raise ValueError("patch does not fit inside image bounds")
        if self.kind == SIGNAL:
            if self.signal_amplitude < 0:
                raise ValueError("signal_amplitude must be >= 0")
            if self.signal_frequency < 1:
                raise ValueError("signal_frequency must be a positive integer")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.pattern is not None:
            d["pattern"] = self.pattern.tolist()
        if self.kind == BLEND:
            d["blend_alpha"] = self.blend_alpha
        if self.kind == PATCH:
            d["patch_origin"] = list(self.patch_origin)
        if self.kind == SIGNAL:
            d["signal_amplitude"] = self.signal_amplitude
            d["signal_frequency"] = self.signal_frequency
        if self.image_shape is not None:
            d["image_shape"] = list(self.image_shape)
        return d

    @staticmethod
    def from_dict(d: dict) -> "TriggerSpec":
        return TriggerSpec(
            kind=d["kind"],
            pattern=None if d.get("pattern") is None else np.array(d["pattern"]),
            blend_alpha=float(d.get("blend_alpha", 0.1)),
            patch_origin=tuple(d.get("patch_origin", (0, 0))),
            signal_amplitude=float(d.get("signal_amplitude", 0.0)),
            signal_frequency=int(d.get("signal_frequency", 1)),
            image_shape=None if d.get("image_shape") is None
            else tuple(d["image_shape"]),
        )


def default_patch(image_shape: tuple[int, int]) -> TriggerSpec:
    """3x3 all-ones block at the bottom-right corner."""
    rows, cols = image_shape
    size = min(3, rows, cols)
    return TriggerSpec(kind=PATCH, pattern=np.ones((size, size)),
                       patch_origin=(rows - size, cols - size),
                       image_shape=image_shape)


def patch_pattern_from_csv(path) -> np.ndarray:
    """Load a patch block from a CSV grid of values in [0, 1]."""
    grid = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    return grid


@dataclass(frozen=True)
class LabelMode:
    """Poisoned-label regime: fixed target, shift-by-one, or unchanged."""

    mode: str
    target: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown label mode {self.mode!r}")
        if self.mode in (ALL_TO_ONE, CLEAN_LABEL) and self.target is None:
            raise ValueError(f"{self.mode} needs a target class")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "target": self.target}

    @staticmethod
    def from_dict(d: dict) -> "LabelMode":
        t = d.get("target")
        return LabelMode(mode=d["mode"], target=None if t is None else int(t))


def _grid_shape(spec: TriggerSpec, dim: int) -> tuple[int, int]:
    shape = spec.image_shape if spec.image_shape is not None else (1, dim)
    if shape[0] * shape[1] != dim:
        raise DimensionMismatchError(
            f"image_shape {shape} does not cover {dim} features")
    return shape


def fuse_batch(X: np.ndarray, spec: TriggerSpec) -> np.ndarray:
    """Apply the fusion operator row-wise; output clipped to [0,1]."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    d = X.shape[1]
    if spec.kind == BLEND:
        if spec.pattern.shape != (d,):
            raise DimensionMismatchError(
                f"blend pattern of length {spec.pattern.size} vs input dim {d}")
        out = (1.0 - spec.blend_alpha) * X + spec.blend_alpha * spec.pattern
    elif spec.kind == PATCH:
        rows, cols = _grid_shape(spec, d)
        imgs = X.reshape(X.shape[0], rows, cols).copy()
        r0, c0 = spec.patch_origin
        pr, pc = spec.pattern.shape
        imgs[:, r0:r0 + pr, c0:c0 + pc] = spec.pattern
        out = imgs.reshape(X.shape[0], d)
    else:
        rows, cols = _grid_shape(spec, d)
        c = np.arange(cols)
        wave = np.sin(2.0 * np.pi * spec.signal_frequency * c / cols)
        out = X + spec.signal_amplitude * np.tile(wave, rows)
    return np.clip(out, 0.0, 1.0)


def fuse(x: np.ndarray, spec: TriggerSpec) -> np.ndarray:
    """Fuse the trigger into a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError("fuse expects a 1-D feature vector")
    return fuse_batch(x[None, :], spec)[0]


def map_label(y: int, num_classes: int, mode: LabelMode) -> int:
    """Poisoned label for a sample of true class y."""
    if y >= num_classes:
        raise ValueError(f"label {y} >= {num_classes}")
    if mode.mode == ALL_TO_ONE:
        return int(mode.target)
    if mode.mode == ALL_TO_ALL:
        return (y + 1) % num_classes
    return int(y)


def map_labels(ys: np.ndarray, num_classes: int, mode: LabelMode) -> np.ndarray:
    ys = np.asarray(ys, dtype=np.int64)
    if mode.mode == ALL_TO_ONE:
        return np.full_like(ys, mode.target)
    if mode.mode == ALL_TO_ALL:
        return (ys + 1) % num_classes
    return ys.copy()
