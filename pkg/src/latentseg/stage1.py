"""Stage 1: linear-softmax behaviour classifier trained on weighted CCE.

Its job is to screen out customers likely to be Inactive before intent
scoring. The loss function returns the summed form; training minimises the
per-sample mean so the learning rate does not depend on batch size.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import _kernels
from .domain import N_CLASSES, Dataset, SegmentLabel

EPS = 1e-12

WeightMode = Union[str, Sequence[float]]


class ModelFormatError(ValueError):
    """A serialized model file could not be parsed."""


@dataclass
class Stage1Model:
    W: np.ndarray
    b: np.ndarray
    class_weights: np.ndarray = field(default_factory=lambda: np.ones(N_CLASSES))

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        self.class_weights = np.ascontiguousarray(self.class_weights, dtype=np.float64)
        C = self.W.shape[0]
        if self.W.ndim != 2 or self.b.shape != (C,) or self.class_weights.shape != (C,):
            raise ValueError("inconsistent stage-1 parameter shapes")

    @property
    def feature_dim(self) -> int:
        return self.W.shape[1]

    @classmethod
    def zeros(cls, d: int, class_weights=None) -> "Stage1Model":
        cw = np.ones(N_CLASSES) if class_weights is None else class_weights
        return cls(np.zeros((N_CLASSES, d)), np.zeros(N_CLASSES), cw)

    def save(self, path) -> None:
        C, d = self.W.shape
        vals = [*self.W.ravel().tolist(), *self.b.tolist(), *self.class_weights.tolist()]
        Path(path).write_text(f"{C} {d}\n" + "".join(f"{v!r}\n" for v in vals), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Stage1Model":
        try:
            lines = Path(path).read_text(encoding="utf-8").split()
            C, d = int(lines[0]), int(lines[1])
            vals = np.array([float(x) for x in lines[2:]])
            if vals.size != C * d + 2 * C:
                raise ValueError(f"expected {C * d + 2 * C} values, found {vals.size}")
            if not np.all(np.isfinite(vals)):
                raise ValueError("non-finite parameter")
        except (OSError, IndexError, ValueError) as exc:
            raise ModelFormatError(f"cannot load stage-1 model {path}: {exc}") from None
        return cls(vals[:C * d].reshape(C, d), vals[C * d:C * d + C], vals[C * d + C:])

    def __eq__(self, other):
        if not isinstance(other, Stage1Model):
            return NotImplemented
        return (np.array_equal(self.W, other.W) and np.array_equal(self.b, other.b)
                and np.array_equal(self.class_weights, other.class_weights))


@dataclass(frozen=True)
class Stage1TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 256
    seed: int = 0
    weight_mode: WeightMode = "inverse_frequency"
    l2: float = 0.0

    def validate(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        if isinstance(self.weight_mode, str):
            if self.weight_mode not in ("uniform", "inverse_frequency"):
                raise ValueError(f"unknown weight_mode {self.weight_mode!r}")
        elif len(self.weight_mode) != N_CLASSES or min(self.weight_mode) <= 0:
            raise ValueError("explicit class weights need 3 positive entries")


def _check_dim(model, X):
    if X.shape[-1] != model.feature_dim:
        raise ValueError(f"feature dimension {X.shape[-1]} does not match model dimension {model.feature_dim}")


def softmax_forward(model: Stage1Model, x) -> np.ndarray:
    """Class probabilities for one feature vector (1-D) or a batch (2-D)."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(model, x)
    z = x @ model.W.T + model.b
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def weighted_cce_loss(probs, labels, weights) -> float:
    """Summed weighted categorical cross-entropy over samples."""
    P = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64).ravel()
    if y.size == 0:
        raise ValueError("weighted_cce_loss needs at least one sample")
    if P.shape[0] != y.size:
        raise ValueError("probs and labels differ in length")
    w = np.asarray(weights, dtype=np.float64)
    py = np.clip(P[np.arange(y.size), y], EPS, 1.0 - EPS)
    return float(np.sum(w[y] * -np.log(py)))


def class_weights_from_frequencies(labels) -> np.ndarray:
    """Inverse-frequency weights N / (C * n_c); balanced labels give all ones."""
    y = np.asarray(labels, dtype=np.int64).ravel()
    counts = np.bincount(y, minlength=N_CLASSES)
    missing = [SegmentLabel(c).name.capitalize() for c in range(N_CLASSES) if counts[c] == 0]
    if missing:
        raise ValueError(f"class(es) absent from labels: {', '.join(missing)}")
    return y.size / (N_CLASSES * counts.astype(np.float64))


def resolve_class_weights(labels, mode: WeightMode) -> np.ndarray:
    if isinstance(mode, str):
        if mode == "uniform":
            return np.ones(N_CLASSES)
        if mode == "inverse_frequency":
            return class_weights_from_frequencies(labels)
        raise ValueError(f"unknown weight_mode {mode!r}")
    return np.asarray(mode, dtype=np.float64)


def mean_loss_and_grad(model: Stage1Model, X, y):
    """Mean weighted CCE and its gradient w.r.t. (W, b) at ``model``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    loss, gW, gb = _kernels.softmax_cce_batch(X, y, model.W, model.b, model.class_weights)
    n = X.shape[0]
    return loss / n, gW / n, gb / n


def train_stage1(ds: Dataset, cfg: Stage1TrainConfig, kernels=None):
    """Minibatch gradient descent from zero init; returns (model, per-epoch mean loss)."""
    cfg.validate()
    k = kernels or _kernels
    y = np.ascontiguousarray(ds.segment, dtype=np.int64)
    X = np.ascontiguousarray(ds.features, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    cw = resolve_class_weights(y, cfg.weight_mode)
    model = Stage1Model.zeros(ds.feature_dim, cw)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(X.shape[0]).astype(np.int64)
        total = k.softmax_epoch(X, y, model.W, model.b, model.class_weights, order,
                                cfg.batch_size, cfg.learning_rate, cfg.l2)
        history.append(total / X.shape[0])
    return model, history


@dataclass(frozen=True)
class InactiveProbBelow:
    """Keep customers whose predicted Inactive probability is below ``threshold``."""

    threshold: float

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")


ARGMAX_NOT_INACTIVE = "argmax"


def active_mask(probs: np.ndarray, policy=ARGMAX_NOT_INACTIVE) -> np.ndarray:
    if isinstance(policy, InactiveProbBelow):
        return probs[:, SegmentLabel.INACTIVE] < policy.threshold
    if policy == ARGMAX_NOT_INACTIVE:
        # np.argmax returns the first maximum, i.e. ties go to the lower class index
        return np.argmax(probs, axis=1) != SegmentLabel.INACTIVE
    raise ValueError(f"unknown filter policy {policy!r}")


def filter_active(model: Stage1Model, ds: Dataset, policy=ARGMAX_NOT_INACTIVE) -> np.ndarray:
    """Ids of customers that pass the stage-1 activity filter, in dataset order."""
    probs = softmax_forward(model, ds.features) if ds.n else np.zeros((0, N_CLASSES))
    return ds.ids[active_mask(probs, policy)].copy()


def parse_filter_policy(text: str):
    """``argmax`` or ``inactive_below:<t>``."""
    text = text.strip()
    if text == ARGMAX_NOT_INACTIVE:
        return ARGMAX_NOT_INACTIVE
    if text.startswith("inactive_below:"):
        return InactiveProbBelow(float(text.split(":", 1)[1]))
    raise ValueError(f"unknown filter policy {text!r}")
