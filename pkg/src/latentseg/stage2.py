"""Stage 2: binary intent classifier trained with self-paced loss correction.

Initial labels come from behaviour (Engaged -> 1, Unengaged -> 0), so some
positives are organic customers carrying the wrong label. During training a
positive whose predicted probability is at or below ``tau`` is charged the
negative-label loss instead, which stops the model from fitting those points.
The branch is decided on each forward pass and is not differentiated.

Losses here are positive numbers (the negated log-likelihood terms).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from . import _kernels
from .domain import Dataset
from .stage1 import ModelFormatError

EPS = 1e-12
BCE_TAU = -1.0  # kernel sentinel: no correction


@dataclass
class Stage2Model:
    v: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        self.v = np.ascontiguousarray(self.v, dtype=np.float64)
        self.b = float(self.b)

    @property
    def feature_dim(self) -> int:
        return self.v.shape[0]

    def save(self, path) -> None:
        vals = [*self.v.tolist(), self.b]
        Path(path).write_text(f"{self.feature_dim}\n" + "".join(f"{x!r}\n" for x in vals),
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Stage2Model":
        try:
            tokens = Path(path).read_text(encoding="utf-8").split()
            d = int(tokens[0])
            vals = np.array([float(x) for x in tokens[1:]])
            if vals.size != d + 1:
                raise ValueError(f"expected {d + 1} values, found {vals.size}")
            if not np.all(np.isfinite(vals)):
                raise ValueError("non-finite parameter")
        except (OSError, IndexError, ValueError) as exc:
            raise ModelFormatError(f"cannot load stage-2 model {path}: {exc}") from None
        return cls(vals[:d], vals[d])

    def __eq__(self, other):
        if not isinstance(other, Stage2Model):
            return NotImplemented
        return np.array_equal(self.v, other.v) and self.b == other.b


@dataclass(frozen=True)
class LinearRamp:
    """Threshold rises linearly from ``start`` to the target tau over ``ramp_epochs``."""

    start: float
    ramp_epochs: int


TauSchedule = Union[str, LinearRamp]


@dataclass(frozen=True)
class SplcConfig:
    tau: float = 0.5
    warmup_epochs: int = 5
    epochs: int = 60
    learning_rate: float = 0.1
    batch_size: int = 256
    seed: int = 0
    tau_schedule: TauSchedule = "constant"
    sticky: bool = False
    l2: float = 0.0

    def validate(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValueError("warmup_epochs must satisfy 0 <= warmup_epochs < epochs")
        if not self.learning_rate > 0 or self.batch_size < 1 or self.l2 < 0:
            raise ValueError("learning_rate > 0, batch_size >= 1 and l2 >= 0 required")
        if isinstance(self.tau_schedule, LinearRamp):
            if not 0.0 < self.tau_schedule.start < 1.0 or self.tau_schedule.ramp_epochs < 1:
                raise ValueError("LinearRamp needs start in (0, 1) and ramp_epochs >= 1")
        elif self.tau_schedule != "constant":
            raise ValueError(f"unknown tau_schedule {self.tau_schedule!r}")

    def tau_at(self, epoch: int) -> float:
        """Threshold in effect for ``epoch`` (0-based); negative during warm-up."""
        if epoch < self.warmup_epochs:
            return BCE_TAU
        sched = self.tau_schedule
        if isinstance(sched, LinearRamp):
            frac = min(1.0, (epoch - self.warmup_epochs) / sched.ramp_epochs)
            return sched.start + (self.tau - sched.start) * frac
        return self.tau


def parse_tau_schedule(text: str) -> TauSchedule:
    """``constant`` or ``ramp:<start>:<epochs>``."""
    text = text.strip()
    if text == "constant":
        return "constant"
    if text.startswith("ramp:"):
        _, start, n = text.split(":")
        return LinearRamp(float(start), int(n))
    raise ValueError(f"unknown tau schedule {text!r}")


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_forward(model: Stage2Model, x) -> Union[float, np.ndarray]:
    """Probability of prompted intent, clamped to [1e-12, 1 - 1e-12]."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.feature_dim:
        raise ValueError(f"feature dimension {x.shape[-1]} does not match model dimension {model.feature_dim}")
    p = np.clip(sigmoid(x @ model.v + model.b), EPS, 1.0 - EPS)
    return float(p) if p.ndim == 0 else p


def splc_sample_loss(p, label, tau):
    """Per-sample SPLC loss; vectorised over ``p`` and ``label``."""
    p = np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)
    label = np.asarray(label)
    keep = (label == 1) & (p > tau)
    out = np.where(keep, -np.log(p), -np.log(1.0 - p))
    return float(out) if out.ndim == 0 else out


def bce_sample_loss(p, label):
    p = np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)
    y = np.asarray(label, dtype=np.float64)
    out = y * -np.log(p) + (1.0 - y) * -np.log(1.0 - p)
    return float(out) if out.ndim == 0 else out


def splc_logit_grad(p, label, tau):
    """d(loss)/d(logit): p - 1 for an uncorrected positive, p otherwise."""
    p = np.asarray(p, dtype=np.float64)
    keep = (np.asarray(label) == 1) & (p > tau)
    return np.where(keep, p - 1.0, p)


def splc_batch_gradient(model: Stage2Model, X, y, tau, kernels=None):
    """(mean loss, d mean / dv, d mean / db) over a batch."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).ravel()
    if y.size == 0:
        raise ValueError("batch must be nonempty")
    k = kernels or _kernels
    loss, gv, gb, _ = k.splc_batch(X, y, model.v, model.b, tau, np.zeros(y.size, np.uint8))
    n = y.size
    return loss / n, gv / n, gb / n


@dataclass
class LabelCorrectionReport:
    ids: np.ndarray
    initial_label: np.ndarray
    p: np.ndarray
    corrected: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "initial_label", "p", "corrected"])
            for row in zip(self.ids.tolist(), self.initial_label.tolist(),
                           self.p.tolist(), self.corrected.tolist()):
                w.writerow([row[0], row[1], repr(row[2]), int(row[3])])

    @classmethod
    def read_csv(cls, path) -> "LabelCorrectionReport":
        ids, lab, p, cor = [], [], [], []
        with open(path, newline="", encoding="utf-8") as fh:
            r = csv.reader(fh)
            if next(r, None) != ["id", "initial_label", "p", "corrected"]:
                raise ValueError(f"{path}: bad header")
            for row in r:
                ids.append(int(row[0]))
                lab.append(int(row[1]))
                p.append(float(row[2]))
                cor.append(row[3] == "1")
        return cls(np.array(ids, np.int64), np.array(lab, np.int64), np.array(p), np.array(cor, bool))

    def __eq__(self, other):
        if not isinstance(other, LabelCorrectionReport):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("ids", "initial_label", "p", "corrected"))


@dataclass
class Stage2Result:
    model: Stage2Model
    report: LabelCorrectionReport
    history: list


def _training_arrays(ds: Dataset, ids, labels):
    ids = np.asarray(ids, dtype=np.int64)
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if ids.shape != y.shape:
        raise ValueError("ids and labels differ in length")
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("stage-2 training needs both positive and negative labels")
    X = np.ascontiguousarray(ds.features[ds.positions(ids)])
    return ids, X, y


def train_stage2(ds: Dataset, ids, labels, cfg: SplcConfig, kernels=None) -> Stage2Result:
    """Train on initial labels for ``ids``; the report flags positives corrected at the end."""
    cfg.validate()
    k = kernels or _kernels
    ids, X, y = _training_arrays(ds, ids, labels)
    n, d = X.shape
    v = np.zeros(d)
    b = np.zeros(1)
    flipped = np.zeros(n, dtype=np.uint8)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n).astype(np.int64)
        total = k.splc_epoch(X, y, v, b, order, cfg.batch_size, cfg.learning_rate,
                             cfg.l2, cfg.tau_at(epoch), flipped, cfg.sticky)
        history.append(total / n)
    model = Stage2Model(v, b[0])
    p = sigmoid_forward(model, X)
    p = np.atleast_1d(p)
    final_tau = cfg.tau_at(cfg.epochs - 1)
    corrected = (y == 1) & ((p <= final_tau) | (flipped != 0))
    report = LabelCorrectionReport(ids.copy(), y.copy(), p, corrected)
    return Stage2Result(model, report, history)


def train_plain_bce(ds: Dataset, ids, labels, cfg: SplcConfig):
    """Reference trainer: same schedule and batches, uncorrected BCE, pure numpy.

    Returns (model, per-epoch mean loss). Kept separate from the kernels so it
    can serve as an independent check of the SPLC trainer.
    """
    cfg.validate()
    ids, X, y = _training_arrays(ds, ids, labels)
    n, d = X.shape
    v = np.zeros(d)
    b = 0.0
    rng = np.random.default_rng(cfg.seed)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            Xb, yb = X[idx], y[idx]
            p = sigmoid(Xb @ v + b)
            total += float(np.sum(bce_sample_loss(p, yb)))
            r = p - yb
            v = v - cfg.learning_rate * (Xb.T @ r / idx.size + cfg.l2 * v)
            b = b - cfg.learning_rate * (r.sum() / idx.size)
        history.append(total / n)
    return Stage2Model(v, b), history


def score_customers(model: Stage2Model, ds: Dataset, ids=None):
    """(ids, scores) sorted by descending score, ties by ascending id."""
    ids = ds.ids if ids is None else np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        return np.zeros(0, np.int64), np.zeros(0)
    p = np.atleast_1d(sigmoid_forward(model, ds.features[ds.positions(ids)]))
    order = np.lexsort((ids, -p))
    return ids[order].copy(), p[order]


def read_scores_csv(path):
    ids, scores = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        if next(r, None) != ["id", "score"]:
            raise ValueError(f"{path}: bad header, expected id,score")
        for row in r:
            ids.append(int(row[0]))
            scores.append(float(row[1]))
    return np.array(ids, np.int64), np.array(scores)


def write_scores_csv(ids, scores, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "score"])
        for i, s in zip(np.asarray(ids).tolist(), np.asarray(scores).tolist()):
            w.writerow([i, repr(s)])
