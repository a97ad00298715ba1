"""Core vocabulary shared by every stage: segments, intents, customers, datasets.

A :class:`Dataset` is stored column-wise in read-only numpy arrays; the
record types (:class:`CustomerRecord`, :class:`Transaction`) are row views
used at the edges (construction, validation messages, tests).
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


class SegmentLabel(enum.IntEnum):
    """Observed behaviour segment; the integer value is the stage-1 class index."""

    ENGAGED = 0
    UNENGAGED = 1
    INACTIVE = 2


class LatentIntent(enum.IntEnum):
    PROMPTED = 0
    ORGANIC = 1


class ChurnStatus(enum.IntEnum):
    NEVER = 0
    CHURNED = 1


UNKNOWN_INTENT = -1
N_CLASSES = len(SegmentLabel)


@dataclass(frozen=True)
class CustomerRecord:
    id: int
    features: tuple[float, ...]
    exposed: bool
    segment: SegmentLabel
    latent_intent: Optional[LatentIntent] = None
    churn_status: ChurnStatus = ChurnStatus.NEVER


@dataclass(frozen=True)
class Transaction:
    customer_id: int
    day: int
    amount: float


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


class Dataset:
    """Column-oriented customer population plus transaction log.

    ``latent_intent`` uses ``-1`` for unknown. ``epoch_day`` is the horizon:
    valid transaction days lie in ``[0, epoch_day]``.
    """

    __slots__ = ("ids", "features", "exposed", "segment", "latent_intent",
                 "churn_status", "txn_customer", "txn_day", "txn_amount",
                 "epoch_day", "_index")

    def __init__(self, ids, features, exposed, segment, latent_intent=None,
                 churn_status=None, txn_customer=(), txn_day=(), txn_amount=(),
                 epoch_day=365, feature_dim=None):
        n = len(ids)
        self.ids = _frozen(ids, np.int64)
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim == 1 and n == 0:
            feats = feats.reshape(0, feature_dim or 0)
        if feats.ndim != 2 or feats.shape[0] != n:
            raise ValueError(f"features must have shape (n, d) with n={n}, got {feats.shape}")
        if feature_dim is not None and feats.shape[1] != feature_dim:
            raise ValueError(f"features have dimension {feats.shape[1]}, expected {feature_dim}")
        self.features = _frozen(feats, np.float64)
        self.exposed = _frozen(exposed, bool)
        self.segment = _frozen(segment, np.int8)
        self.latent_intent = _frozen(
            np.full(n, UNKNOWN_INTENT) if latent_intent is None else latent_intent, np.int8)
        self.churn_status = _frozen(
            np.zeros(n) if churn_status is None else churn_status, np.int8)
        self.txn_customer = _frozen(txn_customer, np.int64)
        self.txn_day = _frozen(txn_day, np.int64)
        self.txn_amount = _frozen(txn_amount, np.float64)
        self.epoch_day = int(epoch_day)
        for name in ("exposed", "segment", "latent_intent", "churn_status"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have length {n}")
        m = len(self.txn_customer)
        if self.txn_day.shape != (m,) or self.txn_amount.shape != (m,):
            raise ValueError("transaction columns must have equal length")
        self._index = None

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def has_intent(self) -> bool:
        return bool(self.n) and bool(np.all(self.latent_intent != UNKNOWN_INTENT))

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.epoch_day == other.epoch_day and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in self.__slots__ if k not in ("epoch_day", "_index"))

    def __repr__(self):
        return (f"Dataset(n={self.n}, d={self.feature_dim}, "
                f"transactions={len(self.txn_customer)}, epoch_day={self.epoch_day})")

    def positions(self, ids) -> np.ndarray:
        """Row positions of ``ids``; raises ``KeyError`` on an unknown id."""
        if self._index is None:
            order = np.argsort(self.ids, kind="stable")
            self._index = (order, self.ids[order])
        order, sorted_ids = self._index
        ids = np.asarray(ids, dtype=np.int64).ravel()
        if sorted_ids.size == 0:
            if ids.size:
                raise KeyError(f"unknown customer id {int(ids[0])}")
            return np.zeros(0, dtype=np.int64)
        j = np.minimum(np.searchsorted(sorted_ids, ids), sorted_ids.size - 1)
        bad = sorted_ids[j] != ids
        if bad.any():
            raise KeyError(f"unknown customer id {int(ids[np.argmax(bad)])}")
        return order[j]

    def subset(self, rows) -> "Dataset":
        """Dataset restricted to the given row positions (or boolean mask)."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        keep = np.isin(self.txn_customer, self.ids[rows])
        return Dataset(self.ids[rows], self.features[rows], self.exposed[rows],
                       self.segment[rows], self.latent_intent[rows],
                       self.churn_status[rows], self.txn_customer[keep],
                       self.txn_day[keep], self.txn_amount[keep], self.epoch_day,
                       feature_dim=self.feature_dim)

    def customers(self) -> list[CustomerRecord]:
        out = []
        for i in range(self.n):
            li = int(self.latent_intent[i])
            out.append(CustomerRecord(
                id=int(self.ids[i]),
                features=tuple(float(x) for x in self.features[i]),
                exposed=bool(self.exposed[i]),
                segment=SegmentLabel(int(self.segment[i])),
                latent_intent=None if li == UNKNOWN_INTENT else LatentIntent(li),
                churn_status=ChurnStatus(int(self.churn_status[i])),
            ))
        return out

    def transactions(self) -> list[Transaction]:
        return [Transaction(int(c), int(d), float(a)) for c, d, a in
                zip(self.txn_customer, self.txn_day, self.txn_amount)]

    @classmethod
    def from_records(cls, customers: Sequence[CustomerRecord],
                     transactions: Iterable[Transaction] = (), feature_dim=None,
                     epoch_day=365) -> "Dataset":
        if feature_dim is None:
            feature_dim = len(customers[0].features) if customers else 0
        txns = list(transactions)
        return cls(
            ids=[c.id for c in customers],
            features=[list(c.features) for c in customers] if customers else np.zeros((0, feature_dim)),
            exposed=[c.exposed for c in customers],
            segment=[int(c.segment) for c in customers],
            latent_intent=[UNKNOWN_INTENT if c.latent_intent is None else int(c.latent_intent)
                           for c in customers],
            churn_status=[int(c.churn_status) for c in customers],
            txn_customer=[t.customer_id for t in txns],
            txn_day=[t.day for t in txns],
            txn_amount=[t.amount for t in txns],
            epoch_day=epoch_day,
            feature_dim=feature_dim,
        )


def validate_dataset(ds: Dataset) -> list[str]:
    """Return one description per broken invariant; empty means valid."""
    problems = []
    seen = set()
    for cid in ds.ids.tolist():
        if cid in seen:
            problems.append(f"customer {cid}: duplicate id")
        seen.add(cid)
    finite = np.isfinite(ds.features).all(axis=1)
    for i in np.flatnonzero(~finite):
        problems.append(f"customer {ds.ids[i]}: non-finite feature value")
    for i in np.flatnonzero((ds.segment < 0) | (ds.segment >= N_CLASSES)):
        problems.append(f"customer {ds.ids[i]}: invalid segment code {ds.segment[i]}")
    bad_intent = ~np.isin(ds.latent_intent, [UNKNOWN_INTENT, *map(int, LatentIntent)])
    for i in np.flatnonzero(bad_intent):
        problems.append(f"customer {ds.ids[i]}: invalid latent intent code {ds.latent_intent[i]}")
    for i in np.flatnonzero(~np.isin(ds.churn_status, list(map(int, ChurnStatus)))):
        problems.append(f"customer {ds.ids[i]}: invalid churn status code {ds.churn_status[i]}")
    for i in np.flatnonzero((ds.segment == SegmentLabel.ENGAGED) & ~ds.exposed):
        problems.append(f"customer {ds.ids[i]}: engaged but not exposed")
    for t in range(len(ds.txn_customer)):
        cid = int(ds.txn_customer[t])
        if cid not in seen:
            problems.append(f"transaction {t}: unknown customer_id {cid}")
        amount = float(ds.txn_amount[t])
        if not (math.isfinite(amount) and amount >= 0):
            problems.append(f"transaction {t} (customer {cid}): invalid amount {amount}")
        day = int(ds.txn_day[t])
        if not 0 <= day <= ds.epoch_day:
            problems.append(f"transaction {t} (customer {cid}): day {day} outside [0, {ds.epoch_day}]")
    return problems


# CSV formats -----------------------------------------------------------------

_SEGMENT_NAMES = {s: s.name.lower() for s in SegmentLabel}
_INTENT_NAMES = {int(i): i.name.lower() for i in LatentIntent} | {UNKNOWN_INTENT: "unknown"}
_CHURN_NAMES = {c: c.name.lower() for c in ChurnStatus}


def _lookup(table, value, what, path, lineno):
    for code, name in table.items():
        if name == value:
            return int(code)
    raise ValueError(f"{path}:{lineno}: unknown {what} {value!r}")


def write_customers_csv(ds: Dataset, path) -> None:
    d = ds.feature_dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "exposed", "churn_status", "segment", "latent_intent",
                    *[f"f{k}" for k in range(d)]])
        feats = ds.features.tolist()
        for i in range(ds.n):
            w.writerow([int(ds.ids[i]), int(ds.exposed[i]),
                        _CHURN_NAMES[ChurnStatus(int(ds.churn_status[i]))],
                        _SEGMENT_NAMES[SegmentLabel(int(ds.segment[i]))],
                        _INTENT_NAMES[int(ds.latent_intent[i])],
                        *map(repr, feats[i])])


def write_transactions_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["customer_id", "day", "amount"])
        for c, d, a in zip(ds.txn_customer.tolist(), ds.txn_day.tolist(), ds.txn_amount.tolist()):
            w.writerow([c, d, repr(a)])


def read_dataset_csv(customers_path, transactions_path=None, epoch_day=365) -> Dataset:
    """Load the customers CSV (and optionally the transactions CSV)."""
    customers_path = Path(customers_path)
    ids, exposed, churn, seg, intent, feats = [], [], [], [], [], []
    with open(customers_path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        fixed = ["id", "exposed", "churn_status", "segment", "latent_intent"]
        if header is None or header[:5] != fixed:
            raise ValueError(f"{customers_path}: bad header, expected {','.join(fixed)},f0,...")
        d = len(header) - 5
        if header[5:] != [f"f{k}" for k in range(d)]:
            raise ValueError(f"{customers_path}: feature columns must be f0..f{d - 1}")
        for lineno, row in enumerate(r, start=2):
            if len(row) != d + 5:
                raise ValueError(f"{customers_path}:{lineno}: expected {d + 5} fields, got {len(row)}")
            ids.append(int(row[0]))
            exposed.append(row[1].strip().lower() in ("1", "true"))
            churn.append(_lookup(_CHURN_NAMES, row[2], "churn_status", customers_path, lineno))
            seg.append(_lookup(_SEGMENT_NAMES, row[3], "segment", customers_path, lineno))
            intent.append(_lookup(_INTENT_NAMES, row[4], "latent_intent", customers_path, lineno))
            feats.append([float(x) for x in row[5:]])
    tc, td, ta = [], [], []
    if transactions_path is not None:
        with open(transactions_path, newline="", encoding="utf-8") as fh:
            r = csv.reader(fh)
            header = next(r, None)
            if header != ["customer_id", "day", "amount"]:
                raise ValueError(f"{transactions_path}: bad header, expected customer_id,day,amount")
            for row in r:
                tc.append(int(row[0]))
                td.append(int(row[1]))
                ta.append(float(row[2]))
    features = np.array(feats, dtype=np.float64).reshape(len(ids), d)
    return Dataset(ids, features, exposed, seg, intent, churn, tc, td, ta,
                   epoch_day=epoch_day, feature_dim=d)
