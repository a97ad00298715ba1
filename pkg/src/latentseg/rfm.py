"""Recency / frequency / monetary baseline segmentation.

Each raw metric is converted to a quintile score 1..5 (5 is best) using the
population's 20/40/60/80th percentiles (numpy's default linear
interpolation). A value equal to a boundary gets the lower score. Named
segments come from an ordered rule grid; the default grid is a common
convention, not a reproduction of any particular production segmentation.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .domain import Dataset

OTHERS = "Others"
_PCTS = (20, 40, 60, 80)


@dataclass
class RfmTable:
    ids: np.ndarray
    recency_days: np.ndarray
    frequency: np.ndarray
    monetary: np.ndarray
    r: np.ndarray
    f: np.ndarray
    m: np.ndarray

    def __len__(self):
        return len(self.ids)

    def row(self, i: int) -> "RfmScore":
        return RfmScore(int(self.ids[i]), int(self.r[i]), int(self.f[i]), int(self.m[i]),
                        int(self.recency_days[i]), int(self.frequency[i]), float(self.monetary[i]))


@dataclass(frozen=True)
class RfmScore:
    customer_id: int
    r: int
    f: int
    m: int
    recency_days: int = 0
    frequency_count: int = 0
    monetary_total: float = 0.0


@dataclass(frozen=True)
class RfmRule:
    name: str
    r_min: int = 1
    f_min: int = 1
    f_max: int = 5
    m_min: int = 1

    def matches(self, r, f, m):
        return (r >= self.r_min) & (f >= self.f_min) & (f <= self.f_max) & (m >= self.m_min)


DEFAULT_RULES = (
    RfmRule("Champions", r_min=4, f_min=4, m_min=4),
    RfmRule("LoyalCustomers", r_min=3, f_min=4),
    RfmRule("PotentialLoyalists", r_min=4, f_min=2, f_max=3),
)


def _boundary_tests(values, pct):
    """``(values > q, values < q)`` for the linear-interpolated ``pct`` percentile q.

    Evaluated through order statistics, so results depend only on the
    ordering of ``values`` (exactly invariant under monotone rescaling).
    """
    xs = np.sort(values)
    n = xs.size
    j, rem = divmod(pct * (n - 1), 100)
    lo = xs[j]
    hi = xs[min(j + 1, n - 1)]
    if rem and lo < hi:
        # lo < q < hi strictly
        return values >= hi, values <= lo
    return values > lo, values < lo


def quintile_scores(values, higher_is_better=True) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    score = np.ones(values.size, dtype=np.int64)
    for pct in _PCTS:
        above, below = _boundary_tests(values, pct)
        score += above if higher_is_better else below
    return score


def rfm_scores(ds: Dataset, as_of_day: int | None = None) -> RfmTable:
    """Raw RFM metrics and quintile scores for every customer in ``ds``.

    Customers without transactions get recency ``as_of_day + 1``. A
    one-customer population scores 5/5/5 if that customer has transactions.
    """
    if ds.n == 0:
        raise ValueError("rfm_scores needs a nonempty population")
    as_of = ds.epoch_day if as_of_day is None else int(as_of_day)
    if len(ds.txn_day) and ds.txn_day.max() > as_of:
        raise ValueError(f"as_of_day {as_of} precedes the last transaction day {ds.txn_day.max()}")
    rows = ds.positions(ds.txn_customer)
    freq = np.bincount(rows, minlength=ds.n).astype(np.int64)
    money = np.bincount(rows, weights=ds.txn_amount, minlength=ds.n)
    last = np.full(ds.n, -1, dtype=np.int64)
    np.maximum.at(last, rows, ds.txn_day)
    recency = np.where(freq > 0, as_of - last, as_of + 1)
    if ds.n == 1:
        s = np.array([5 if freq[0] > 0 else 1])
        r = f = m = s
    else:
        r = quintile_scores(recency, higher_is_better=False)
        f = quintile_scores(freq)
        m = quintile_scores(money)
    return RfmTable(ds.ids.copy(), recency, freq, money, r.astype(np.int64),
                    f.astype(np.int64), m.astype(np.int64))


def segment_names(rules=DEFAULT_RULES) -> list[str]:
    return [rule.name for rule in rules] + [OTHERS]


def rfm_segment(score, rules=DEFAULT_RULES) -> str:
    """Segment name for one score (first matching rule wins)."""
    for rule in rules:
        if rule.matches(score.r, score.f, score.m):
            return rule.name
    return OTHERS


def assign_segments(table: RfmTable, rules=DEFAULT_RULES) -> np.ndarray:
    """Vectorised :func:`rfm_segment` over a table; returns an object array of names."""
    out = np.full(len(table), OTHERS, dtype=object)
    unassigned = np.ones(len(table), dtype=bool)
    for rule in rules:
        hit = unassigned & rule.matches(table.r, table.f, table.m)
        out[hit] = rule.name
        unassigned &= ~hit
    return out


def rfm_as_binary_predictor(segments, target: str, rules=DEFAULT_RULES) -> np.ndarray:
    if target not in segment_names(rules):
        raise ValueError(f"unknown RFM segment {target!r}")
    return (np.asarray(segments, dtype=object) == target).astype(np.int64)


def parse_rules(text: str) -> tuple[RfmRule, ...]:
    """Rules file: one ``name: r_min,f_min,m_min`` row per segment, in priority order.

    The frequency field may be a range ``lo-hi``.
    """
    rules = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            name, body = (s.strip() for s in line.split(":", 1))
            r_s, f_s, m_s = (s.strip() for s in body.split(","))
            if "-" in f_s:
                lo, hi = (int(x) for x in f_s.split("-"))
            else:
                lo, hi = int(f_s), 5
            rule = RfmRule(name, int(r_s), lo, hi, int(m_s))
        except ValueError:
            raise ValueError(f"rules line {lineno}: expected 'name: r_min,f_min|f_lo-f_hi,m_min'") from None
        if name == OTHERS:
            raise ValueError(f"rules line {lineno}: {OTHERS} is the implicit fallback segment")
        rules.append(rule)
    if not rules:
        raise ValueError("rules file defines no segments")
    return tuple(rules)


def load_rules(path) -> tuple[RfmRule, ...]:
    with open(path, encoding="utf-8") as fh:
        return parse_rules(fh.read())


def write_rfm_csv(table: RfmTable, segments, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "recency_days", "frequency", "monetary", "r", "f", "m", "segment"])
        for i in range(len(table)):
            w.writerow([int(table.ids[i]), int(table.recency_days[i]), int(table.frequency[i]),
                        repr(float(table.monetary[i])), int(table.r[i]), int(table.f[i]),
                        int(table.m[i]), segments[i]])
