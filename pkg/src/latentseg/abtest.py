"""Stratified A/B campaign simulation.

Control is a uniform random sample per stratum; treatment is the top-scored
customers from the remaining pool of the same stratum, so both arms have
identical stratum counts. Both arms are exposed, so any difference in
conversion comes from who was selected.

Outcomes are drawn visit-then-convert from per-customer ground-truth
probabilities. The visit mechanism is a modelling assumption.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import ChurnStatus, Dataset, LatentIntent, SegmentLabel

CONTROL = "control"
TREATMENT = "treatment"
ALL = "all"


@dataclass(frozen=True)
class ConversionParams:
    """Visit probability and conversion-given-visit probability per customer type, under exposure."""

    prompted_visit: float = 0.95
    prompted_convert: float = 0.05
    organic_visit: float = 0.85
    organic_convert: float = 0.015
    inactive_visit: float = 0.5
    inactive_convert: float = 0.002
    # applies to prompted customers only when not exposed
    prompted_unexposed_convert: float = 0.0


@dataclass(frozen=True)
class ConversionModel:
    visit_prob: np.ndarray
    convert_prob: np.ndarray


def conversion_model(ds: Dataset, params: ConversionParams = ConversionParams(),
                     exposed: bool = True) -> ConversionModel:
    """Ground-truth outcome probabilities aligned with ``ds`` rows."""
    if not ds.has_intent:
        raise ValueError("conversion model needs known latent intent")
    prompted = ds.latent_intent == LatentIntent.PROMPTED
    inactive = (ds.segment == SegmentLabel.INACTIVE) & ~prompted
    visit = np.where(prompted, params.prompted_visit,
                     np.where(inactive, params.inactive_visit, params.organic_visit))
    p_conv = params.prompted_convert if exposed else params.prompted_unexposed_convert
    conv = np.where(prompted, p_conv,
                    np.where(inactive, params.inactive_convert, params.organic_convert))
    return ConversionModel(visit.astype(np.float64), conv.astype(np.float64))


def stratified_split(ids, strata, arm_sizes: dict, seed: int):
    """(control ids, treatment candidate pool ids); control is drawn without replacement per stratum."""
    ids = np.asarray(ids, dtype=np.int64)
    strata = np.asarray(strata)
    rng = np.random.default_rng(seed)
    control, pool = [], []
    for s in sorted(arm_sizes):
        k = int(arm_sizes[s])
        members = ids[strata == s]
        if k < 0 or k > members.size:
            raise ValueError(f"arm size {k} infeasible for stratum {s!r} of size {members.size}")
        chosen = rng.choice(members.size, size=k, replace=False)
        mask = np.zeros(members.size, dtype=bool)
        mask[chosen] = True
        control.append(np.sort(members[mask]))
        pool.append(members[~mask])
    return np.concatenate(control or [np.zeros(0, np.int64)]), np.concatenate(pool or [np.zeros(0, np.int64)])


def select_treatment(pool_ids, pool_strata, pool_scores, arm_sizes: dict, exclude=()):
    """Top-k by score within each stratum, ties by ascending id."""
    pool_ids = np.asarray(pool_ids, dtype=np.int64)
    pool_strata = np.asarray(pool_strata)
    pool_scores = np.asarray(pool_scores, dtype=np.float64)
    if not (pool_ids.shape == pool_strata.shape == pool_scores.shape):
        raise ValueError("scores must cover the pool")
    exclude = np.asarray(exclude, dtype=np.int64)
    out = []
    for s in sorted(arm_sizes):
        k = int(arm_sizes[s])
        m = (pool_strata == s) & ~np.isin(pool_ids, exclude)
        ids_s, sc_s = pool_ids[m], pool_scores[m]
        if k > ids_s.size:
            raise ValueError(f"pool for stratum {s!r} has {ids_s.size} customers, need {k}")
        order = np.lexsort((ids_s, -sc_s))
        out.append(ids_s[order[:k]])
    return np.concatenate(out or [np.zeros(0, np.int64)])


def two_proportion_pvalue(x1: int, n1: int, x2: int, n2: int) -> float:
    """Two-sided pooled two-proportion z-test."""
    if n1 == 0 or n2 == 0:
        return float("nan")
    pooled = (x1 + x2) / (n1 + n2)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    if se == 0:
        return 1.0
    z = (x2 / n2 - x1 / n1) / se
    return math.erfc(abs(z) / math.sqrt(2))


def _lift(treat, control):
    return treat / control - 1 if control > 0 else float("nan")


@dataclass(frozen=True)
class ArmStats:
    group: str
    stratum: str
    user_count: int
    visits: int
    conversions: int

    @property
    def site_visit_rate(self) -> float:
        return self.visits / self.user_count if self.user_count else 0.0

    @property
    def conversion_rate(self) -> float:
        return self.conversions / self.user_count if self.user_count else 0.0


@dataclass
class ABTestReport:
    arms: list
    lifts: dict = field(default_factory=dict)
    p_values: dict = field(default_factory=dict)

    def arm(self, group: str, stratum: str = ALL) -> ArmStats:
        for a in self.arms:
            if a.group == group and a.stratum == stratum:
                return a
        raise KeyError((group, stratum))

    @property
    def p_value(self) -> float:
        return self.p_values[ALL]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "stratum", "user_count", "site_visit_rate", "conversion_rate"])
            for a in self.arms:
                w.writerow([a.group, a.stratum, a.user_count, repr(a.site_visit_rate),
                            repr(a.conversion_rate)])
            for s, lift in self.lifts.items():
                w.writerow(["lift", s, "", repr(lift["site_visit"]), repr(lift["conversion"])])
            for s, p in self.p_values.items():
                w.writerow(["p_value", s, "", "", repr(p)])

    def format_table(self) -> str:
        """Rates as percentages rounded to 2 decimals; lifts from unrounded rates."""
        lines = [f"{'group':<10}{'stratum':<9}{'users':>9}{'%visit':>9}{'%conv':>9}"]
        for a in self.arms:
            lines.append(f"{a.group:<10}{a.stratum:<9}{a.user_count:>9}"
                         f"{100 * a.site_visit_rate:>8.2f}%{100 * a.conversion_rate:>8.2f}%")
        for s, lift in self.lifts.items():
            lines.append(f"{'lift':<10}{s:<9}{'':>9}{100 * lift['site_visit']:>8.2f}%"
                         f"{100 * lift['conversion']:>8.2f}%  p={self.p_values[s]:.3g}")
        return "\n".join(lines)


def churn_strata(ds: Dataset) -> np.ndarray:
    names = np.array([c.name.lower() for c in ChurnStatus], dtype=object)
    return names[ds.churn_status]


def simulate_campaign(ds: Dataset, control, treatment, model: ConversionModel, seed: int,
                      strata=None) -> ABTestReport:
    """Draw visit and conversion outcomes for both arms and aggregate per stratum.

    ``strata`` defaults to the churn status of each customer.
    """
    control = np.asarray(control, dtype=np.int64)
    treatment = np.asarray(treatment, dtype=np.int64)
    if np.intersect1d(control, treatment).size:
        raise ValueError("control and treatment arms overlap")
    if strata is None:
        strata = churn_strata(ds)
    strata = np.asarray(strata, dtype=object)
    rng = np.random.default_rng(seed)
    outcomes = {}
    for group, arm in ((CONTROL, control), (TREATMENT, treatment)):
        rows = ds.positions(arm)
        visit = rng.random(rows.size) < model.visit_prob[rows]
        conv = visit & (rng.random(rows.size) < model.convert_prob[rows])
        outcomes[group] = (strata[rows], visit, conv)

    names = sorted(set(strata[ds.positions(np.concatenate([control, treatment]))].tolist()))
    arms, lifts, pvals = [], {}, {}
    for s in [*names, ALL]:
        stats = {}
        for group in (CONTROL, TREATMENT):
            st, visit, conv = outcomes[group]
            m = np.ones(st.size, bool) if s == ALL else st == s
            stats[group] = ArmStats(group, s, int(m.sum()), int(visit[m].sum()), int(conv[m].sum()))
            arms.append(stats[group])
        c, t = stats[CONTROL], stats[TREATMENT]
        lifts[s] = {"site_visit": _lift(t.site_visit_rate, c.site_visit_rate),
                    "conversion": _lift(t.conversion_rate, c.conversion_rate)}
        pvals[s] = two_proportion_pvalue(c.conversions, c.user_count, t.conversions, t.user_count)
    return ABTestReport(arms, lifts, pvals)


def run_ab_test(ds: Dataset, scores, arm_sizes: dict, seed: int,
                params: ConversionParams = ConversionParams()) -> ABTestReport:
    """Split, select and simulate in one call; ``scores`` aligned with ``ds`` rows.

    Customers without a stage-2 score should carry ``-inf`` so they rank last.
    """
    strata = churn_strata(ds)
    control, pool = stratified_split(ds.ids, strata, arm_sizes, seed)
    pos = ds.positions(pool)
    treatment = select_treatment(pool, strata[pos], np.asarray(scores)[pos], arm_sizes)
    return simulate_campaign(ds, control, treatment, conversion_model(ds, params),
                             seed + 1, strata=strata)
