"""Frozen synthetic benchmarks used by the acceptance suite and the README.

``OFFLINE_GEN`` yields a stage-2 population of about 20k customers in which
30% of the Engaged (positive) customers are organically motivated.
"""
from __future__ import annotations

import dataclasses
import time

import numpy as np

from . import abtest, datagen, stage1, stage2
from .pipeline import default_arm_sizes, offline_comparison, score_dataset

OFFLINE_GEN = datagen.GenConfig(n_customers=25_000, archetype_mix=(0.35, 0.30, 0.15, 0.20),
                                exposure_rate=0.5, feature_separation=2.0, seed=7)
OFFLINE_HOLDOUT_SEED = 1007
OFFLINE_SPLC = stage2.SplcConfig(tau=0.5, warmup_epochs=5, epochs=60, seed=7)

AB_GEN = datagen.GenConfig(n_customers=100_000, seed=2024)
AB_SEED = 1
AB_ARM_FRACTION = 0.1
NULL_REPLICATIONS = 200
NULL_BASE_SEED = 10_000


def correction_rates(report: stage2.LabelCorrectionReport, ds) -> tuple[float, float]:
    """(share of truly organic positives flagged, share of truly prompted positives flagged)."""
    truth = datagen.intent_truth(ds, report.ids)
    pos = report.initial_label == 1
    organic = pos & (truth == 0)
    prompted = pos & (truth == 1)
    return float(report.corrected[organic].mean()), float(report.corrected[prompted].mean())


def run_offline_benchmark(gen=OFFLINE_GEN, splc=OFFLINE_SPLC, holdout_seed=OFFLINE_HOLDOUT_SEED,
                          kernels=None) -> dict:
    t0 = time.perf_counter()
    train = datagen.generate_population(gen)
    ids, labels = datagen.derive_stage2_initial_labels(train)
    result = stage2.train_stage2(train, ids, labels, splc, kernels=kernels)
    recall, false_flip = correction_rates(result.report, train)
    test = datagen.generate_population(dataclasses.replace(gen, seed=holdout_seed))
    rows, _, _ = offline_comparison(test, result.model)
    return {
        "train": train, "test": test, "result": result, "n_stage2": int(ids.size),
        "organic_share": float(1 - datagen.intent_truth(train, ids)[labels == 1].mean()),
        "organic_recall": recall, "prompted_false_flip": false_flip, "rows": rows,
        "seconds": time.perf_counter() - t0,
    }


def train_and_score(ds, s1=stage1.Stage1TrainConfig(), s2=stage2.SplcConfig()):
    """Train both stages on ``ds`` and return A/B selection scores (-inf when filtered)."""
    m1, _ = stage1.train_stage1(ds, s1)
    ids, labels = datagen.derive_stage2_initial_labels(ds)
    m2 = stage2.train_stage2(ds, ids, labels, s2).model
    store = score_dataset(ds, m1, m2, stage1.ARGMAX_NOT_INACTIVE)
    return np.where(store.active, store.stage2_score, -np.inf)


def run_ab_benchmark(gen=AB_GEN, seed=AB_SEED, fraction=AB_ARM_FRACTION):
    ds = datagen.generate_population(gen)
    scores = train_and_score(ds)
    sizes = default_arm_sizes(abtest.churn_strata(ds), fraction)
    return ds, sizes, abtest.run_ab_test(ds, scores, sizes, seed)


def null_rejection_rate(ds, sizes, reps=NULL_REPLICATIONS, base_seed=NULL_BASE_SEED,
                        alpha=0.05) -> float:
    """Share of constant-score replications whose pooled conversion test rejects at ``alpha``."""
    const = np.zeros(ds.n)
    hits = sum(abtest.run_ab_test(ds, const, sizes, base_seed + 2 * r).p_value < alpha
               for r in range(reps))
    return hits / reps
