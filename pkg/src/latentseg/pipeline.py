"""File-based batch pipeline: each deployment hand-off is a file.

generate -> train stage 1 -> train stage 2 -> score (score store) ->
export target list; evaluate / gain curve / A/B simulation read the same files.
Every output is written to a temporary file in the target directory and
renamed into place, so a reader never sees a partial file.
"""
from __future__ import annotations

import contextlib
import csv
import hashlib
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import abtest, datagen, evaluate, rfm, stage1, stage2
from .config import RunConfig
from .domain import N_CLASSES, Dataset, read_dataset_csv, validate_dataset, write_customers_csv, write_transactions_csv

log = logging.getLogger("latentseg")

STORE_HEADER = ["id", "p_engaged", "p_unengaged", "p_inactive", "active",
                "stage2_score", "corrected", "scored_at"]


@contextlib.contextmanager
def atomic_path(path):
    """Yield a temp path next to ``path``; rename it over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _require(path: Path, what: str) -> Path:
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return Path(path)


@dataclass
class ScoreStore:
    ids: np.ndarray
    stage1_probs: np.ndarray
    active: np.ndarray
    stage2_score: np.ndarray  # NaN where not active
    corrected: np.ndarray
    scored_at: str

    def __len__(self):
        return len(self.ids)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(STORE_HEADER)
            probs = self.stage1_probs.tolist()
            for i in range(len(self.ids)):
                s = self.stage2_score[i]
                w.writerow([int(self.ids[i]), *map(repr, probs[i]), int(self.active[i]),
                            repr(float(s)) if self.active[i] else "",
                            int(self.corrected[i]), self.scored_at])

    @classmethod
    def read_csv(cls, path) -> "ScoreStore":
        path = _require(Path(path), "score store")
        ids, probs, active, score, corr, at = [], [], [], [], [], ""
        with open(path, newline="", encoding="utf-8") as fh:
            r = csv.reader(fh)
            if next(r, None) != STORE_HEADER:
                raise ValueError(f"{path}: bad score store header")
            for row in r:
                ids.append(int(row[0]))
                probs.append([float(x) for x in row[1:4]])
                active.append(row[4] == "1")
                score.append(float(row[5]) if row[5] else np.nan)
                corr.append(row[6] == "1")
                at = row[7]
        return cls(np.array(ids, np.int64), np.array(probs).reshape(-1, N_CLASSES),
                   np.array(active, bool), np.array(score), np.array(corr, bool), at)

    def ranked(self):
        """(ids, scores) of scored customers, descending score then ascending id."""
        m = self.active
        ids, sc = self.ids[m], self.stage2_score[m]
        order = np.lexsort((ids, -sc))
        return ids[order], sc[order]


def score_dataset(ds: Dataset, m1: stage1.Stage1Model, m2: stage2.Stage2Model, policy,
                  corrected_ids=(), scored_at: str = "") -> ScoreStore:
    """Stage-1 probabilities for everyone, stage-2 scores for customers passing the filter."""
    if ds.n:
        probs = stage1.softmax_forward(m1, ds.features)
    else:
        probs = np.zeros((0, N_CLASSES))
    active = stage1.active_mask(probs, policy)
    score = np.full(ds.n, np.nan)
    if active.any():
        score[active] = stage2.sigmoid_forward(m2, ds.features[active])
    corrected = np.isin(ds.ids, np.asarray(corrected_ids, dtype=np.int64))
    return ScoreStore(ds.ids.copy(), probs, active, score, corrected, scored_at)


def _digest(*paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        if p is not None and Path(p).is_file():
            h.update(Path(p).read_bytes())
        h.update(b"\0")
    return h.hexdigest()[:12]


def load_dataset(cfg: RunConfig, with_transactions=True) -> Dataset:
    cust = _require(cfg.path("customers"), "customers file")
    txn = _require(cfg.path("transactions"), "transactions file") if with_transactions else None
    return read_dataset_csv(cust, txn, epoch_day=cfg.gen.horizon)


def run_batch_scoring(cfg: RunConfig) -> ScoreStore:
    """Score every customer and atomically write the score store (and id,score CSV)."""
    ds = load_dataset(cfg, with_transactions=False)
    m1 = stage1.Stage1Model.load(_require(cfg.path("stage1_model"), "stage-1 model"))
    m2 = stage2.Stage2Model.load(_require(cfg.path("stage2_model"), "stage-2 model"))
    for name, m in (("stage-1", m1), ("stage-2", m2)):
        if m.feature_dim != ds.feature_dim:
            raise ValueError(f"{name} model dimension {m.feature_dim} != dataset dimension {ds.feature_dim}")
    report_path = cfg.path("correction_report")
    corrected = ()
    if report_path.is_file():
        rep = stage2.LabelCorrectionReport.read_csv(report_path)
        corrected = rep.ids[rep.corrected]
    run_id = cfg.run_id or _digest(cfg.path("customers"), cfg.path("stage1_model"),
                                   cfg.path("stage2_model"),
                                   report_path if report_path.is_file() else None) + \
        ("" if cfg.filter_policy == stage1.ARGMAX_NOT_INACTIVE else f"-{cfg.filter_policy.threshold!r}")
    store = score_dataset(ds, m1, m2, cfg.filter_policy, corrected, run_id)
    with atomic_path(cfg.path("score_store")) as tmp:
        store.write_csv(tmp)
    ids, sc = store.ranked()
    with atomic_path(cfg.path("scores")) as tmp:
        stage2.write_scores_csv(ids, sc, tmp)
    log.info("scored %d customers, %d active, run %s", len(store), int(store.active.sum()), run_id)
    return store


def export_target_list(store: ScoreStore, path, k: Optional[int] = None,
                       cut: Optional[float] = None) -> np.ndarray:
    """Write the top-``k`` ids (or all with score > ``cut``), one per line."""
    if (k is None) == (cut is None):
        raise ValueError("give exactly one of k or cut")
    ids, sc = store.ranked()
    if k is not None:
        if k < 0:
            raise ValueError("k must be >= 0")
        if k > ids.size:
            log.warning("requested %d targets but only %d customers are scored; list truncated", k, ids.size)
        chosen = ids[:k]
    else:
        chosen = ids[sc > cut]
    with atomic_path(path) as tmp:
        tmp.write_text("".join(f"{i}\n" for i in chosen.tolist()), encoding="utf-8")
    return chosen


# stage runners used by the CLI ---------------------------------------------

def run_generate(cfg: RunConfig) -> Dataset:
    ds = datagen.generate_population(cfg.gen)
    with atomic_path(cfg.path("customers")) as tmp:
        write_customers_csv(ds, tmp)
    with atomic_path(cfg.path("transactions")) as tmp:
        write_transactions_csv(ds, tmp)
    log.info("generated %d customers, %d transactions", ds.n, len(ds.txn_customer))
    return ds


def run_train_stage1(cfg: RunConfig):
    ds = load_dataset(cfg, with_transactions=False)
    model, history = stage1.train_stage1(ds, cfg.stage1)
    with atomic_path(cfg.path("stage1_model")) as tmp:
        model.save(tmp)
    log.info("stage 1 trained: loss %.6f -> %.6f over %d epochs", history[0], history[-1], len(history))
    return model, history


def run_train_stage2(cfg: RunConfig) -> stage2.Stage2Result:
    ds = load_dataset(cfg, with_transactions=False)
    ids, labels = datagen.derive_stage2_initial_labels(ds)
    result = stage2.train_stage2(ds, ids, labels, cfg.stage2)
    with atomic_path(cfg.path("stage2_model")) as tmp:
        result.model.save(tmp)
    with atomic_path(cfg.path("correction_report")) as tmp:
        result.report.write_csv(tmp)
    log.info("stage 2 trained: %d of %d positives corrected", int(result.report.corrected.sum()),
             int(labels.sum()))
    return result


def run_export(cfg: RunConfig, k=None, cut=None) -> np.ndarray:
    store = ScoreStore.read_csv(cfg.path("score_store"))
    k = cfg.export_k if k is None and cut is None else k
    cut = cfg.export_cut if k is None and cut is None else cut
    if k is None and cut is None:
        raise ValueError("set export.k or export.cut (or pass --k / --cut)")
    return export_target_list(store, cfg.path("targets"), k=k, cut=cut)


def stage2_population(ds: Dataset) -> np.ndarray:
    """Row positions of the stage-2 population (observed Engaged or Unengaged)."""
    ids, _ = datagen.derive_stage2_initial_labels(ds)
    return ds.positions(ids)


def offline_comparison(ds: Dataset, model: stage2.Stage2Model, rules=rfm.DEFAULT_RULES,
                       cut=0.5, as_of_day=None):
    """Table-1 style rows on the stage-2 population with latent prompted intent as truth.

    Returns (rows, rfm table, rfm segment names); RFM quintiles use the whole population.
    """
    table = rfm.rfm_scores(ds, as_of_day)
    segments = rfm.assign_segments(table, rules)
    rows_idx = stage2_population(ds)
    truth = datagen.intent_truth(ds)[rows_idx]
    p = np.atleast_1d(stage2.sigmoid_forward(model, ds.features[rows_idx]))
    rows = evaluate.compare_table(p, segments[rows_idx], truth, cut=cut, rules=rules)
    return rows, table, segments


def run_evaluate(cfg: RunConfig):
    ds = load_dataset(cfg)
    model = stage2.Stage2Model.load(_require(cfg.path("stage2_model"), "stage-2 model"))
    rows, table, segments = offline_comparison(ds, model, cfg.rfm_rules, cfg.eval_cut, cfg.rfm_as_of_day)
    with atomic_path(cfg.path("rfm")) as tmp:
        rfm.write_rfm_csv(table, segments, tmp)
    with atomic_path(cfg.path("comparison")) as tmp:
        evaluate.write_comparison_csv(rows, tmp)
    log.info("comparison table\n%s", evaluate.format_comparison(rows))
    return rows


def run_gain_curve(cfg: RunConfig) -> evaluate.GainCurve:
    ds = load_dataset(cfg, with_transactions=False)
    model = stage2.Stage2Model.load(_require(cfg.path("stage2_model"), "stage-2 model"))
    rows_idx = stage2_population(ds)
    ids = ds.ids[rows_idx]
    p = np.atleast_1d(stage2.sigmoid_forward(model, ds.features[rows_idx]))
    curve = evaluate.gain_curve(ids, p, datagen.intent_truth(ds)[rows_idx])
    with atomic_path(cfg.path("gain_curve")) as tmp:
        curve.write_csv(tmp)
    log.info("gain curve: %.1f%% of prompted customers in the top 40%%", 100 * curve.at(0.4))
    return curve


def default_arm_sizes(strata, fraction: float) -> dict:
    names, counts = np.unique(np.asarray(strata, dtype=str), return_counts=True)
    return {str(s): int(c * fraction) for s, c in zip(names, counts)}


def run_abtest(cfg: RunConfig) -> abtest.ABTestReport:
    ds = load_dataset(cfg, with_transactions=False)
    store = ScoreStore.read_csv(cfg.path("score_store"))
    if not np.array_equal(store.ids, ds.ids):
        raise ValueError("score store does not match the dataset")
    scores = np.where(store.active, store.stage2_score, -np.inf)
    sizes = cfg.ab_arm_sizes or default_arm_sizes(abtest.churn_strata(ds), cfg.ab_arm_fraction)
    report = abtest.run_ab_test(ds, scores, sizes, cfg.ab_seed, cfg.ab_params)
    with atomic_path(cfg.path("ab_report")) as tmp:
        report.write_csv(tmp)
    log.info("A/B report\n%s", report.format_table())
    return report


def run_validate(cfg: RunConfig) -> list[str]:
    """Config already parsed; also validate the dataset files if present."""
    problems = []
    if cfg.path("customers").is_file():
        ds = read_dataset_csv(cfg.path("customers"),
                              cfg.path("transactions") if cfg.path("transactions").is_file() else None,
                              epoch_day=cfg.gen.horizon)
        problems = validate_dataset(ds)
    return problems
