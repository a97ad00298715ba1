import numpy as np
import pytest
from sklearn import metrics as skm

from latentseg import evaluate
from latentseg.evaluate import ConfusionCounts, compare_table, confusion, gain_curve


def oracle(preds, truths):
    """Counting loop and textbook definitions; 0 for an empty denominator."""
    tp = fp = fn = tn = 0
    for p, t in zip(preds, truths):
        if p and t:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
        else:
            tn += 1

    def div(a, b):
        return a / b if b else 0.0

    def f1(a, b):
        return 2 * a * b / (a + b) if a + b else 0.0

    prec, rec, tnr, npv = div(tp, tp + fp), div(tp, tp + fn), div(tn, tn + fp), div(tn, tn + fn)
    wf1 = ((tp + fn) * f1(prec, rec) + (tn + fp) * f1(npv, tnr)) / len(preds)
    return (tp, fp, fn, tn), (prec, rec, (rec + tnr) / 2, wf1)


def test_confusion_examples():
    assert confusion([1, 0], [1, 0]) == ConfusionCounts(1, 0, 0, 1)
    assert confusion([1, 1], [0, 0]).fp == 2
    c = confusion([1, 1, 1, 1, 0, 0, 0, 0, 0, 0], [1, 1, 1, 0, 1, 1, 0, 0, 0, 0])
    assert c == ConfusionCounts(tp=3, fp=1, fn=2, tn=4)


def test_worked_metrics():
    m = evaluate.metrics(ConfusionCounts(tp=3, fp=1, fn=2, tn=4))
    assert m.precision == pytest.approx(0.75)
    assert m.recall == pytest.approx(0.6)
    assert m.specificity == pytest.approx(0.8)
    assert m.balanced_accuracy == pytest.approx(0.7)
    assert m.weighted_f1 == pytest.approx(0.69697, abs=1e-5)
    assert m.zero_division == ()


def test_perfect_predictions():
    m = evaluate.evaluate_predictions([1, 0, 1, 0, 0], [1, 0, 1, 0, 0])
    assert (m.precision, m.recall, m.specificity, m.balanced_accuracy, m.weighted_f1) == (1, 1, 1, 1, 1)


def test_zero_division_flagged():
    m = evaluate.evaluate_predictions([0, 0, 0], [0, 0, 0])
    assert m.precision == 0.0 and m.recall == 0.0
    assert "precision" in m.zero_division and "recall" in m.zero_division


def test_matches_counting_oracle(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 51))
        preds, truths = rng.integers(0, 2, n), rng.integers(0, 2, n)
        counts, expected = oracle(preds.tolist(), truths.tolist())
        c = confusion(preds, truths)
        m = evaluate.metrics(c)
        assert (c.tp, c.fp, c.fn, c.tn) == counts
        assert (m.precision, m.recall, m.balanced_accuracy, m.weighted_f1) == expected


def test_matches_sklearn(rng):
    for _ in range(200):
        n = int(rng.integers(2, 51))
        preds, truths = rng.integers(0, 2, n), rng.integers(0, 2, n)
        if len(set(truths)) < 2:
            continue
        m = evaluate.evaluate_predictions(preds, truths)
        assert m.precision == pytest.approx(skm.precision_score(truths, preds, zero_division=0))
        assert m.recall == pytest.approx(skm.recall_score(truths, preds))
        assert m.balanced_accuracy == pytest.approx(skm.balanced_accuracy_score(truths, preds))
        assert m.weighted_f1 == pytest.approx(skm.f1_score(truths, preds, average="weighted", zero_division=0))


def test_equal_support_weighted_f1_is_macro():
    m = evaluate.evaluate_predictions([1, 1, 1, 0, 0, 1], [1, 1, 1, 0, 0, 0])
    f_pos = 2 * 0.75 * 1 / 1.75
    f_neg = 2 * 1 * (2 / 3) / (1 + 2 / 3)
    assert m.weighted_f1 == pytest.approx((f_pos + f_neg) / 2)


def gain_oracle(ids, scores, truths):
    n, total = len(ids), sum(truths)
    ahead = [sum(1 for j in range(n) if scores[j] > scores[i] or (scores[j] == scores[i] and ids[j] < ids[i]))
             for i in range(n)]
    return [sum(truths[i] for i in range(n) if ahead[i] < k) / total for k in range(n + 1)]


def test_gain_curve_example():
    g = gain_curve([1, 2, 3, 4], [0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0])
    assert g.fraction_captured[1:].tolist() == [0.5, 0.5, 1.0, 1.0]
    assert g.fraction_targeted.tolist() == [0, 0.25, 0.5, 0.75, 1.0]


def test_gain_curve_matches_enumeration(rng):
    for _ in range(200):
        n = int(rng.integers(1, 13))
        ids = rng.permutation(np.arange(1, 40))[:n]
        scores = rng.integers(0, 4, n) / 4.0
        truths = rng.integers(0, 2, n)
        if truths.sum() == 0:
            truths[rng.integers(n)] = 1
        g = gain_curve(ids, scores, truths)
        assert g.fraction_captured.tolist() == gain_oracle(ids.tolist(), scores.tolist(), truths.tolist())
        assert (g.fraction_targeted[0], g.fraction_captured[0]) == (0, 0)
        assert (g.fraction_targeted[-1], g.fraction_captured[-1]) == (1, 1)
        assert np.all(np.diff(g.fraction_captured) >= 0)


def test_perfect_scorer_reaches_one_at_prevalence():
    truths = np.zeros(50, int)
    truths[[3, 9, 17, 22, 40, 41, 44, 45, 46, 49]] = 1
    g = gain_curve(np.arange(50), truths.astype(float), truths)
    idx = np.flatnonzero(g.fraction_captured == 1.0)[0]
    assert g.fraction_targeted[idx] == 0.2
    assert g.at(0.2) == 1.0 and g.at(0.18) < 1.0


def test_uniform_scores_follow_id_order():
    g = gain_curve([4, 2, 3, 1], [0.5] * 4, [1, 0, 0, 1])
    # id order 1,2,3,4 -> truths 1,0,0,1
    assert g.fraction_captured.tolist() == [0, 0.5, 0.5, 0.5, 1.0]


def test_gain_curve_needs_positive():
    with pytest.raises(ValueError):
        gain_curve([1, 2], [0.1, 0.2], [0, 0])


def test_compare_table_oracle_model_dominates(rng):
    truths = rng.integers(0, 2, 300)
    segs = rng.choice(np.array(["Champions", "LoyalCustomers", "PotentialLoyalists", "Others"], object), 300)
    rows = compare_table(truths.astype(float), segs, truths)
    assert [r.method for r in rows] == ["Champions (RFM)", "LoyalCustomers (RFM)",
                                       "PotentialLoyalists (RFM)", "Model segment"]
    model = rows[-1].report
    assert (model.precision, model.recall, model.balanced_accuracy, model.weighted_f1) == (1, 1, 1, 1)
    assert all(r.report.balanced_accuracy <= model.balanced_accuracy for r in rows)


def test_compare_table_consistency(rng):
    truths = rng.integers(0, 2, 200)
    segs = rng.choice(np.array(["Champions", "Others"], object), 200)
    scores = (segs == "Champions").astype(float)
    rows = compare_table(scores, segs, truths, targets=["Champions"])
    assert rows[0].report == rows[1].report


def test_write_and_format(tmp_path, rng):
    truths = rng.integers(0, 2, 40)
    rows = compare_table(rng.random(40), np.array(["Others"] * 40, object), truths)
    evaluate.write_comparison_csv(rows, tmp_path / "c.csv")
    text = (tmp_path / "c.csv").read_text().splitlines()
    assert text[0] == "method,precision,recall,balanced_accuracy,weighted_f1" and len(text) == 5
    assert "Model segment" in evaluate.format_comparison(rows)
