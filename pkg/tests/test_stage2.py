import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentseg import datagen, stage2
from latentseg.domain import CustomerRecord, Dataset, SegmentLabel
from latentseg.stage2 import LinearRamp, ModelFormatError, SplcConfig, Stage2Model


def test_forward_examples():
    assert stage2.sigmoid_forward(Stage2Model(np.zeros(3)), np.ones(3)) == 0.5
    with np.errstate(over="raise"):
        p = stage2.sigmoid_forward(Stage2Model(np.array([40.0])), [1.0])
        q = stage2.sigmoid_forward(Stage2Model(np.array([-800.0])), [1.0])
    assert 1 - 1e-12 <= p < 1 and q == 1e-12


@pytest.mark.parametrize("p, label, tau, expected", [
    (0.8, 1, 0.5, 0.223144),
    (0.3, 1, 0.5, 0.356675),
    (0.3, 0, 0.5, 0.356675),
    (0.3, 0, 0.01, 0.356675),
    (0.5, 1, 0.5, -np.log(0.5)),
])
def test_sample_loss_examples(p, label, tau, expected):
    assert stage2.splc_sample_loss(p, label, tau) == pytest.approx(expected, abs=1e-6)


def test_boundary_takes_corrected_branch():
    assert stage2.splc_sample_loss(0.4, 1, 0.4) == stage2.splc_sample_loss(0.4, 0, 0.4)
    assert stage2.splc_logit_grad(0.4, 1, 0.4) == 0.4


def test_logit_gradient_examples(backend):
    assert stage2.splc_logit_grad(0.8, 1, 0.5) == pytest.approx(-0.2)
    assert stage2.splc_logit_grad(0.3, 1, 0.5) == pytest.approx(0.3)
    # one-feature batch with x = 1 and the logits of p = 0.8 and p = 0.3
    z = np.log([0.8 / 0.2, 0.3 / 0.7])
    X = np.array([[z[0]], [z[1]]])
    _, gv, gb = stage2.splc_batch_gradient(Stage2Model(np.array([1.0])), X, [1, 1], 0.5, backend)
    assert gb == pytest.approx(0.05)


def splc_mean_loss(v, b, X, y, tau):
    p = stage2.sigmoid(X @ v + b)
    return float(np.mean(stage2.splc_sample_loss(p, y, tau)))


def test_gradient_matches_finite_differences(backend, rng):
    h, done = 1e-5, 0
    while done < 100:
        n, d = int(rng.integers(2, 12)), int(rng.integers(1, 6))
        X, y = rng.normal(size=(n, d)), rng.integers(0, 2, n)
        v, b, tau = rng.normal(size=d), float(rng.normal()), float(rng.uniform(0.1, 0.9))
        if np.min(np.abs(stage2.sigmoid(X @ v + b) - tau)) < 1e-3:
            continue
        _, gv, gb = stage2.splc_batch_gradient(Stage2Model(v, b), X, y, tau, backend)
        theta = np.append(v, b)
        num = np.zeros_like(theta)
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            up, dn = theta + e, theta - e
            num[i] = (splc_mean_loss(up[:-1], up[-1], X, y, tau)
                      - splc_mean_loss(dn[:-1], dn[-1], X, y, tau)) / (2 * h)
        ana = np.append(gv, gb)
        err = np.linalg.norm(ana - num) / max(np.linalg.norm(ana) + np.linalg.norm(num), 1e-12)
        assert err <= 1e-5
        done += 1


def test_splc_equals_bce_below_min_p(backend, rng):
    for _ in range(200):
        n = int(rng.integers(1, 64))
        p = rng.uniform(1e-6, 1 - 1e-6, n)
        y = rng.integers(0, 2, n)
        tau = np.nextafter(p.min(), 0)
        assert np.array_equal(stage2.splc_sample_loss(p, y, tau), stage2.bce_sample_loss(p, y))
        X = rng.normal(size=(n, 3))
        v = rng.normal(size=3)
        # kernel sigmoid may differ from numpy by an ulp, so stay clearly below min p
        tau_k = 0.5 * stage2.sigmoid(X @ v).min()
        none = np.zeros(n, np.uint8)
        a = backend.splc_batch(X, y, v, 0.0, tau_k, none)
        b = backend.splc_batch(X, y, v, 0.0, stage2.BCE_TAU, none)
        assert a[0] == b[0] and np.array_equal(a[1], b[1]) and a[2] == b[2] and a[3] == 0


def test_gradient_shape_on_grid():
    tau = 0.5
    p = np.linspace(0.0005, 0.9995, 1000)
    neg = -stage2.splc_logit_grad(p, 1, tau)
    above = p > tau
    assert np.array_equal(neg[above], 1 - p[above])
    assert np.array_equal(neg[~above], -p[~above])
    jumps = np.flatnonzero(np.abs(np.diff(neg)) > 0.5)
    assert jumps.size == 1
    assert p[jumps[0]] <= tau < p[jumps[0] + 1]


@given(tau=st.floats(0.01, 0.99), p=st.floats(1e-6, 1 - 1e-6))
def test_gradient_shape_any_tau(tau, p):
    g = -float(stage2.splc_logit_grad(p, 1, tau))
    assert g == (1 - p if p > tau else -p)
    assert -float(stage2.splc_logit_grad(p, 0, tau)) == -p


def stage2_data(n=1500, seed=21):
    ds = datagen.generate_population(datagen.GenConfig(n_customers=n, archetype_mix=(0.35, 0.3, 0.15, 0.2),
                                                       seed=seed))
    ids, labels = datagen.derive_stage2_initial_labels(ds)
    return ds, ids, labels


def test_tiny_tau_tracks_plain_bce(backend):
    ds, ids, labels = stage2_data()
    cfg = SplcConfig(tau=1e-9, warmup_epochs=0, epochs=20, seed=2)
    splc = stage2.train_stage2(ds, ids, labels, cfg, backend)
    _, ref = stage2.train_plain_bce(ds, ids, labels, cfg)
    assert np.max(np.abs(np.array(splc.history) - ref)) <= 1e-9
    # the report never flags anyone when no sample falls below tau
    assert not splc.report.corrected.any()


def test_training_is_deterministic(backend):
    ds, ids, labels = stage2_data()
    cfg = SplcConfig(epochs=15, warmup_epochs=3, seed=8)
    a = stage2.train_stage2(ds, ids, labels, cfg, backend)
    b = stage2.train_stage2(ds, ids, labels, cfg, backend)
    assert a.report == b.report and a.model == b.model and a.history == b.history


def test_report_flags_only_positives(backend):
    ds, ids, labels = stage2_data()
    res = stage2.train_stage2(ds, ids, labels, SplcConfig(epochs=20, warmup_epochs=3), backend)
    rep = res.report
    assert np.array_equal(rep.ids, ids)
    assert not rep.corrected[rep.initial_label == 0].any()
    pos = rep.initial_label == 1
    np.testing.assert_array_equal(rep.corrected[pos], rep.p[pos] <= 0.5)


def test_sticky_mode_flags_positives_only(backend):
    ds, ids, labels = stage2_data()
    base = SplcConfig(epochs=20, warmup_epochs=3)
    plain = stage2.train_stage2(ds, ids, labels, base, backend).report
    sticky = stage2.train_stage2(ds, ids, labels, SplcConfig(epochs=20, warmup_epochs=3, sticky=True),
                                 backend).report
    assert sticky.corrected.sum() > 0
    assert not sticky.corrected[sticky.initial_label == 0].any()
    assert plain.corrected.sum() > 0


def test_ramp_schedule():
    cfg = SplcConfig(tau=0.5, warmup_epochs=2, epochs=10, tau_schedule=LinearRamp(0.1, 4))
    taus = [cfg.tau_at(e) for e in range(10)]
    assert taus[:2] == [stage2.BCE_TAU] * 2
    np.testing.assert_allclose(taus[2:7], [0.1, 0.2, 0.3, 0.4, 0.5])
    assert taus[9] == 0.5
    assert stage2.parse_tau_schedule("ramp:0.1:4") == LinearRamp(0.1, 4)
    ds, ids, labels = stage2_data()
    stage2.train_stage2(ds, ids, labels, cfg)


@pytest.mark.parametrize("kwargs", [
    {"tau": 0.0}, {"tau": 1.0}, {"warmup_epochs": 60, "epochs": 60},
    {"tau_schedule": "sometimes"}, {"tau_schedule": LinearRamp(0.0, 3)},
])
def test_bad_config(kwargs):
    with pytest.raises(ValueError):
        SplcConfig(**kwargs).validate()


def test_score_ties_and_empty():
    recs = [CustomerRecord(i, (1.0, 2.0) if i != 5 else (3.0, 0.0), True, SegmentLabel.ENGAGED, 0, 0)
            for i in (9, 2, 5, 4)]
    ds = Dataset.from_records(recs)
    m = Stage2Model(np.array([0.1, -0.3]))
    ids, scores = stage2.score_customers(m, ds)
    assert ids.tolist() == [5, 2, 4, 9]
    assert scores[1] == scores[2] == scores[3]
    ids, scores = stage2.score_customers(m, ds, [])
    assert ids.size == 0 and scores.size == 0


def test_round_trips(tmp_path):
    ds, ids, labels = stage2_data(n=600)
    res = stage2.train_stage2(ds, ids, labels, SplcConfig(epochs=6, warmup_epochs=2))
    res.model.save(tmp_path / "m")
    assert Stage2Model.load(tmp_path / "m") == res.model
    res.report.write_csv(tmp_path / "r.csv")
    assert stage2.LabelCorrectionReport.read_csv(tmp_path / "r.csv") == res.report
    sid, sc = stage2.score_customers(res.model, ds)
    stage2.write_scores_csv(sid, sc, tmp_path / "s.csv")
    back = stage2.read_scores_csv(tmp_path / "s.csv")
    assert np.array_equal(back[0], sid) and np.array_equal(back[1], sc)
    (tmp_path / "bad").write_text("2\n1.0\nnan\n0\n")
    with pytest.raises(ModelFormatError, match="bad"):
        Stage2Model.load(tmp_path / "bad")


def test_needs_both_classes():
    ds, ids, labels = stage2_data(n=300)
    with pytest.raises(ValueError, match="positive and negative"):
        stage2.train_stage2(ds, ids, np.zeros_like(labels), SplcConfig(epochs=2, warmup_epochs=1))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=20))
def test_sigmoid_symmetry(z):
    z = np.array(z)
    np.testing.assert_allclose(stage2.sigmoid(z) + stage2.sigmoid(-z), 1.0, rtol=1e-15)
