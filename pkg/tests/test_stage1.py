import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentseg import datagen, stage1
from latentseg.domain import CustomerRecord, Dataset, SegmentLabel
from latentseg.stage1 import (
    ARGMAX_NOT_INACTIVE, InactiveProbBelow, ModelFormatError, Stage1Model, Stage1TrainConfig,
)


def numeric_grad(f, theta, h=1e-5):
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e.flat[i] = h
        g.flat[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def mean_loss(model, X, y):
    return stage1.weighted_cce_loss(stage1.softmax_forward(model, X), y, model.class_weights) / len(y)


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def test_zero_model_is_uniform():
    m = Stage1Model.zeros(4)
    np.testing.assert_allclose(stage1.softmax_forward(m, np.arange(4.0)), [1 / 3] * 3)


def test_dominant_logit():
    m = Stage1Model(np.zeros((3, 1)), np.array([100.0, 0.0, 0.0]))
    p = stage1.softmax_forward(m, [0.0])
    assert p[0] >= 1 - 1e-40
    assert p[1] <= 1e-40 and p[2] <= 1e-40


def test_loss_examples():
    assert stage1.weighted_cce_loss([[0.5, 0.25, 0.25]], [0], [1, 1, 1]) == pytest.approx(0.693147, abs=1e-6)
    p = [[1 - 1e-12, 5e-13, 5e-13]]
    assert 0 <= stage1.weighted_cce_loss(p, [0], [1, 1, 1]) <= 1e-11


def test_loss_is_weighted_sum():
    P = [[0.2, 0.3, 0.5], [0.6, 0.3, 0.1]]
    got = stage1.weighted_cce_loss(P, [2, 1], [1.0, 2.0, 3.0])
    assert got == pytest.approx(-3 * np.log(0.5) - 2 * np.log(0.3))


@pytest.mark.parametrize("counts, expected", [
    ((10, 10, 10), (1.0, 1.0, 1.0)),
    ((10, 20, 70), (100 / 30, 100 / 60, 100 / 210)),
])
def test_class_weights(counts, expected):
    labels = np.repeat([0, 1, 2], counts)
    np.testing.assert_allclose(stage1.class_weights_from_frequencies(labels), expected, rtol=1e-12)


def test_missing_class_named():
    with pytest.raises(ValueError, match="Engaged"):
        stage1.class_weights_from_frequencies(np.repeat([1, 2], 50))


def test_gradient_matches_finite_differences(rng):
    for _ in range(100):
        n, d = rng.integers(2, 12), rng.integers(1, 6)
        X = rng.normal(size=(n, d))
        y = rng.integers(0, 3, n)
        cw = rng.uniform(0.2, 3.0, 3)
        W, b = rng.normal(size=(3, d)), rng.normal(size=3)
        _, gW, gb = stage1.mean_loss_and_grad(Stage1Model(W, b, cw), X, y)
        nW = numeric_grad(lambda t: mean_loss(Stage1Model(t, b, cw), X, y), W)
        nb = numeric_grad(lambda t: mean_loss(Stage1Model(W, t, cw), X, y), b)
        assert rel_err(np.concatenate([gW.ravel(), gb]), np.concatenate([nW.ravel(), nb])) <= 1e-5


def test_batch_gradient_agrees_across_backends(backend, rng):
    X, y = rng.normal(size=(50, 4)), rng.integers(0, 3, 50)
    W, b, cw = rng.normal(size=(3, 4)), rng.normal(size=3), np.ones(3)
    loss, gW, gb = backend.softmax_cce_batch(X, y, W, b, cw)
    ref = stage1.mean_loss_and_grad(Stage1Model(W, b, cw), X, y)
    np.testing.assert_allclose(loss / 50, ref[0], rtol=1e-12)
    np.testing.assert_allclose(gW / 50, ref[1], rtol=1e-10, atol=1e-14)


def separable():
    cfg = datagen.GenConfig(n_customers=3000, archetype_mix=(1 / 3, 0.0, 1 / 3, 1 / 3),
                            feature_separation=10.0, noise_scale=0.1, seed=5)
    return datagen.generate_population(cfg)


def test_separable_training_accuracy(backend):
    ds = separable()
    model, history = stage1.train_stage1(ds, Stage1TrainConfig(epochs=200, learning_rate=0.1), backend)
    acc = np.mean(np.argmax(stage1.softmax_forward(model, ds.features), axis=1) == ds.segment)
    assert acc >= 0.99
    assert history[-1] < history[0]


def test_single_epoch_and_determinism(backend, small_population):
    cfg = Stage1TrainConfig(epochs=1, seed=3)
    a, ha = stage1.train_stage1(small_population, cfg, backend)
    b, hb = stage1.train_stage1(small_population, cfg, backend)
    assert len(ha) == 1 and ha == hb
    assert a == b
    c, _ = stage1.train_stage1(small_population, Stage1TrainConfig(epochs=1, seed=4), backend)
    assert c != a


def test_model_round_trip(tmp_path, small_population):
    model, _ = stage1.train_stage1(small_population, Stage1TrainConfig(epochs=2))
    model.save(tmp_path / "m")
    assert Stage1Model.load(tmp_path / "m") == model
    (tmp_path / "bad").write_text("3 2\n0.1\n")
    with pytest.raises(ModelFormatError, match="bad"):
        Stage1Model.load(tmp_path / "bad")


def tiny_dataset():
    segs = [SegmentLabel.ENGAGED, SegmentLabel.UNENGAGED, SegmentLabel.INACTIVE, SegmentLabel.INACTIVE]
    return Dataset.from_records([CustomerRecord(i + 10, (float(i),), s == 0, s, None, 0)
                                 for i, s in enumerate(segs)])


def test_uniform_model_keeps_everyone():
    ds = tiny_dataset()
    assert stage1.filter_active(Stage1Model.zeros(1), ds).tolist() == [10, 11, 12, 13]


def test_one_hot_oracle_keeps_non_inactive():
    ds = tiny_dataset()
    onehot = np.eye(3)[ds.segment]
    assert ds.ids[stage1.active_mask(onehot)].tolist() == [10, 11]
    assert ds.ids[stage1.active_mask(onehot, InactiveProbBelow(0.5))].tolist() == [10, 11]


@given(st.floats(0.01, 0.99))
@settings(max_examples=50, deadline=None)
def test_threshold_policy_monotone(t):
    probs = np.random.default_rng(0).dirichlet(np.ones(3), 200)
    looser = stage1.active_mask(probs, InactiveProbBelow(min(t + 0.01, 0.999)))
    assert np.all(looser >= stage1.active_mask(probs, InactiveProbBelow(t)))


def test_parse_filter_policy():
    assert stage1.parse_filter_policy("argmax") == ARGMAX_NOT_INACTIVE
    assert stage1.parse_filter_policy("inactive_below:0.3") == InactiveProbBelow(0.3)
    for bad in ("inactive_below:1.5", "nope"):
        with pytest.raises(ValueError):
            stage1.parse_filter_policy(bad)
