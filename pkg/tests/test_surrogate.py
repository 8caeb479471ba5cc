import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hullopt import hydro, surrogate
from hullopt.errors import ExtrapolationWarning, FormatError, UndefinedLossError
from hullopt.surrogate import TrainingConfig


def random_features(n, seed=0):
    rng = np.random.default_rng(seed)
    P = rng.random((n, 5)) * [1, 1, 1, 2.1, 1.5] + [0, 0, 0, 6.9, 2.0]
    fn = rng.uniform(0.15, 0.35, n)
    L = rng.uniform(150, 350, n)
    re = fn * np.sqrt(hydro.GRAVITY * L) * L / hydro.NU
    return np.column_stack([P, fn, re])


def small_model(seed=0, dims=(7, 8, 8, 1), scale=1.0):
    X = random_features(50)
    fmin, fmax = surrogate.feature_stats(X)
    return surrogate.new_model(dims, seed, fmin, fmax, scale)


def test_deep_architecture():
    dims = surrogate.deep_layer_dims()
    assert dims[0] == 7 and dims[-1] == 1
    assert dims[1:-1] == (32,) * 36


def test_he_initialisation_variance():
    W, b = surrogate.he_init((400, 300, 1), seed=0)
    assert np.var(W[0]) == pytest.approx(2.0 / 400, rel=0.02)
    assert all(np.all(v == 0) for v in b)


def test_reynolds_enters_as_log():
    X = random_features(100)
    fmin, fmax = surrogate.feature_stats(X)
    assert fmax[6] == pytest.approx(np.log10(X[:, 6].max()))
    m = small_model()
    Xn = surrogate.normalize_features(m, X)
    assert np.allclose(surrogate.denormalize_features(m, Xn), X, rtol=1e-12)


class TestMape:
    def test_value(self):
        assert surrogate.mape([1.1, 0.8], [1.0, 1.0]) == pytest.approx(15.0)

    def test_zero_target(self):
        with pytest.raises(UndefinedLossError):
            surrogate.mape([1.0], [0.0])
        m = small_model()
        with pytest.raises(UndefinedLossError):
            surrogate.backward(m, random_features(2), [0.001, 0.0])

    @settings(max_examples=50, deadline=None)
    @given(c=st.floats(1e-6, 1e6))
    def test_scale_invariant(self, c):
        p = np.array([0.0011, 0.0031, 0.0008])
        t = np.array([0.0010, 0.0030, 0.0010])
        assert surrogate.mape(c * p, c * t) == pytest.approx(surrogate.mape(p, t), rel=1e-12)


class TestGradients:
    @pytest.mark.parametrize("scale", [1.0, 0.003])
    def test_match_central_differences(self, scale):
        m = small_model(seed=3, scale=scale)
        X = random_features(40, seed=5)
        y = np.random.default_rng(6).uniform(0.5, 2.0, 40) * scale
        _, gW, gb = surrogate.backward(m, X, y)
        h = 1e-6
        rng = np.random.default_rng(7)
        for k in range(len(m.weights)):
            for arr, grad in ((m.weights[k], gW[k]), (m.biases[k], gb[k])):
                for idx in [tuple(rng.integers(0, s) for s in arr.shape) for _ in range(4)]:
                    old = arr[idx]
                    arr[idx] = old + h
                    up = surrogate.mape(surrogate.forward(m, X), y)
                    arr[idx] = old - h
                    down = surrogate.mape(surrogate.forward(m, X), y)
                    arr[idx] = old
                    assert grad[idx] == pytest.approx((up - down) / (2 * h), rel=1e-4, abs=1e-6)

    def test_dead_units_have_zero_gradient(self):
        m = small_model()
        m.biases[0][:] = -1e3  # every first-layer unit is off
        _, gW, gb = surrogate.backward(m, random_features(10), np.full(10, 0.002))
        assert np.all(gW[0] == 0) and np.all(gb[0] == 0)


def test_adam_first_step_is_signed_learning_rate():
    p = [np.array([1.0, -2.0, 3.0])]
    g = [np.array([0.5, -4.0, 1e-3])]
    surrogate.Adam(lr=0.01).step(p, g)
    assert np.allclose(p[0], [0.99, -1.99, 2.99], atol=1e-7)


@pytest.mark.parametrize("kw", [{"lr": 0.0}, {"beta1": 1.0}, {"beta2": 0.0}, {"eps": -1.0}])
def test_adam_rejects_bad_constants(kw):
    with pytest.raises(ValueError):
        surrogate.Adam(**kw)


@pytest.mark.parametrize("kw", [{"epochs": 0}, {"batch_size": 0}, {"lr": -1e-3}])
def test_training_config_invariants(kw):
    with pytest.raises(ValueError):
        TrainingConfig(**kw)


@pytest.fixture(scope="module")
def synthetic_run():
    X = random_features(5000, seed=1)
    y = 0.001 * (1.0 + X[:, 0] + X[:, 5] ** 2)
    tr, te = slice(0, 4500), slice(4500, None)
    config = TrainingConfig(epochs=300, batch_size=128, hidden_layers=2, width=32, seed=0)
    model, hist = surrogate.train(X[tr], y[tr], X[te], y[te], config)
    return X, y, tr, te, model, hist


class TestTraining:
    def test_learns_analytic_function(self, synthetic_run):
        *_, hist = synthetic_run
        assert hist.best_test_mape < 1.0

    def test_history_bookkeeping(self, synthetic_run):
        X, y, tr, te, model, hist = synthetic_run
        assert hist.best_test_mape == min(hist.test_mape)
        assert hist.test_mape[hist.best_epoch] == hist.best_test_mape
        assert len(hist.train_mape) == len(hist.test_mape) == 300
        # the returned parameters are the checkpoint, which beats or equals the last epoch
        assert surrogate.mape(surrogate.forward(model, X[te]), y[te]) == pytest.approx(hist.best_test_mape, rel=1e-12)
        assert hist.best_test_mape <= hist.test_mape[-1]
        csv = hist.to_csv().splitlines()
        assert csv[0] == "epoch,train_mape,test_mape" and len(csv) == 301

    def test_normalisation_from_training_rows_only(self, synthetic_run):
        X, y, tr, te, model, hist = synthetic_run
        fmin, fmax = surrogate.feature_stats(X[tr])
        assert np.array_equal(model.feature_min, fmin) and np.array_equal(model.feature_max, fmax)

    def test_same_seed_same_model(self):
        X = random_features(300, seed=2)
        y = 0.001 * (1.0 + X[:, 1])
        cfg = TrainingConfig(epochs=5, batch_size=64, hidden_layers=3, width=8, seed=4)
        a, _ = surrogate.train(X[:250], y[:250], X[250:], y[250:], cfg)
        b, _ = surrogate.train(X[:250], y[:250], X[250:], y[250:], cfg)
        assert surrogate.dumps(a) == surrogate.dumps(b)

    def test_empty_split(self):
        X = random_features(10)
        with pytest.raises(ValueError):
            surrogate.train(X, np.ones(10), X[:0], np.ones(0), TrainingConfig(epochs=1))


class TestPrediction:
    def test_feature_rows(self):
        X = surrogate.feature_rows([[0.1, 0.2, 0.3, 8.0, 2.5]], 200.0, [0.2, 0.3])
        assert X.shape == (2, 7)
        assert X[1, 6] == pytest.approx(0.3 * math.sqrt(9.81 * 200.0) * 200.0 / 1.016e-6)

    def test_batching_invariance(self, synthetic_run):
        *_, model, _ = synthetic_run
        X = random_features(15000, seed=9)
        whole = surrogate.forward(model, X)
        parts = np.concatenate([surrogate.forward(model, X[i : i + 1000]) for i in range(0, 15000, 1000)])
        assert np.allclose(whole, parts, rtol=1e-13, atol=0)

    def test_predict_shape_and_extrapolation_warning(self, synthetic_run):
        *_, model, _ = synthetic_run
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            out = surrogate.predict(model, [[0.5, 0.5, 0.5, 8.0, 2.5]] * 3, 250.0, [0.2, 0.25])
        assert out.shape == (3, 2)
        with pytest.warns(ExtrapolationWarning):
            surrogate.predict(model, [[0.5, 0.5, 0.5, 12.0, 2.5]], 250.0, [0.2])


class TestModelFile:
    def test_round_trip(self, synthetic_run, tmp_path):
        X, *_, model, _ = synthetic_run
        digest = surrogate.save(model, tmp_path / "m.json")
        back = surrogate.load(tmp_path / "m.json")
        assert np.array_equal(surrogate.forward(back, X[:100]), surrogate.forward(model, X[:100]))
        assert surrogate.dumps(back) == surrogate.dumps(model)
        assert back.provenance["config"]["seed"] == 0
        import hashlib

        assert hashlib.sha256((tmp_path / "m.json").read_bytes()).hexdigest() == digest

    def test_rejects_malformed(self, synthetic_run):
        import json

        *_, model, _ = synthetic_run
        data = surrogate.model_to_dict(model)
        data["weights"][0] = data["weights"][0][:-1]
        with pytest.raises(FormatError):
            surrogate.loads(json.dumps(data))
        with pytest.raises(FormatError):
            surrogate.loads('{"format": "hullopt-pca", "version": 1}')
