import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ceaudit.classifier import (
    DegenerateLabelsError,
    TrainConfig,
    fit_arrays,
    load_model,
    loss_and_grad,
    predict_class,
    save_model,
)


def _toy(n=400, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3)) * [1.0, 5.0, 0.2] + [0.0, 10.0, -1.0]
    t = (X[:, 0] + 0.2 * (X[:, 1] - 10) > 0).astype(float)
    return X, t


def test_separates_toy_data():
    X, t = _toy()
    m = fit_arrays(X, t, ["a", "b", "c"])
    acc = np.mean((m.proba(X) >= 0.5) == t)
    assert acc >= 0.95
    assert m.raw_weights[0] > 0 and m.raw_weights[1] > 0


def test_accuracy_on_presets(trained):
    for ds, model, _ in trained.values():
        assert np.mean((model.proba(ds.X) >= 0.5) == ds.classes) >= 0.85


def test_zero_learning_rate_keeps_init():
    X, t = _toy()
    init = np.array([0.1, -0.2, 0.3, 0.05])
    m = fit_arrays(X, t, "abc", TrainConfig(learning_rate=0.0, max_epochs=10), init=init)
    np.testing.assert_array_equal(m.weights, init[:-1])
    assert m.bias == init[-1]


def test_loss_decreases_monotonically():
    X, t = _toy()
    hist = []
    fit_arrays(X, t, "abc", TrainConfig(max_epochs=300), history=hist)
    assert all(b <= a + 1e-15 for a, b in zip(hist, hist[1:]))


def test_degenerate_labels():
    X, _ = _toy()
    with pytest.raises(DegenerateLabelsError):
        fit_arrays(X, np.ones(len(X)), "abc")


def test_gradient_matches_finite_differences():
    X, t = _toy(100)
    Z = (X - X.mean(0)) / X.std(0)
    rng = np.random.default_rng(5)
    for _ in range(10):
        p = rng.normal(size=4)
        _, g = loss_and_grad(p, Z, t, 0.01)
        h = 1e-6
        fd = np.array(
            [(loss_and_grad(p + h * e, Z, t, 0.01)[0] - loss_and_grad(p - h * e, Z, t, 0.01)[0]) / (2 * h) for e in np.eye(4)]
        )
        assert np.linalg.norm(fd - g) / np.linalg.norm(g) < 1e-5


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_proba_bounded(row):
    X, t = _toy()
    m = fit_arrays(X, t, "abc", TrainConfig(max_epochs=50))
    p = m.proba(np.array(row))
    assert 0.0 <= p <= 1.0 and np.isfinite(p)


def test_save_load(tmp_path, trained):
    ds, model, _ = trained["chain"]
    save_model(model, tmp_path / "m.json")
    again = load_model(tmp_path / "m.json")
    np.testing.assert_array_equal(again.proba(ds.X), model.proba(ds.X))
    assert predict_class(again, ds.unit(0).values) == predict_class(model, ds.unit(0).values)
