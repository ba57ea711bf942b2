import numpy as np
import pytest
from helpers import toy_texts
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from citesent.estimator import DenseHeadClassifier, TextClassifier
from citesent.smote import SmoteSampler, SmoteSpec, smote_augment

FAST = dict(encoder="meanpool", embed_dim=16, max_len=24, epochs=8)


def test_get_params_and_clone():
    est = TextClassifier(encoder="cnn", layers=1, widths=(5,), random_state=3)
    params = est.get_params()
    assert params["encoder"] == "cnn" and params["widths"] == (5,) and params["random_state"] == 3
    c = clone(est)
    assert c.get_params() == params and c is not est
    c.set_params(epochs=2)
    assert c.epochs == 2 and est.epochs == 40


def test_fit_predict_transform():
    X, y = toy_texts(("yes", "no"), 60)
    est = TextClassifier(**FAST).fit(X, y)
    assert list(est.classes_) == ["no", "yes"]
    assert est.score(X, y) >= 0.95
    proba = est.predict_proba(X[:5])
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert est.transform(X[:4]).shape == (4, 16)


def test_fit_with_eval_set_and_determinism():
    X, y = toy_texts(("a", "b", "c"), 30)
    Xv, yv = toy_texts(("a", "b", "c"), 5, seed=9)
    p1 = TextClassifier(**FAST).fit(X, y, eval_set=(Xv, yv)).predict_proba(Xv)
    p2 = TextClassifier(**FAST).fit(X, y, eval_set=(Xv, yv)).predict_proba(Xv)
    assert np.array_equal(p1, p2)


@pytest.mark.parametrize("kw", [{"class_weight": "balanced"}, {"class_weight": {"a": 1.0, "b": 3.0}},
                                {"loss": "focal"}, {"resampling": "up"}, {"resampling": "smote"}])
def test_imbalance_options(kw):
    X, y = toy_texts(("a", "b"), 40)
    X, y = X[:40] + X[40:52], y[:40] + y[40:52]
    est = TextClassifier(**{**FAST, "lr": 0.01, "validation_fraction": 0}, **kw).fit(X, y)
    assert est.score(X, y) >= 0.9


def test_input_validation():
    est = TextClassifier(**FAST)
    with pytest.raises(NotFittedError):
        est.predict(["x"])
    with pytest.raises(ValueError):
        est.fit(["a", "b"], ["x"])
    with pytest.raises(ValueError):
        est.fit(["a", "b"], ["x", "x"])
    with pytest.raises(ValueError):
        TextClassifier(**FAST, resampling="magic").fit(*toy_texts(("a", "b"), 10))
    with pytest.raises(ValueError):
        TextClassifier(**FAST, loss="weighted").fit(*toy_texts(("a", "b"), 10))


def test_dense_head_classifier():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(-2, 1, (50, 3)), rng.normal(2, 1, (50, 3))])
    y = np.array(["l"] * 50 + ["r"] * 50)
    clf = DenseHeadClassifier(epochs=30, lr=0.05).fit(X, y)
    assert clf.score(X, y) >= 0.95


# ---------------------------------------------------------------- SMOTE


def test_smote_convex_combination_and_counts():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 4))
    y = np.array([0] * 30 + [1] * 10)
    X2, y2, parents, lam = smote_augment(X, y, SmoteSpec(3, 25, (0.0, 1.0), 7), return_parents=True)
    assert X2.shape == (65, 4) and (y2[40:] == 1).all()
    assert np.array_equal(X2[:40], X)
    for v, (i, j), l in zip(X2[40:], parents, lam):
        assert y[i] == 1 and y[j] == 1 and i != j
        np.testing.assert_allclose(v, X[i] + l * (X[j] - X[i]), atol=1e-12)
        d = np.linalg.norm(v - X[i]) + np.linalg.norm(v - X[j]) - np.linalg.norm(X[j] - X[i])
        assert abs(d) < 1e-9


def test_smote_neighbours_are_nearest():
    X = np.array([[0.0], [1.0], [10.0], [11.0], [50.0]])
    y = np.ones(5, dtype=int)
    _, _, parents, _ = smote_augment(X, y, SmoteSpec(1, 40, (0.0, 1.0), 0), 1, return_parents=True)
    nearest = {0: 1, 1: 0, 2: 3, 3: 2, 4: 3}
    assert all(nearest[i] == j for i, j in parents)


def test_smote_errors_and_lambda_range():
    X = np.zeros((4, 2))
    with pytest.raises(ValueError):
        smote_augment(X, np.array([0, 0, 0, 1]), SmoteSpec(2, 5))
    with pytest.raises(ValueError):
        SmoteSpec(lambda_range=(0.5, 1.5))
    rng = np.random.default_rng(2)
    Xr = rng.normal(size=(20, 2))
    _, _, _, lam = smote_augment(Xr, np.zeros(20), SmoteSpec(3, 50, (0.2, 0.4), 1), return_parents=True)
    assert lam.min() >= 0.2 and lam.max() <= 0.4


def test_smote_sampler_balances():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(36, 3))
    y = np.array(["a"] * 20 + ["b"] * 10 + ["c"] * 6)
    Xo, yo = SmoteSampler(k_neighbors=3).fit_resample(X, y)
    assert dict(zip(*np.unique(yo, return_counts=True))) == {"a": 20, "b": 20, "c": 20}
    assert len(Xo) == 60
