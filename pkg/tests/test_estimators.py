import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score

from ordinal_consistency.estimators import (
    LeastSquaresOrdinalRegressor, ThresholdOrdinalRegressor, build_spec,
)


def data(rng, n=200):
    X = rng.normal(size=(n, 3))
    s = X @ np.array([1.0, -1.0, 0.5]) + 0.3 * rng.logistic(size=n)
    y = 1 + np.sum(s[:, None] > np.array([-1.0, 0.0, 1.0])[None, :], axis=1)
    return X, y


class TestThreshold:
    def test_params_roundtrip(self):
        est = ThresholdOrdinalRegressor(surrogate="at", phi="hinge", n_classes=4)
        params = est.get_params()
        assert params["surrogate"] == "at" and params["phi"] == "hinge"
        other = clone(est).set_params(phi="logistic")
        assert other.phi == "logistic" and est.phi == "hinge"

    def test_fit_predict(self, rng):
        X, y = data(rng)
        est = ThresholdOrdinalRegressor(n_classes=4).fit(X, y)
        pred = est.predict(X)
        assert pred.shape == y.shape and set(pred) <= {1, 2, 3, 4}
        assert np.all(np.diff(est.thresholds_) >= 0)
        assert est.score(X, y) == -np.mean((pred - y) ** 2)
        assert est.score(X, y) > -0.5

    @pytest.mark.parametrize("surrogate", ["at", "it", "cl", "lad", "gat"])
    def test_all_families(self, surrogate, rng):
        X, y = data(rng, 100)
        est = ThresholdOrdinalRegressor(surrogate=surrogate, max_iters=500).fit(X, y)
        assert est.n_classes_ == 4

    def test_validation(self, rng):
        X, y = data(rng, 20)
        with pytest.raises(ValueError):
            ThresholdOrdinalRegressor().fit(X, y - 1)
        with pytest.raises(ValueError):
            ThresholdOrdinalRegressor().fit(X, y + 0.5)
        with pytest.raises(ValueError):
            ThresholdOrdinalRegressor(n_classes=2).fit(X, y)
        with pytest.raises(ValueError):
            ThresholdOrdinalRegressor().fit(X[:5], y)
        X2 = X.copy()
        X2[0, 0] = np.nan
        with pytest.raises(ValueError):
            ThresholdOrdinalRegressor().fit(X2, y)
        with pytest.raises(ValueError):
            ThresholdOrdinalRegressor(surrogate="svm").fit(X, y)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            ThresholdOrdinalRegressor().predict(np.zeros((1, 2)))

    def test_feature_mismatch(self, rng):
        X, y = data(rng, 50)
        est = ThresholdOrdinalRegressor().fit(X, y)
        with pytest.raises(ValueError):
            est.predict(X[:, :2])

    def test_sklearn_cv(self, rng):
        X, y = data(rng, 120)
        scores = cross_val_score(ThresholdOrdinalRegressor(n_classes=4), X, y, cv=3)
        assert scores.shape == (3,) and np.all(scores <= 0)

    def test_single_class(self):
        X = np.arange(10.0)[:, None]
        est = ThresholdOrdinalRegressor(n_classes=3).fit(X, np.full(10, 3))
        assert est.degenerate_ and np.all(est.predict(X) == 3)


class TestLeastSquares:
    def test_fit_predict(self, rng):
        X, y = data(rng)
        est = LeastSquaresOrdinalRegressor(n_classes=4).fit(X, y)
        pred = est.predict(X)
        assert set(pred) <= {1, 2, 3, 4}
        assert est.get_params() == {"n_classes": 4}

    def test_exact(self):
        X = np.array([[1.0], [2.0], [3.0]])
        est = LeastSquaresOrdinalRegressor().fit(X, [1, 2, 3])
        assert np.array_equal(est.predict(X), [1, 2, 3])
        assert est.score(X, [1, 2, 3]) == 0.0


def test_build_spec():
    assert build_spec("gat", 4, "hinge", "squared").describe() == "GAT(hinge,squared)"
    assert build_spec("cl", 3, link="probit").describe() == "CL(probit)"
