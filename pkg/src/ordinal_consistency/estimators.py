"""scikit-learn compatible wrappers around the ERM trainers.

Labels are integers ``1..k``.  ``k`` is taken from ``n_classes`` when given,
otherwise from the largest training label.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import get_link, get_loss, get_phi
from .optim import OptimConfig, fit_least_squares, fit_linear_threshold, round_to_label
from .surrogates import SurrogateSpec


def _check_labels(y, n_classes):
    y = np.asarray(y)
    if not np.all(np.equal(np.mod(y, 1), 0)):
        raise ValueError("ordinal labels must be integers")
    y = y.astype(int)
    if y.min() < 1:
        raise ValueError(f"ordinal labels must be >= 1, got {y.min()}")
    k = int(n_classes) if n_classes is not None else int(y.max())
    if k < 2:
        raise ValueError("need at least 2 classes")
    if y.max() > k:
        raise ValueError(f"label {y.max()} exceeds n_classes={k}")
    return y, k


def build_spec(surrogate, k, phi="logistic", loss="squared", link="logit") -> SurrogateSpec:
    surrogate = surrogate.lower()
    if surrogate in ("at", "it"):
        return SurrogateSpec(surrogate, k, phi=get_phi(phi))
    if surrogate == "gat":
        return SurrogateSpec.gat(get_phi(phi), get_loss(loss, k), k)
    if surrogate == "cl":
        return SurrogateSpec.cl(get_link(link), k)
    if surrogate == "lad":
        return SurrogateSpec.lad(k)
    raise ValueError(f"unknown surrogate {surrogate!r}; expected one of at, it, cl, lad, gat")


class ThresholdOrdinalRegressor(RegressorMixin, BaseEstimator):
    """Linear threshold model ``alpha(x) = theta - <w, x>`` fit by surrogate ERM.

    Parameters
    ----------
    surrogate : {"gat", "at", "it", "cl", "lad"}
    phi : str
        Base margin loss for the threshold families.
    loss : str
        Admissible loss whose increments weight the GAT terms.
    link : str
        Link for the cumulative-link family.
    n_classes : int, optional
    max_iters, tol : optimizer budget and projected-gradient tolerance.

    Attributes
    ----------
    coef_, thresholds_ : fitted parameters
    n_classes_ : int
    converged_ : bool
    degenerate_ : bool
        True when the training labels contained a single class.
    """

    def __init__(self, surrogate="gat", phi="logistic", loss="squared", link="logit",
                 n_classes=None, max_iters=10_000, tol=1e-6):
        self.surrogate = surrogate
        self.phi = phi
        self.loss = loss
        self.link = link
        self.n_classes = n_classes
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        y, k = _check_labels(y, self.n_classes)
        spec = build_spec(self.surrogate, k, self.phi, self.loss, self.link)
        cfg = OptimConfig(max_iters=self.max_iters, grad_tolerance=self.tol)
        model = fit_linear_threshold(spec, X, y, cfg)
        self.model_ = model
        self.coef_ = model.weights
        self.thresholds_ = model.thresholds
        self.n_classes_ = k
        self.n_features_in_ = X.shape[1]
        self.converged_ = model.converged
        self.degenerate_ = model.degenerate
        self.n_iter_ = model.n_iter
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.model_.decision_function(X)

    def predict(self, X):
        return 1 + np.sum(self.decision_function(X) < 0, axis=1)

    def score(self, X, y, sample_weight=None):
        """Negative mean squared error between predicted and true labels."""
        diff = self.predict(X) - np.asarray(y)
        return -float(np.average(diff ** 2, weights=sample_weight))


class LeastSquaresOrdinalRegressor(RegressorMixin, BaseEstimator):
    """Ordinary least squares on the label values, rounded to the closest label."""

    def __init__(self, n_classes=None):
        self.n_classes = n_classes

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        y, k = _check_labels(y, self.n_classes)
        fit = fit_least_squares(X, y)
        self.fit_ = fit
        self.coef_ = fit.coef
        self.intercept_ = fit.intercept
        self.rank_deficient_ = fit.rank_deficient
        self.n_classes_ = k
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.fit_.decision_function(X)

    def predict(self, X):
        return round_to_label(self.decision_function(X), self.n_classes_)

    def score(self, X, y, sample_weight=None):
        """Negative mean squared error between predicted and true labels."""
        diff = self.predict(X) - np.asarray(y)
        return -float(np.average(diff ** 2, weights=sample_weight))
