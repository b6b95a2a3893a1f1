"""Domain types, binary margin losses, admissible task losses and the
prediction rule shared by the rest of the package.

Labels are always the integers ``1..k``; a decision vector has ``k - 1``
components and lives in the cone of nondecreasing vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

SIMPLEX_ATOL = 1e-12


# ---------------------------------------------------------------------------
# Decision vectors and simplex points
# ---------------------------------------------------------------------------


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DecisionVector:
    """A point of the monotone cone ``S`` (``k - 1`` nondecreasing scores)."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.size < 1:
            raise ValueError("decision vector needs at least one component (k >= 2)")
        if not np.all(np.isfinite(arr)):
            raise ValueError("decision vector has non-finite components")
        bad = np.flatnonzero(np.diff(arr) < 0)
        if bad.size:
            i = int(bad[0])
            raise ValueError(
                f"decision vector not monotone: component {i + 1} ({arr[i]:.9g}) "
                f"> component {i + 2} ({arr[i + 1]:.9g})"
            )
        object.__setattr__(self, "values", arr)

    @property
    def k(self) -> int:
        return self.values.size + 1

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class SimplexPoint:
    """A conditional label distribution ``p`` over ``k`` ordered classes."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.probs)
        if arr.size < 2:
            raise ValueError("simplex point needs at least two classes")
        if not np.all(np.isfinite(arr)):
            raise ValueError("simplex point has non-finite entries")
        if np.any(arr < 0):
            i = int(np.flatnonzero(arr < 0)[0])
            raise ValueError(f"simplex point has negative entry p[{i + 1}]={arr[i]:.9g}")
        total = float(arr.sum())
        if abs(total - 1.0) > SIMPLEX_ATOL:
            raise ValueError(f"simplex point does not sum to 1 (sum={total:.17g})")
        object.__setattr__(self, "probs", arr)

    @classmethod
    def normalized(cls, weights) -> "SimplexPoint":
        """Build a simplex point by explicitly renormalizing nonnegative weights."""
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        w = w / w.sum()
        # absorb rounding into the largest entry so the sum is 1 to 1 ulp
        w[np.argmax(w)] += 1.0 - w.sum()
        return cls(w)

    @property
    def k(self) -> int:
        return self.probs.size

    def __len__(self):
        return self.probs.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)


def as_alpha(alpha) -> np.ndarray:
    """Return the components of ``alpha`` as a validated float array."""
    if isinstance(alpha, DecisionVector):
        return alpha.values
    return DecisionVector(alpha).values


def as_probs(p) -> np.ndarray:
    if isinstance(p, SimplexPoint):
        return p.probs
    return SimplexPoint(p).probs


# ---------------------------------------------------------------------------
# Prediction rule
# ---------------------------------------------------------------------------


def pred(alpha) -> int:
    """Predicted label: one plus the number of strictly negative components.

    A component equal to zero is not counted, so ties at zero go to the
    lower label.
    """
    a = as_alpha(alpha)
    return 1 + int(np.count_nonzero(a < 0))


def pred_batch(A: np.ndarray) -> np.ndarray:
    """Row-wise :func:`pred` for an ``(n, k - 1)`` matrix (no monotonicity check)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return 1 + np.count_nonzero(A < 0, axis=1)


# ---------------------------------------------------------------------------
# Binary margin losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Phi:
    """A convex binary margin loss ``phi(t)``.

    ``subdiff_at_zero`` is the subdifferential interval at ``t = 0``; a
    degenerate interval means ``phi`` is differentiable there.
    ``pieces`` optionally lists ``(slope, intercept)`` pairs when ``phi`` is
    the pointwise max of affine functions, which lets the conditional-risk
    minimizer solve the problem exactly as a linear program.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    deriv: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, repr=False, compare=False
    )
    second: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, repr=False, compare=False
    )
    subdiff_at_zero: tuple = (0.0, 0.0)
    pieces: Optional[tuple] = None
    smooth: bool = True
    # phi(b) - phi(-b) is nonincreasing in b
    odd_part_decreasing: Optional[bool] = None
    builtin: bool = False

    @classmethod
    def custom(cls, func, deriv=None, subdiff_at_zero=None, pieces=None,
               smooth=None, name="custom", second=None):
        """Wrap a user supplied convex function.

        When ``deriv`` is omitted a central difference is used.  When
        ``subdiff_at_zero`` is omitted it is estimated from one-sided
        differences.
        """
        func = np.vectorize(func, otypes=[float]) if not _is_ufunc_like(func) else func
        if deriv is None:
            h = 1e-6

            def deriv(t, _f=func):
                t = np.asarray(t, dtype=float)
                return (_f(t + h) - _f(t - h)) / (2 * h)

        if subdiff_at_zero is None:
            h = 1e-7
            f0 = float(func(np.array(0.0)))
            left = (f0 - float(func(np.array(-h)))) / h
            right = (float(func(np.array(h))) - f0) / h
            if abs(right - left) < 1e-5:
                left = right = 0.5 * (left + right)
            subdiff_at_zero = (left, right)
        if pieces is not None:
            pieces = tuple((float(a), float(b)) for a, b in pieces)
        if smooth is None:
            smooth = pieces is None
        if second is None and pieces is not None:
            second = np.zeros_like
        return cls(name=name, func=func, deriv=deriv, second=second,
                   subdiff_at_zero=(float(subdiff_at_zero[0]), float(subdiff_at_zero[1])),
                   pieces=pieces, smooth=smooth)

    def __call__(self, t):
        return self.func(np.asarray(t, dtype=float))

    def grad(self, t):
        return self.deriv(np.asarray(t, dtype=float))

    def curvature(self, t):
        """Second derivative (zero on affine pieces); finite differences for custom losses."""
        t = np.asarray(t, dtype=float)
        if self.second is not None:
            return self.second(t)
        h = 1e-5
        return (self.grad(t + h) - self.grad(t - h)) / (2 * h)

    @property
    def differentiable_at_zero(self) -> bool:
        lo, hi = self.subdiff_at_zero
        return abs(hi - lo) <= 1e-9

    @property
    def deriv_at_zero(self) -> float:
        lo, hi = self.subdiff_at_zero
        return 0.5 * (lo + hi)

    def is_consistent_margin(self) -> bool:
        """Differentiable at zero with a negative derivative there."""
        return self.differentiable_at_zero and self.deriv_at_zero < 0

    def check_odd_part_decreasing(self, grid=None) -> bool:
        if self.odd_part_decreasing is not None:
            return self.odd_part_decreasing
        b = np.linspace(-20, 20, 4001) if grid is None else np.asarray(grid, dtype=float)
        d = self(b) - self(-b)
        return bool(np.all(np.diff(d) <= 1e-10 * (1 + np.abs(d[1:]))))


def _is_ufunc_like(func) -> bool:
    try:
        out = func(np.array([0.0, 1.0]))
        return np.shape(out) == (2,)
    except Exception:
        return False


def _hinge(t):
    return np.maximum(1.0 - t, 0.0)


def _hinge_grad(t):
    # left derivative at the kink t=1
    return np.where(t <= 1.0, -1.0, 0.0)


def _sq_hinge(t):
    return np.maximum(1.0 - t, 0.0) ** 2


def _sq_hinge_grad(t):
    return -2.0 * np.maximum(1.0 - t, 0.0)


def _sq_hinge_curv(t):
    return np.where(t < 1.0, 2.0, 0.0)


def _logistic(t):
    return np.logaddexp(0.0, -t)


def _logistic_grad(t):
    return -special.expit(-t)


def _logistic_curv(t):
    return special.expit(t) * special.expit(-t)


def _exponential(t):
    return np.exp(-t)


def _exponential_grad(t):
    return -np.exp(-t)


def _squared(t):
    return (1.0 - t) ** 2


def _squared_grad(t):
    return -2.0 * (1.0 - t)


HINGE = Phi("hinge", _hinge, _hinge_grad, np.zeros_like, (-1.0, -1.0), pieces=((-1.0, 1.0), (0.0, 0.0)),
            smooth=False, odd_part_decreasing=True, builtin=True)
SQUARED_HINGE = Phi("squared_hinge", _sq_hinge, _sq_hinge_grad, _sq_hinge_curv, (-2.0, -2.0),
                    odd_part_decreasing=True, builtin=True)
LOGISTIC = Phi("logistic", _logistic, _logistic_grad, _logistic_curv, (-0.5, -0.5),
               odd_part_decreasing=True, builtin=True)
EXPONENTIAL = Phi("exponential", _exponential, _exponential_grad, _exponential, (-1.0, -1.0),
                  odd_part_decreasing=True, builtin=True)
SQUARED = Phi("squared", _squared, _squared_grad, lambda t: np.full_like(t, 2.0), (-2.0, -2.0),
              odd_part_decreasing=True, builtin=True)

#: convex, kinked at zero with subdifferential [-2, -1]; an inconsistent margin loss
KINKED = Phi.custom(lambda t: np.maximum(1.0 - 2.0 * t, 1.0 - t),
                    deriv=lambda t: np.where(np.asarray(t) < 0, -2.0, -1.0),
                    subdiff_at_zero=(-2.0, -1.0),
                    pieces=((-2.0, 1.0), (-1.0, 1.0)), name="kinked")

BUILTIN_PHIS = (HINGE, SQUARED_HINGE, LOGISTIC, EXPONENTIAL, SQUARED)
_PHI_BY_NAME = {phi.name: phi for phi in BUILTIN_PHIS + (KINKED,)}


def get_phi(name) -> Phi:
    if isinstance(name, Phi):
        return name
    key = str(name).lower().replace("-", "_")
    try:
        return _PHI_BY_NAME[key]
    except KeyError:
        raise ValueError(
            f"unknown phi {name!r}; expected one of {sorted(_PHI_BY_NAME)}"
        ) from None


def _check_finite_scalar(t) -> float:
    t = float(t)
    if not np.isfinite(t):
        raise ValueError(f"non-finite argument {t!r}")
    return t


def phi_eval(phi, t) -> float:
    return float(get_phi(phi)(_check_finite_scalar(t)))


def phi_grad(phi, t) -> float:
    """Derivative of ``phi`` at ``t``; the hinge returns -1 at its kink ``t = 1``."""
    return float(get_phi(phi).grad(_check_finite_scalar(t)))


# ---------------------------------------------------------------------------
# Link functions
# ---------------------------------------------------------------------------

_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


@dataclass(frozen=True)
class Link:
    """A symmetric link ``sigma`` mapping R onto (0, 1), with log-space helpers."""

    name: str

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return special.expit(t) if self.name == "logit" else special.ndtr(t)

    def inverse(self, q):
        q = np.asarray(q, dtype=float)
        return special.logit(q) if self.name == "logit" else special.ndtri(q)

    def logcdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.name == "logit":
            return -np.logaddexp(0.0, -t)
        return special.log_ndtr(t)

    def logpdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.name == "logit":
            return self.logcdf(t) + self.logcdf(-t)
        return -0.5 * t * t - _LOG_SQRT_2PI

    def pdf(self, t):
        return np.exp(self.logpdf(t))


SIGMOID = Link("logit")
GAUSSIAN = Link("probit")
_LINK_BY_NAME = {"logit": SIGMOID, "sigmoid": SIGMOID, "logistic": SIGMOID,
                 "probit": GAUSSIAN, "gaussian": GAUSSIAN, "normal": GAUSSIAN}


def get_link(name) -> Link:
    if isinstance(name, Link):
        return name
    try:
        return _LINK_BY_NAME[str(name).lower()]
    except KeyError:
        raise ValueError(f"unknown link {name!r}; expected one of {sorted(_LINK_BY_NAME)}") from None


# ---------------------------------------------------------------------------
# Admissible task losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdmissibleLoss:
    """``l(y, alpha) = g(|y - pred(alpha)|)`` with ``g`` nondecreasing, ``g(0) = 0``."""

    kind: str
    k: int
    g_func: Optional[Callable[[int], float]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("absolute", "zero_one", "squared", "custom"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if int(self.k) < 2:
            raise ValueError("k must be at least 2")
        object.__setattr__(self, "k", int(self.k))
        if self.kind == "custom":
            if self.g_func is None:
                raise ValueError("custom loss needs g")
            if self.g(0) != 0:
                raise ValueError("custom g must satisfy g(0) = 0")
            c = self.coeffs
            if np.any(c < 0):
                i = int(np.flatnonzero(c < 0)[0]) + 1
                raise ValueError(f"g is not admissible: negative increment c_{i}={c[i - 1]:.9g}")

    @classmethod
    def absolute(cls, k):
        return cls("absolute", k)

    @classmethod
    def zero_one(cls, k):
        return cls("zero_one", k)

    @classmethod
    def squared(cls, k):
        return cls("squared", k)

    @classmethod
    def custom(cls, g, k):
        return cls("custom", k, g)

    def g(self, d):
        d = int(d)
        if self.kind == "absolute":
            return float(d)
        if self.kind == "zero_one":
            return float(d != 0)
        if self.kind == "squared":
            return float(d * d)
        return float(self.g_func(d))

    @property
    def coeffs(self) -> np.ndarray:
        """Increments ``c_i = g(i) - g(i - 1)`` for ``i = 1..k-1``."""
        return np.array([self.g(i) - self.g(i - 1) for i in range(1, self.k)], dtype=float)


_LOSS_ALIASES = {"absolute": "absolute", "abs": "absolute", "mae": "absolute",
                 "zero_one": "zero_one", "zero-one": "zero_one", "01": "zero_one",
                 "squared": "squared", "squared_error": "squared", "mse": "squared"}


def get_loss(name, k) -> AdmissibleLoss:
    if isinstance(name, AdmissibleLoss):
        return name
    try:
        return AdmissibleLoss(_LOSS_ALIASES[str(name).lower()], k)
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; expected absolute, zero_one or squared") from None


def cost_coeffs(loss: AdmissibleLoss) -> np.ndarray:
    return loss.coeffs


def _check_label(y, k) -> int:
    if int(y) != y or not 1 <= int(y) <= k:
        raise ValueError(f"label {y!r} outside 1..{k}")
    return int(y)


def loss_eval(loss: AdmissibleLoss, y, alpha) -> float:
    a = as_alpha(alpha)
    if a.size != loss.k - 1:
        raise ValueError(f"decision vector has {a.size} components, expected {loss.k - 1}")
    y = _check_label(y, loss.k)
    return loss.g(abs(y - pred(a)))


def loss_eval_expanded(loss: AdmissibleLoss, y, alpha) -> float:
    """Same as :func:`loss_eval` but through the increment expansion

    ``sum_{i<y} c_{y-i} [alpha_i >= 0] + sum_{i>=y} c_{i-y+1} [alpha_i < 0]``.
    """
    a = as_alpha(alpha)
    y = _check_label(y, loss.k)
    c = loss.coeffs
    total = 0.0
    for i in range(1, loss.k):
        if i < y:
            if a[i - 1] >= 0:
                total += c[y - i - 1]
        elif a[i - 1] < 0:
            total += c[i - y]
    return total


def simplex_grid(k: int, step) -> np.ndarray:
    """All points of the simplex in ``k`` dimensions with coordinates on a grid.

    ``step`` is either the grid spacing (``0.1``) or its inverse (``10``).
    """
    m = int(round(1.0 / step)) if step < 1 else int(step)
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + [remaining])
            return
        for j in range(remaining + 1):
            rec(prefix + [j], remaining - j, slots - 1)

    rec([], m, k)
    return np.array(out, dtype=float) / m


def random_simplex(rng: np.random.Generator, k: int, concentration=1.0) -> np.ndarray:
    p = rng.dirichlet(np.full(k, concentration))
    p[np.argmax(p)] += 1.0 - p.sum()
    return p


def random_monotone(rng: np.random.Generator, m: int, scale=2.0, strict=False) -> np.ndarray:
    a = np.sort(rng.normal(scale=scale, size=m))
    if strict:
        a = a + np.arange(m) * 1e-3
    return a


__all__ = [
    "DecisionVector", "SimplexPoint", "Phi", "Link", "AdmissibleLoss",
    "HINGE", "SQUARED_HINGE", "LOGISTIC", "EXPONENTIAL", "SQUARED", "KINKED",
    "BUILTIN_PHIS", "SIGMOID", "GAUSSIAN",
    "pred", "pred_batch", "phi_eval", "phi_grad", "cost_coeffs", "loss_eval",
    "loss_eval_expanded", "get_phi", "get_link", "get_loss", "simplex_grid",
    "as_alpha", "as_probs",
]
