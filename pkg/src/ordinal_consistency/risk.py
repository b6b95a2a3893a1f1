"""Conditional risks, Bayes oracles, closed-form surrogate optima, the
calibration (gamma) transform, excess-risk formulas and odds ratios.

Everything here works pointwise: ``p`` is the conditional label
distribution at one input and ``alpha`` one decision vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, special

from .core import (
    AdmissibleLoss,
    Phi,
    as_alpha,
    as_probs,
    get_link,
    get_phi,
    pred,
)
from .surrogates import SurrogateSpec, batch_loss_grad, lad_transform, surrogate_eval

BOUNDARY_CLAMP = 1e-12
RISK_ATOL = 1e-12


def _check_dims(alpha, p):
    if alpha.size != p.size - 1:
        raise ValueError(
            f"dimension mismatch: decision vector has {alpha.size} components, "
            f"distribution has {p.size} classes"
        )


# ---------------------------------------------------------------------------
# Cumulative probabilities
# ---------------------------------------------------------------------------


def cumulative_u(p) -> np.ndarray:
    """``u_i(p) = p_1 + ... + p_i`` for ``i = 1..k-1``."""
    p = as_probs(p)
    return np.cumsum(p)[:-1]


def uv_general(c, p):
    """Loss-weighted cumulative functions of an admissible loss.

    ``u_i = sum_{j<=i} p_j c_{i-j+1}`` and ``v_i = sum_{j>i} p_j c_{j-i}``,
    so that the GAT conditional risk is ``sum_i v_i phi(-a_i) + u_i phi(a_i)``.
    """
    p = as_probs(p)
    c = np.asarray(c, dtype=float)
    k = p.size
    if c.size != k - 1:
        raise ValueError(f"dimension mismatch: {c.size} coefficients for k={k}")
    u = np.zeros(k - 1)
    v = np.zeros(k - 1)
    for i in range(1, k):
        u[i - 1] = sum(p[j - 1] * c[i - j] for j in range(1, i + 1))
        v[i - 1] = sum(p[j - 1] * c[j - i - 1] for j in range(i + 1, k + 1))
    return u, v


def threshold_uv(spec: SurrogateSpec, p):
    """Per-coordinate weights ``(U, V)`` with ``A(a, p) = sum U_i phi(a_i) + V_i phi(-a_i)``."""
    from .surrogates import threshold_weights

    p = as_probs(p)
    W, S = threshold_weights(spec)
    return p @ (W * (S > 0)), p @ (W * (S < 0))


# ---------------------------------------------------------------------------
# Conditional risks
# ---------------------------------------------------------------------------


def label_risks(loss: AdmissibleLoss, p) -> np.ndarray:
    """Conditional risk of predicting each label ``r = 1..k``."""
    p = as_probs(p)
    k = p.size
    G = np.array([[loss.g(abs(i - r)) for i in range(1, k + 1)] for r in range(1, k + 1)])
    return G @ p


def conditional_risk(loss: AdmissibleLoss, alpha, p) -> float:
    """``L(alpha, p) = sum_i p_i l(i, alpha)`` by direct summation."""
    a, p = as_alpha(alpha), as_probs(p)
    _check_dims(a, p)
    r = pred(a)
    return float(sum(p[i - 1] * loss.g(abs(i - r)) for i in range(1, p.size + 1)))


def conditional_risk_uv(loss: AdmissibleLoss, alpha, p) -> float:
    """Conditional risk through the cumulative form ``sum_{i<r} u_i + sum_{i>=r} v_i``.

    For the absolute error ``v_i = 1 - u_i`` and this is the familiar
    cumulative-probability expression.
    """
    a, p = as_alpha(alpha), as_probs(p)
    _check_dims(a, p)
    r = pred(a)
    if loss.kind == "absolute":
        u = cumulative_u(p)
        v = 1.0 - u
    else:
        u, v = uv_general(loss.coeffs, p)
    return float(np.sum(u[: r - 1]) + np.sum(v[r - 1:]))


def surrogate_conditional_risk(spec: SurrogateSpec, alpha, p) -> float:
    """``A(alpha, p) = sum_i p_i psi(i, alpha)``; classes with ``p_i = 0`` are skipped."""
    a, p = as_alpha(alpha), as_probs(p)
    _check_dims(a, p)
    return float(sum(p[i - 1] * surrogate_eval(spec, i, a)
                     for i in range(1, p.size + 1) if p[i - 1] > 0))


def binary_risk(phi, beta, q) -> float:
    """``C(beta, q) = q phi(beta) + (1 - q) phi(-beta)``."""
    phi = get_phi(phi)
    return float(q * phi(beta) + (1.0 - q) * phi(-beta))


def at_risk_decomposed(phi, alpha, p) -> float:
    """All threshold conditional risk as ``sum_i C(a_i, u_i(p))``."""
    a, p = as_alpha(alpha), as_probs(p)
    _check_dims(a, p)
    u = cumulative_u(p)
    phi = get_phi(phi)
    return float(np.sum(u * phi(a) + (1.0 - u) * phi(-a)))


# ---------------------------------------------------------------------------
# Bayes oracles
# ---------------------------------------------------------------------------


def bayes_alpha(p) -> np.ndarray:
    """Bayes decision vector for the absolute error, ``2 u_i(p) - 1``."""
    return 2.0 * cumulative_u(p) - 1.0


def bayes_label_set(loss: AdmissibleLoss, p, atol=RISK_ATOL) -> set:
    """All labels attaining the minimal conditional risk (brute force over ``r``)."""
    risks = label_risks(loss, p)
    best = risks.min()
    return {int(r) + 1 for r in np.flatnonzero(risks <= best + atol)}


def bayes_risk(loss: AdmissibleLoss, p) -> float:
    return float(label_risks(loss, p).min())


# ---------------------------------------------------------------------------
# Closed-form optima
# ---------------------------------------------------------------------------


def _safe_xlogy(q):
    return special.xlogy(q, q) + special.xlogy(1.0 - q, 1.0 - q)


def binary_optimum(phi, q):
    """Minimizer and minimum of ``C(., q)`` for the built-in margin losses.

    Returns ``(beta_star, C_star)``.  Log-type minimizers are ``+-inf`` at
    ``q in {0, 1}``.  Custom losses fall back to a bounded scalar search,
    and their minimizer is only reported to the search window.
    """
    phi = get_phi(phi)
    q = np.asarray(q, dtype=float)
    name = phi.name if phi.builtin else None
    with np.errstate(divide="ignore"):
        if name == "hinge":
            return np.sign(2 * q - 1), 1.0 - np.abs(2 * q - 1)
        if name in ("squared_hinge", "squared"):
            return 2 * q - 1, 4 * q * (1 - q)
        if name == "logistic":
            return special.logit(q), -_safe_xlogy(q)
        if name == "exponential":
            return 0.5 * special.logit(q), 2 * np.sqrt(q * (1 - q))
    qs = np.atleast_1d(q)
    betas, vals = [], []
    for qi in qs:
        res = optimize.minimize_scalar(lambda b, qi=qi: binary_risk(phi, b, qi),
                                       bounds=(-50.0, 50.0), method="bounded",
                                       options={"xatol": 1e-10})
        betas.append(res.x)
        vals.append(res.fun)
    if q.ndim == 0:
        return float(betas[0]), float(vals[0])
    return np.array(betas), np.array(vals)


def binary_min(phi, q):
    return binary_optimum(phi, q)[1]


@dataclass(frozen=True)
class ClosedForm:
    alpha: np.ndarray
    A_star: float
    # components at +-inf because u_i is 0 or 1
    at_boundary: bool = False


def closed_form_minimizer(spec: SurrogateSpec, p, clamp=False) -> ClosedForm:
    """Closed-form surrogate optimum for all threshold and cumulative link.

    With ``clamp=True`` cumulative probabilities are pushed into
    ``[1e-12, 1 - 1e-12]`` so the returned vector is finite.
    """
    p = as_probs(p)
    if p.size != spec.k:
        raise ValueError(f"dimension mismatch: p has {p.size} classes, surrogate k={spec.k}")
    u = cumulative_u(p)
    u_eval = np.clip(u, BOUNDARY_CLAMP, 1 - BOUNDARY_CLAMP) if clamp else u
    if spec.family == "at":
        alpha, _ = binary_optimum(spec.phi, u_eval)
        _, cstar = binary_optimum(spec.phi, u)
        A_star = float(np.sum(cstar))
    elif spec.family == "cl":
        with np.errstate(divide="ignore"):
            alpha = get_link(spec.link).inverse(u_eval)
        A_star = float(-np.sum(special.xlogy(p, p)))
    else:
        raise ValueError(f"no closed form for the {spec.describe()} surrogate")
    alpha = np.asarray(alpha, dtype=float)
    return ClosedForm(alpha, A_star, bool(np.any(~np.isfinite(alpha))))


# ---------------------------------------------------------------------------
# Calibration transform and excess risk
# ---------------------------------------------------------------------------


def gamma_transform(phi, theta):
    """``gamma(theta) = phi(0) - C*((1 + theta) / 2)``."""
    phi = get_phi(phi)
    theta = np.asarray(theta, dtype=float)
    if np.any((theta < 0) | (theta > 1)):
        raise ValueError("theta must lie in [0, 1]")
    out = float(phi(0.0)) - binary_min(phi, 0.5 * (1.0 + theta))
    return float(out) if np.ndim(out) == 0 else out


def gamma_lower_bound(phi, theta):
    """Textbook closed forms of the calibration function.

    These coincide with :func:`gamma_transform` except for the logistic
    loss, where ``theta**2 / 2`` is a lower bound of the exact transform.
    """
    name = get_phi(phi).name
    theta = np.asarray(theta, dtype=float)
    forms = {
        "hinge": np.abs(theta),
        "squared_hinge": theta ** 2,
        "logistic": theta ** 2 / 2,
        "exponential": 1 - np.sqrt(np.clip(1 - theta ** 2, 0, None)),
        "squared": theta ** 2,
    }
    if name not in forms:
        raise ValueError(f"no textbook calibration function for {name!r}")
    out = forms[name]
    return float(out) if out.ndim == 0 else out


def excess_risk(loss: AdmissibleLoss, alpha, p) -> float:
    """``L(alpha, p) - L*(p)`` from the sign / cumulative formulas.

    Absolute error: ``sum_{i in I} |2 u_i - 1|`` where ``I`` collects the
    coordinates whose sign decision differs from the Bayes vector.
    Other admissible losses: the ``v - u`` / ``u - v`` partial sums between
    the predicted and a Bayes label.
    """
    a, p = as_alpha(alpha), as_probs(p)
    _check_dims(a, p)
    if loss.kind == "absolute":
        d = 2.0 * cumulative_u(p) - 1.0
        disagree = (a < 0) != (d < 0)
        return float(np.sum(np.abs(d[disagree])))
    u, v = uv_general(loss.coeffs, p)
    r = pred(a)
    r_star = min(bayes_label_set(loss, p))
    if r < r_star:
        return float(np.sum(v[r - 1: r_star - 1] - u[r - 1: r_star - 1]))
    if r > r_star:
        return float(np.sum(u[r_star - 1: r - 1] - v[r_star - 1: r - 1]))
    return 0.0


def check_excess_bound(phi, alpha, p) -> float:
    """Slack of the all threshold excess-risk bound.

    Returns ``(A - A*) / (k - 1) - gamma((L - L*) / (k - 1))`` for the
    absolute error and the AT surrogate built on ``phi``; the bound holds
    when the slack is nonnegative.
    """
    phi = get_phi(phi)
    if not phi.is_consistent_margin():
        raise ValueError(f"phi={phi.name} must be differentiable at 0 with phi'(0) < 0")
    if not phi.check_odd_part_decreasing():
        raise ValueError(f"phi={phi.name}: phi(b) - phi(-b) is not decreasing")
    a, p = as_alpha(alpha), as_probs(p)
    _check_dims(a, p)
    m = p.size - 1
    u = cumulative_u(p)
    A = at_risk_decomposed(phi, a, p)
    A_star = float(np.sum(binary_min(phi, u)))
    dL = excess_risk(AdmissibleLoss.absolute(p.size), a, p)
    theta = min(max(dL / m, 0.0), 1.0)
    return (A - A_star) / m - gamma_transform(phi, theta)


# ---------------------------------------------------------------------------
# Least absolute deviation
# ---------------------------------------------------------------------------


def lad_median_interval(p, atol=RISK_ATOL):
    """Smallest and largest label medians of ``Y ~ p``."""
    p = as_probs(p)
    cum = np.cumsum(p)
    lo = int(np.argmax(cum >= 0.5 - atol)) + 1
    hi = lo
    if abs(cum[lo - 1] - 0.5) <= atol:
        nxt = np.flatnonzero(p[lo:] > 0)
        if nxt.size:
            hi = lo + int(nxt[0]) + 1
    return lo, hi


def lad_minimizer(p, which="lower") -> np.ndarray:
    """Decision vector of a minimizer of the LAD conditional risk.

    The optimal regression value is a median of ``Y ~ p``; ``which`` picks
    the lower or upper end of the median interval or its midpoint.
    """
    p = as_probs(p)
    lo, hi = lad_median_interval(p)
    beta = {"lower": lo, "upper": hi, "mid": 0.5 * (lo + hi)}[which]
    return lad_transform(beta, p.size)


# ---------------------------------------------------------------------------
# Odds ratios and synthetic populations
# ---------------------------------------------------------------------------


def odds_ratio(p) -> np.ndarray:
    """``R_i = u_i / (1 - u_i) * (1 - u_{i+1}) / u_{i+1}`` for ``i = 1..k-2``."""
    u = cumulative_u(p)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("odds ratio needs 0 < u_i(p) < 1 for every i")
    odds = u / (1.0 - u)
    return odds[:-1] / odds[1:]


@dataclass(frozen=True)
class SyntheticPopulation:
    """A finite population of inputs ``x`` with conditional distributions ``eta(x)``."""

    X: np.ndarray
    eta: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        eta = np.atleast_2d(np.asarray(self.eta, dtype=float))
        if X.shape[0] != eta.shape[0]:
            raise ValueError("X and eta must have the same number of rows")
        for row in eta:
            as_probs(row)
        w = (np.full(X.shape[0], 1.0 / X.shape[0]) if self.weights is None
             else np.asarray(self.weights, dtype=float))
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("population weights must be nonnegative and sum to 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "weights", w)

    @classmethod
    def proportional_odds(cls, thresholds, scores, X=None, link="logit", weights=None):
        """Population with ``P(Y <= i | x) = sigma(theta_i - score(x))``.

        Under the logit link the odds ratios of every point are equal.
        """
        theta = np.asarray(thresholds, dtype=float)
        s = np.asarray(scores, dtype=float).reshape(-1)
        F = get_link(link).cdf(theta[None, :] - s[:, None])
        cum = np.hstack([np.zeros((s.size, 1)), F, np.ones((s.size, 1))])
        eta = np.diff(cum, axis=1)
        eta /= eta.sum(axis=1, keepdims=True)
        if X is None:
            X = s[:, None]
        return cls(X, eta, weights)

    def __len__(self):
        return self.X.shape[0]


# ---------------------------------------------------------------------------
# Full pointwise report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RiskReport:
    L_value: float
    L_star: float
    A_value: float
    A_star: float
    bayes_label_set: frozenset
    excess: float


def risk_report(loss: AdmissibleLoss, spec: Optional[SurrogateSpec], alpha, p,
                A_star: Optional[float] = None) -> RiskReport:
    """Collect task and surrogate risks at a single ``(alpha, p)``.

    When ``A_star`` is not supplied it comes from the closed form (all
    threshold / cumulative link) or from numerical minimization.
    """
    a, p = as_alpha(alpha), as_probs(p)
    _check_dims(a, p)
    L = conditional_risk(loss, a, p)
    L_star = bayes_risk(loss, p)
    A = np.nan
    if spec is not None:
        A = surrogate_conditional_risk(spec, a, p)
        if A_star is None:
            if spec.family in ("at", "cl"):
                A_star = closed_form_minimizer(spec, p).A_star
            elif spec.family == "lad":
                A_star = surrogate_conditional_risk(spec, lad_minimizer(p), p)
            else:
                from .optim import minimize_conditional

                A_star = minimize_conditional(spec, p).A_hat
    return RiskReport(L, L_star, float(A), float(np.nan if A_star is None else A_star),
                      frozenset(bayes_label_set(loss, p)), L - L_star)


def surrogate_risk_vector(spec: SurrogateSpec, alpha, p):
    """Vectorized ``A(alpha, p)`` and its gradient (optimizer helper)."""
    a = np.asarray(alpha, dtype=float)
    p = np.asarray(p, dtype=float)
    labels = np.arange(1, p.size + 1)
    val, G = batch_loss_grad(spec, labels, np.broadcast_to(a, (p.size, a.size)), p)
    return val, G.sum(axis=0)
