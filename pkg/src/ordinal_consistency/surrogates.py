"""Ordinal surrogate losses psi(y, alpha) and their gradients.

Five families are supported:

* ``at``  -- all threshold, ``sum_{i<y} phi(-a_i) + sum_{i>=y} phi(a_i)``
* ``it``  -- immediate threshold, ``phi(-a_{y-1}) + phi(a_y)``
* ``cl``  -- cumulative link, the negative log-likelihood of
  ``P(Y <= i) = sigma(a_i)``
* ``lad`` -- least absolute deviation on the transformed vector,
  ``|y + a_1 - 3/2|``
* ``gat`` -- generalized all threshold, the all threshold loss with each
  term weighted by the increments of an admissible loss.

The scalar functions :func:`surrogate_eval` / :func:`surrogate_grad` follow
the defining formulas one label at a time.  :func:`batch_loss_grad` is the
vectorized path used by the optimizers; the test-suite checks that both
agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    AdmissibleLoss,
    Link,
    Phi,
    _check_label,
    as_alpha,
    get_link,
    get_loss,
    get_phi,
)

CL_FLOOR = 1e-300
_LOG_CL_FLOOR = np.log(CL_FLOOR)

FAMILIES = ("at", "it", "cl", "lad", "gat")


class SurrogateDomainError(ValueError):
    """Raised when a cumulative-link likelihood is not positive."""


@dataclass(frozen=True)
class SurrogateSpec:
    """A surrogate family together with its base loss / link and ``k``."""

    family: str
    k: int
    phi: Optional[Phi] = None
    link: Optional[Link] = None
    loss: Optional[AdmissibleLoss] = None

    def __post_init__(self):
        family = self.family.lower()
        if family not in FAMILIES:
            raise ValueError(f"unknown surrogate family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "k", int(self.k))
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if family in ("at", "it", "gat"):
            if self.phi is None:
                raise ValueError(f"{family} surrogate needs a base loss phi")
            object.__setattr__(self, "phi", get_phi(self.phi))
        if family == "gat":
            if self.loss is None:
                raise ValueError("gat surrogate needs an admissible loss")
            loss = get_loss(self.loss, self.k)
            if loss.k != self.k:
                raise ValueError(f"loss defined for k={loss.k}, surrogate for k={self.k}")
            object.__setattr__(self, "loss", loss)
        if family == "cl":
            object.__setattr__(self, "link", get_link(self.link if self.link is not None else "logit"))

    @classmethod
    def at(cls, phi, k):
        return cls("at", k, phi=phi)

    @classmethod
    def it(cls, phi, k):
        return cls("it", k, phi=phi)

    @classmethod
    def cl(cls, link, k):
        return cls("cl", k, link=link)

    @classmethod
    def lad(cls, k):
        return cls("lad", k)

    @classmethod
    def gat(cls, phi, loss, k):
        return cls("gat", k, phi=phi, loss=loss)

    @property
    def target_loss(self) -> AdmissibleLoss:
        """The task loss this surrogate is designed for."""
        if self.family == "gat":
            return self.loss
        if self.family == "it":
            return AdmissibleLoss.zero_one(self.k)
        return AdmissibleLoss.absolute(self.k)

    @property
    def is_threshold(self) -> bool:
        return self.family in ("at", "it", "gat")

    def describe(self) -> str:
        if self.family in ("at", "it"):
            return f"{self.family.upper()}({self.phi.name})"
        if self.family == "gat":
            return f"GAT({self.phi.name},{self.loss.kind})"
        if self.family == "cl":
            return f"CL({self.link.name})"
        return "LAD"


def lad_transform(beta: float, k: int) -> np.ndarray:
    """Map a real regression output to a decision vector, ``a_i = i + 1/2 - beta``."""
    return np.arange(1, k, dtype=float) + 0.5 - float(beta)


def threshold_weights(spec: SurrogateSpec):
    """``(k, k-1)`` weight and sign matrices of a threshold-family surrogate.

    ``psi(y, a) = sum_i W[y-1, i] * phi(S[y-1, i] * a_i)``.
    """
    k = spec.k
    if spec.family == "at":
        c = np.ones(k - 1)
    elif spec.family == "it":
        c = np.zeros(k - 1)
        c[0] = 1.0
    elif spec.family == "gat":
        c = spec.loss.coeffs
    else:
        raise ValueError(f"{spec.family} is not a threshold surrogate")
    y = np.arange(1, k + 1)[:, None]
    i = np.arange(1, k)[None, :]
    below = i < y
    idx = np.where(below, y - i, i - y + 1) - 1
    W = c[idx]
    S = np.where(below, -1.0, 1.0)
    return W, S


# ---------------------------------------------------------------------------
# Scalar path: one label, formulas written out per family
# ---------------------------------------------------------------------------


def _cl_log_interval(link: Link, lo: float, hi: float) -> float:
    """``log(sigma(hi) - sigma(lo))`` for ``lo < hi`` in log space.

    Uses the mirrored form ``sigma(-lo) - sigma(-hi)`` when both sit in the
    upper tail so neither term rounds to 1.
    """
    if hi <= lo:
        raise SurrogateDomainError(
            f"cumulative link likelihood sigma({hi:.9g}) - sigma({lo:.9g}) is not positive"
        )
    if link.name == "logit":
        # sigma(hi) - sigma(lo) = sigma(hi) * sigma(-lo) * (1 - exp(lo - hi))
        val = float(link.logcdf(hi) + link.logcdf(-lo)) + np.log(-np.expm1(lo - hi))
        if not val > _LOG_CL_FLOOR:
            raise SurrogateDomainError(
                f"cumulative link likelihood sigma({hi:.9g}) - sigma({lo:.9g}) below {CL_FLOOR:g}"
            )
        return val
    if lo > 0:
        a, b = float(link.logcdf(-lo)), float(link.logcdf(-hi))
    else:
        a, b = float(link.logcdf(hi)), float(link.logcdf(lo))
    # a = log of the larger cdf value, b of the smaller
    val = a + np.log(-np.expm1(b - a)) if b - a < 0 else -np.inf
    if not val > _LOG_CL_FLOOR:
        raise SurrogateDomainError(
            f"cumulative link likelihood sigma({hi:.9g}) - sigma({lo:.9g}) below {CL_FLOOR:g}"
        )
    return val


def surrogate_eval(spec: SurrogateSpec, y, alpha) -> float:
    k = spec.k
    y = _check_label(y, k)
    a = as_alpha(alpha)
    if a.size != k - 1:
        raise ValueError(f"decision vector has {a.size} components, expected {k - 1}")
    fam = spec.family
    if fam == "at":
        # index-ordered accumulation, the same as the GAT branch
        phi = spec.phi
        total = 0.0
        for i in range(1, y):
            total += float(phi(-a[i - 1]))
        for i in range(y, k):
            total += float(phi(a[i - 1]))
        return total
    if fam == "it":
        phi = spec.phi
        total = 0.0
        if y > 1:
            total += float(phi(-a[y - 2]))
        if y < k:
            total += float(phi(a[y - 1]))
        return total
    if fam == "gat":
        phi, c = spec.phi, spec.loss.coeffs
        total = 0.0
        for i in range(1, y):
            total += float(phi(-a[i - 1])) * c[y - i - 1]
        for i in range(y, k):
            total += float(phi(a[i - 1])) * c[i - y]
        return total
    if fam == "lad":
        return abs(y + a[0] - 1.5)
    link = spec.link
    if y == 1:
        val = -float(link.logcdf(a[0]))
    elif y == k:
        val = -float(link.logcdf(-a[k - 2]))
    else:
        val = -_cl_log_interval(link, a[y - 2], a[y - 1])
    if not np.isfinite(val):
        raise SurrogateDomainError(f"cumulative link likelihood underflow for label {y}")
    return val


def surrogate_grad(spec: SurrogateSpec, y, alpha) -> np.ndarray:
    """Gradient of :func:`surrogate_eval` in ``alpha``.

    At points where ``phi`` is not differentiable the convention of
    ``Phi.grad`` is used (left derivative for the hinge).  LAD returns 0 at
    a zero residual, the midpoint of its subdifferential.
    """
    k = spec.k
    y = _check_label(y, k)
    a = as_alpha(alpha)
    if a.size != k - 1:
        raise ValueError(f"decision vector has {a.size} components, expected {k - 1}")
    g = np.zeros(k - 1)
    fam = spec.family
    if fam in ("at", "gat"):
        c = np.ones(k - 1) if fam == "at" else spec.loss.coeffs
        phi = spec.phi
        for i in range(1, k):
            if i < y:
                g[i - 1] = -float(phi.grad(-a[i - 1])) * c[y - i - 1]
            else:
                g[i - 1] = float(phi.grad(a[i - 1])) * c[i - y]
        return g
    if fam == "it":
        phi = spec.phi
        if y > 1:
            g[y - 2] = -float(phi.grad(-a[y - 2]))
        if y < k:
            g[y - 1] = float(phi.grad(a[y - 1]))
        return g
    if fam == "lad":
        g[0] = float(np.sign(y + a[0] - 1.5))
        return g
    link = spec.link
    if y == 1:
        g[0] = -np.exp(float(link.logpdf(a[0]) - link.logcdf(a[0])))
    elif y == k:
        g[k - 2] = np.exp(float(link.logpdf(a[k - 2]) - link.logcdf(-a[k - 2])))
    else:
        lo, hi = a[y - 2], a[y - 1]
        log_mass = _cl_log_interval(link, lo, hi)
        g[y - 1] = -np.exp(float(link.logpdf(hi)) - log_mass)
        g[y - 2] = np.exp(float(link.logpdf(lo)) - log_mass)
    return g


# ---------------------------------------------------------------------------
# Vectorized path
# ---------------------------------------------------------------------------


def _cl_log_interval_vec(link: Link, lo, hi):
    if link.name == "logit":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = link.logcdf(hi) + link.logcdf(-lo) + np.log(-np.expm1(np.minimum(lo - hi, 0.0)))
        return np.where(hi > lo, out, -np.inf)
    upper = lo > 0
    big = np.where(upper, link.logcdf(-lo), link.logcdf(hi))
    small = np.where(upper, link.logcdf(-hi), link.logcdf(lo))
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = small - big
        out = np.where(diff < 0, big + np.log(-np.expm1(np.minimum(diff, -1e-300))), -np.inf)
    return np.where(hi > lo, out, -np.inf)


def batch_loss_grad(spec: SurrogateSpec, y, A, weights=None, with_grad=True):
    """Weighted sum of ``psi(y_n, A[n])`` and its gradient w.r.t. ``A``.

    ``A`` is ``(n, k-1)`` and ``y`` holds labels in ``1..k``.  Rows with
    zero weight are skipped (so a cumulative-link term that is not defined
    does not matter when its weight is zero).  For the cumulative link an
    undefined term with positive weight makes the value ``+inf``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    y = np.asarray(y, dtype=int).reshape(-1)
    n, m = A.shape
    k = spec.k
    if m != k - 1:
        raise ValueError(f"decision matrix has {m} columns, expected {k - 1}")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    keep = w != 0
    if not np.all(keep):
        A, y, w = A[keep], y[keep], w[keep]
    G = np.zeros_like(A) if with_grad else None
    fam = spec.family
    if fam in ("at", "it", "gat"):
        W, S = threshold_weights(spec)
        Wy, Sy = W[y - 1], S[y - 1]
        Z = Sy * A
        vals = spec.phi(Z)
        value = float(np.sum(w[:, None] * Wy * vals))
        if with_grad:
            G = w[:, None] * Wy * Sy * spec.phi.grad(Z)
    elif fam == "lad":
        r = y + A[:, 0] - 1.5
        value = float(np.sum(w * np.abs(r)))
        if with_grad:
            G[:, 0] = w * np.sign(r)
    else:
        link = spec.link
        logp = np.empty(A.shape[0])
        first = y == 1
        last = y == k
        mid = ~(first | last)
        logp[first] = link.logcdf(A[first, 0])
        logp[last] = link.logcdf(-A[last, k - 2])
        rows = np.flatnonzero(mid)
        lo = A[rows, y[rows] - 2]
        hi = A[rows, y[rows] - 1]
        logp[rows] = _cl_log_interval_vec(link, lo, hi)
        if np.any(~(logp > _LOG_CL_FLOOR)):
            value = np.inf
            if with_grad:
                G[:] = np.nan
        else:
            value = float(-np.sum(w * logp))
            if with_grad:
                r1 = np.flatnonzero(first)
                G[r1, 0] = -w[r1] * np.exp(link.logpdf(A[r1, 0]) - logp[r1])
                rk = np.flatnonzero(last)
                G[rk, k - 2] = w[rk] * np.exp(link.logpdf(A[rk, k - 2]) - logp[rk])
                G[rows, y[rows] - 1] = -w[rows] * np.exp(link.logpdf(hi) - logp[rows])
                G[rows, y[rows] - 2] = w[rows] * np.exp(link.logpdf(lo) - logp[rows])
    if with_grad and not np.all(keep):
        full = np.zeros((n, m))
        full[keep] = G
        G = full
    return (value, G) if with_grad else value
