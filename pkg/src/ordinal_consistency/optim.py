"""Projection onto the monotone cone, conditional-risk minimization and
empirical risk minimization for linear threshold models."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .core import as_probs, get_link, pred_batch, simplex_grid
from .risk import excess_risk, lad_minimizer, threshold_uv
from .surrogates import SurrogateSpec, batch_loss_grad

logger = logging.getLogger(__name__)

_EPS = np.finfo(float).eps
_MAX_FLAT_STEPS = 20


@dataclass(frozen=True)
class OptimConfig:
    max_iters: int = 100_000
    grad_tolerance: float = 1e-8
    initial_step: float = 1.0
    backtrack: float = 0.5
    seed: int = 0
    # half-width of the box used by the exact solver for piecewise-linear phi
    lp_box: float = 1e3

    def __post_init__(self):
        if self.max_iters <= 0 or self.grad_tolerance <= 0 or self.initial_step <= 0:
            raise ValueError("max_iters, grad_tolerance and initial_step must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")

    @classmethod
    def conditional(cls, **kw):
        return cls(**kw)

    @classmethod
    def erm(cls, **kw):
        kw.setdefault("max_iters", 10_000)
        kw.setdefault("grad_tolerance", 1e-6)
        return cls(**kw)


# ---------------------------------------------------------------------------
# Pool adjacent violators
# ---------------------------------------------------------------------------


def project_monotone(v, weights=None) -> np.ndarray:
    """Projection onto nondecreasing vectors by pool adjacent violators.

    With ``weights`` the projection is taken in the weighted norm
    ``sum_i w_i (x_i - v_i)**2`` (weighted isotonic regression).
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size <= 1 or np.all(np.diff(v) >= 0):
        return v.copy()
    w = np.ones(v.size) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    means, wsum, counts = [], [], []
    for x, wi in zip(v, w):
        means.append(x)
        wsum.append(wi)
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            ws = wsum[-2] + wsum[-1]
            m = (means[-2] * wsum[-2] + means[-1] * wsum[-1]) / ws
            means[-2:] = [m]
            wsum[-2:] = [ws]
            counts[-2:] = [counts[-2] + counts[-1]]
    return np.repeat(means, counts)


# ---------------------------------------------------------------------------
# Projected gradient with backtracking
# ---------------------------------------------------------------------------


@dataclass
class PGResult:
    x: np.ndarray
    value: float
    n_iter: int
    converged: bool
    pg_norm: float
    history: list = field(default_factory=list)


def _newton_direction(H, g, x=None):
    """``H^{-1} g`` with eigenvalues floored so the direction stays a descent one.

    With ``x`` the step is restricted to the face of the monotone cone on
    which ``x`` lies: runs of tied coordinates move together.
    """
    H = 0.5 * (H + H.T)
    B = None
    if x is not None and x.size > 1:
        tied = np.diff(x) <= 1e-12 * np.maximum(1.0, np.abs(x[1:]))
        if np.any(tied):
            block = np.concatenate([[0], np.cumsum(~tied)])
            B = np.zeros((x.size, block[-1] + 1))
            B[np.arange(x.size), block] = 1.0
            H, g = B.T @ H @ B, B.T @ g
    lam, V = np.linalg.eigh(H)
    lam = np.maximum(lam, 1e-10 * max(1.0, float(np.max(np.abs(lam)))))
    d = V @ ((V.T @ g) / lam)
    return d if B is None else B @ d


def _polish(fun, project, x, f, direction, pg_norm):
    """Full Newton step judged by the projected gradient.

    Near the optimum the value changes less than its own rounding error, so
    the step is kept when the value stays within that noise and the
    projected-gradient norm at least halves.
    """
    x_new = project(x - direction, None)
    f_new, g_new = fun(x_new)
    if not (np.isfinite(f_new) and np.all(np.isfinite(g_new))):
        return None
    if f_new > f + 8 * _EPS * max(1.0, abs(f)):
        return None
    if np.linalg.norm(x_new - project(x_new - g_new, None)) > 0.5 * pg_norm:
        return None
    return x_new, f_new, g_new, 1.0


def projected_gradient(fun: Callable, x0, project: Callable, cfg: OptimConfig,
                       record=False, hess: Optional[Callable] = None) -> PGResult:
    """Minimize ``fun`` (returning value and gradient) over a convex set.

    ``project(v, weights)`` must return the projection of ``v`` in the norm
    weighted by ``weights`` (``None`` for the Euclidean norm).  Without
    ``hess`` trial steps come from a Barzilai-Borwein estimate.  ``hess``
    may return the Hessian diagonal, in which case each step is scaled by
    its inverse and projected in the matching metric, or the full matrix,
    in which case a projected Newton step is tried first and the diagonal
    step is the fallback.  Steps are shortened until the Armijo condition
    along the projection arc holds, so accepted values never increase.  The
    one exception is the full-matrix case near the optimum, where a Newton
    step may move the value by rounding noise (see ``_polish``).

    Convergence is declared on the Euclidean projected-gradient norm
    ``||x - P(x - g)||``.  The run also stops, unconverged, after
    ``_MAX_FLAT_STEPS`` accepted steps in a row without a decrease.
    """
    x = project(np.asarray(x0, dtype=float), None)
    f, g = fun(x)
    if not np.isfinite(f):
        raise FloatingPointError("objective is not finite at the starting point")
    step = cfg.initial_step
    history = [f] if record else []
    pg_norm = np.inf
    converged = False
    it = 0
    stalled = 0

    def search(direction, weights, t, t_min, strict=False):
        noise = 8 * _EPS * max(1.0, abs(f))
        while t >= t_min:
            x_new = project(x - t * direction, weights)
            d = x_new - x
            f_new, g_new = fun(x_new)
            # Armijo up to rounding noise, never an increase
            if np.isfinite(f_new) and f_new <= min(f, f + 1e-4 * float(g @ d) + noise) \
                    and not (strict and f_new == f):
                return x_new, f_new, g_new, t
            t *= cfg.backtrack
        return None

    for it in range(1, cfg.max_iters + 1):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient at iteration {it}: {g}")
        pg_norm = float(np.linalg.norm(x - project(x - g, None)))
        if pg_norm <= cfg.grad_tolerance:
            converged = True
            it -= 1
            break
        found = None
        if hess is None:
            found = search(g, None, step, 1e-20)
        else:
            H = np.asarray(hess(x), dtype=float)
            D = np.maximum(np.diag(H) if H.ndim == 2 else H, 1e-10)
            if H.ndim == 2:
                # Newton on the current face, then unrestricted Newton
                found = search(_newton_direction(H, g, x), D, cfg.initial_step, 1e-8, strict=True)
                if found is None:
                    found = search(_newton_direction(H, g), D, cfg.initial_step, 1e-8)
                if found is None:
                    found = _polish(fun, project, x, f, _newton_direction(H, g, x), pg_norm)
            if found is None:
                found = search(g / D, D, cfg.initial_step, 1e-20)
        if found is None:
            logger.debug("line search stalled at iteration %d (pg=%.3g)", it, pg_norm)
            break
        x_new, f_new, g_new, t = found
        # at the rounding floor accepted steps stop lowering the value
        stalled = stalled + 1 if f_new >= f else 0
        if stalled >= _MAX_FLAT_STEPS:
            logger.debug("no decrease for %d iterations (pg=%.3g)", stalled, pg_norm)
            break
        if hess is None:
            s, yv = x_new - x, g_new - g
            sy = float(s @ yv)
            step = float(s @ s) / sy if sy > 0 else 2.0 * t
            step = min(max(step, 1e-12), 1e12)
        x, f, g = x_new, f_new, g_new
        if record:
            history.append(f)
    return PGResult(x, float(f), it, converged, pg_norm, history)


# ---------------------------------------------------------------------------
# Conditional risk minimization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionalOptimum:
    alpha: np.ndarray
    A_hat: float
    n_iter: int
    converged: bool
    method: str
    # exact solver touched its box: the infimum is approached at infinity
    hit_box: bool = False


def _threshold_objective(spec, p):
    U, V = threshold_uv(spec, p)
    phi = spec.phi
    up, vp = U > 0, V > 0

    def fun(a):
        with np.errstate(over="ignore", invalid="ignore"):
            val = np.where(up, U * phi(a), 0.0) + np.where(vp, V * phi(-a), 0.0)
            grad = np.where(up, U * phi.grad(a), 0.0) - np.where(vp, V * phi.grad(-a), 0.0)
        total = float(np.sum(val))
        return (total if np.isfinite(total) else np.inf), grad

    def hess(a):
        with np.errstate(over="ignore", invalid="ignore"):
            h = np.where(up, U * phi.curvature(a), 0.0) + np.where(vp, V * phi.curvature(-a), 0.0)
        return np.nan_to_num(h, nan=0.0, posinf=1e300)

    return fun, hess, U, V


def _fd_hessian(fun, h=1e-6):
    """Forward-difference Hessian from gradients (backward when the step is infeasible)."""
    def hess(a):
        _, g0 = fun(a)
        H = np.empty((a.size, a.size))
        for i in range(a.size):
            e = np.zeros(a.size)
            e[i] = h
            val, g1 = fun(a + e)
            if np.isfinite(val):
                H[:, i] = (g1 - g0) / h
            else:
                _, g1 = fun(a - e)
                H[:, i] = (g0 - g1) / h
        return 0.5 * (H + H.T)

    return hess


def _lp_threshold(spec, p, cfg):
    """Exact minimizer when phi is a max of affine pieces."""
    m = spec.k - 1
    _, _, U, V = _threshold_objective(spec, p)
    pieces = spec.phi.pieces
    # variables: alpha (m), z_plus (m), z_minus (m)
    n = 3 * m
    c = np.concatenate([np.zeros(m), U, V])
    rows, rhs = [], []
    for slope, icpt in pieces:
        for i in range(m):
            r = np.zeros(n)
            r[i], r[m + i] = slope, -1.0
            rows.append(r)
            rhs.append(-icpt)
            r = np.zeros(n)
            r[i], r[2 * m + i] = -slope, -1.0
            rows.append(r)
            rhs.append(-icpt)
    for i in range(m - 1):
        r = np.zeros(n)
        r[i], r[i + 1] = 1.0, -1.0
        rows.append(r)
        rhs.append(0.0)
    B = cfg.lp_box
    bounds = [(-B, B)] * m + [(None, None)] * (2 * m)
    res = optimize.linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds,
                           method="highs")
    if res.status != 0:
        raise RuntimeError(f"linear program failed: {res.message}")
    alpha = project_monotone(res.x[:m])
    hit = bool(np.any(np.abs(alpha) >= B * (1 - 1e-9)))
    return alpha, hit


def _cl_start(k, link):
    return get_link(link).inverse(np.arange(1, k) / k)


def minimize_conditional(spec: SurrogateSpec, p, cfg: Optional[OptimConfig] = None
                         ) -> ConditionalOptimum:
    """Numerically minimize ``A(., p)`` over the monotone cone.

    Smooth threshold surrogates and the cumulative link use projected
    gradient from the origin (the cumulative link starts from the link
    quantiles of the uniform distribution, where it is defined).  Threshold
    surrogates whose ``phi`` is piecewise linear are solved exactly as a
    linear program, and LAD by the weighted median.
    """
    cfg = cfg or OptimConfig.conditional()
    p = as_probs(p)
    k = spec.k
    if p.size != k:
        raise ValueError(f"dimension mismatch: p has {p.size} classes, surrogate k={k}")
    if spec.family == "lad":
        alpha = lad_minimizer(p)
        labels = np.arange(1, k + 1)
        val = batch_loss_grad(spec, labels, np.tile(alpha, (k, 1)), p, with_grad=False)
        return ConditionalOptimum(alpha, float(val), 0, True, "median")
    if spec.is_threshold:
        fun, hess, _, _ = _threshold_objective(spec, p)
        if spec.phi.pieces is not None:
            alpha, hit = _lp_threshold(spec, p, cfg)
            return ConditionalOptimum(alpha, fun(alpha)[0], 0, True, "lp", hit)
        x0 = np.zeros(k - 1)
    else:
        labels = np.arange(1, k + 1)

        def fun(a):
            val, G = batch_loss_grad(spec, labels, np.broadcast_to(a, (k, k - 1)), p)
            return val, (G.sum(axis=0) if np.isfinite(val) else G[0])

        hess = _fd_hessian(fun)
        x0 = _cl_start(k, spec.link)
    res = projected_gradient(fun, x0, project_monotone, cfg, hess=hess)
    if not res.converged:
        logger.debug("%s did not converge at p=%s (pg=%.3g)", spec.describe(), p, res.pg_norm)
    return ConditionalOptimum(res.x, res.value, res.n_iter, res.converged, "projected-gradient")


# ---------------------------------------------------------------------------
# Empirical risk minimization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearThresholdModel:
    """``alpha(x) = theta - <w, x>`` with nondecreasing thresholds ``theta``."""

    weights: np.ndarray
    thresholds: np.ndarray
    converged: bool = True
    n_iter: int = 0
    # training set had one label; the model predicts it everywhere
    degenerate: bool = False
    history: tuple = ()

    def __post_init__(self):
        if np.any(np.diff(self.thresholds) < 0):
            raise ValueError("thresholds must be nondecreasing")

    @property
    def k(self) -> int:
        return self.thresholds.size + 1

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.thresholds[None, :] - (X @ self.weights)[:, None]

    def predict(self, X) -> np.ndarray:
        return pred_batch(self.decision_function(X))


def fit_linear_threshold(spec: SurrogateSpec, X, y, cfg: Optional[OptimConfig] = None,
                         record=True) -> LinearThresholdModel:
    """Minimize the mean training surrogate loss over ``(w, theta)``.

    Thresholds are projected back onto the monotone cone after every step.
    Initialization is ``w = 0``, ``theta_j = j - k/2``.  For LAD the
    thresholds are tied to ``theta_1 + j - 1``, the structure of the
    regression transform.
    """
    cfg = cfg or OptimConfig.erm()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int).reshape(-1)
    n, d = X.shape
    k, m = spec.k, spec.k - 1
    if y.size != n:
        raise ValueError("X and y have different numbers of samples")
    if np.any((y < 1) | (y > k)):
        raise ValueError(f"labels must lie in 1..{k}")
    labels = np.unique(y)
    if labels.size == 1:
        y0 = int(labels[0])
        theta = np.where(np.arange(1, k) < y0, -1.0, 1.0)
        logger.warning("single-class training set (label %d); returning constant model", y0)
        return LinearThresholdModel(np.zeros(d), theta, True, 0, True)

    lad = spec.family == "lad"
    offsets = np.arange(m, dtype=float)

    def unpack(z):
        w = z[:d]
        theta = z[d] + offsets if lad else z[d:]
        return w, theta

    def fun(z):
        w, theta = unpack(z)
        A = theta[None, :] - (X @ w)[:, None]
        val, G = batch_loss_grad(spec, y, A)
        if not np.isfinite(val):
            return np.inf, np.full_like(z, np.nan)
        row = G.sum(axis=1)
        gw = -(X.T @ row) / n
        gt = G.sum(axis=0) / n
        if lad:
            gt = np.array([gt.sum()])
        return val / n, np.concatenate([gw, gt])

    def project(z, weights=None):
        if lad:
            return z
        out = z.copy()
        out[d:] = project_monotone(z[d:])
        return out

    theta0 = np.arange(1, k, dtype=float) - k / 2.0
    z0 = np.concatenate([np.zeros(d), theta0[:1] if lad else theta0])
    res = projected_gradient(fun, z0, project, cfg, record=record)
    w, theta = unpack(res.x)
    return LinearThresholdModel(w.copy(), project_monotone(theta), res.converged, res.n_iter,
                                False, tuple(res.history))


@dataclass(frozen=True)
class LeastSquaresFit:
    coef: np.ndarray
    intercept: float
    rank_deficient: bool = False

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coef + self.intercept

    def predict(self, X, k) -> np.ndarray:
        return round_to_label(self.decision_function(X), k)


def round_to_label(beta, k) -> np.ndarray:
    """Nearest label in ``1..k`` (ties go to the lower label)."""
    beta = np.asarray(beta, dtype=float)
    return np.clip(np.ceil(beta - 0.5), 1, k).astype(int)


def fit_least_squares(X, y) -> LeastSquaresFit:
    """Least squares on the labels with an appended intercept column.

    Rank-deficient designs get the minimum-norm solution and are flagged.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    Z = np.hstack([X, np.ones((X.shape[0], 1))])
    sol, _, rank, _ = np.linalg.lstsq(Z, y, rcond=None)
    deficient = rank < Z.shape[1]
    if deficient:
        logger.warning("rank-deficient least squares design (rank %d < %d)", rank, Z.shape[1])
    return LeastSquaresFit(sol[:-1], float(sol[-1]), bool(deficient))


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    excluded: tuple = ()
    errors: np.ndarray = None


def grad_check(fun, grad, point, h=1e-6, kink_tol=1e-4) -> GradCheckResult:
    """Compare an analytic gradient with central differences.

    The relative error of a coordinate is ``|a - n| / max(1, |a|, |n|)``.
    Coordinates where forward and backward differences disagree by more
    than ``kink_tol`` sit on a kink; they are reported in ``excluded`` and
    left out of the maximum.
    """
    x = np.asarray(point, dtype=float)
    a = np.asarray(grad(x), dtype=float)
    f0 = float(fun(x))
    errs = np.zeros(x.size)
    excluded = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fp, fm = float(fun(x + e)), float(fun(x - e))
        central = (fp - fm) / (2 * h)
        fwd, bwd = (fp - f0) / h, (f0 - fm) / h
        if abs(fwd - bwd) > kink_tol * max(1.0, abs(central)):
            excluded.append(i)
            continue
        errs[i] = abs(a[i] - central) / max(1.0, abs(a[i]), abs(central))
    keep = np.setdiff1d(np.arange(x.size), excluded)
    worst = float(errs[keep].max()) if keep.size else 0.0
    return GradCheckResult(worst, tuple(excluded), errs)


@dataclass(frozen=True)
class SweepResult:
    max_excess: float
    worst_p: np.ndarray
    worst_alpha: np.ndarray
    n_points: int
    # per grid point: (p, alpha_hat, excess)
    rows: tuple = ()


def consistency_sweep(spec: SurrogateSpec, step=0.1, cfg: Optional[OptimConfig] = None,
                      loss=None, keep_rows=False) -> SweepResult:
    """Minimize the surrogate risk at every simplex-grid point and score it.

    The excess is measured for ``loss`` (default: the surrogate's target
    loss) by comparing risks, so ties at ``u_i = 1/2`` are never penalized.
    """
    loss = loss or spec.target_loss
    worst = (-np.inf, None, None)
    rows = []
    grid = simplex_grid(spec.k, step)
    for p in grid:
        opt = minimize_conditional(spec, p, cfg)
        ex = excess_risk(loss, opt.alpha, p)
        if ex > worst[0]:
            worst = (ex, p, opt.alpha)
        if keep_rows:
            rows.append((p, opt.alpha, ex))
    return SweepResult(float(worst[0]), worst[1], worst[2], len(grid), tuple(rows))


__all__ = [
    "OptimConfig", "project_monotone", "projected_gradient", "minimize_conditional",
    "ConditionalOptimum", "LinearThresholdModel", "fit_linear_threshold",
    "LeastSquaresFit", "fit_least_squares", "round_to_label", "grad_check",
    "GradCheckResult", "SweepResult", "consistency_sweep",
]
