"""Cross-validated comparison of a GAT threshold model against least squares.

Data files are delimited numeric text with one sample per row.  Targets are
binned into ordinal labels by equal-frequency discretization, features are
standardized on each training fold, and both methods are scored on the same
folds by the squared error between predicted and true labels.
"""
from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import os
import re
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm, rankdata
from sklearn.model_selection import KFold, StratifiedKFold

from .estimators import LeastSquaresOrdinalRegressor, ThresholdOrdinalRegressor

logger = logging.getLogger(__name__)

REPORT_HEADER = ("dataset", "method", "mean_sq_error", "std_sq_error", "folds",
                 "wilcoxon_p", "significant")
SIGNIFICANCE_LEVEL = 0.01
EXACT_MAX_N = 20


class DatasetFormatError(ValueError):
    """Base class for load failures; subclasses name the specific problem."""


class EmptyDatasetError(DatasetFormatError):
    pass


class RaggedRowsError(DatasetFormatError):
    pass


class NonNumericCellError(DatasetFormatError):
    def __init__(self, path, row, col, cell):
        self.row, self.col, self.cell = row, col, cell
        super().__init__(f"{path}: non-numeric cell {cell!r} at row {row} col {col}")


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray
    targets: np.ndarray
    k: int | None = None

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def with_labels(self, labels, k) -> "Dataset":
        return Dataset(self.name, self.features, np.asarray(labels, dtype=int), int(k))


_SPLIT = re.compile(r"[,\s]+")


def load_dataset(path, target_col=-1, name=None) -> Dataset:
    """Parse a comma- or whitespace-delimited numeric file.

    Parameters
    ----------
    path : path-like
    target_col : int
        Column holding the target, negative values count from the end.
    name : str, optional
        Defaults to the file stem.

    Raises
    ------
    EmptyDatasetError, RaggedRowsError, NonNumericCellError
        Rows and columns are reported 1-based.
    """
    path = Path(path)
    text = path.read_text()
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        cells = [c for c in _SPLIT.split(stripped) if c != ""]
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise RaggedRowsError(f"{path}: row {lineno} has {len(cells)} columns, expected {width}")
        values = []
        for col, cell in enumerate(cells, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericCellError(path, lineno, col, cell) from None
            if not math.isfinite(v):
                raise NonNumericCellError(path, lineno, col, cell)
            values.append(v)
        rows.append(values)
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    if width < 2:
        raise DatasetFormatError(f"{path}: need at least one feature column and a target column")
    M = np.array(rows)
    tc = target_col % width
    targets = M[:, tc]
    features = np.delete(M, tc, axis=1)
    logger.info("loaded %s: %d rows, %d columns", path, M.shape[0], width)
    return Dataset(name or path.stem, features, targets)


def discretize_targets(raw, k) -> np.ndarray:
    """Equal-frequency binning into labels ``1..k``.

    Bin ``j`` ends at the sample ranked ``ceil(j n / k)``.  Values tied with a
    bin boundary go to the lower bin.  When ties would leave a bin empty the
    boundary moves up to the next distinct value.
    """
    raw = np.asarray(raw, dtype=float).reshape(-1)
    n = raw.size
    if n < k:
        raise ValueError(f"need at least k={k} samples, got {n}")
    uniq = np.unique(raw)
    if uniq.size < k:
        raise ValueError(f"only {uniq.size} distinct target values, cannot form {k} bins")
    xs = np.sort(raw)
    edges = []
    lo = 0  # index in uniq of the smallest value still available
    for j in range(1, k):
        target = xs[math.ceil(j * n / k) - 1]
        idx = int(np.searchsorted(uniq, target))
        idx = min(max(idx, lo), uniq.size - 1 - (k - j))
        edges.append(uniq[idx])
        lo = idx + 1
    labels = 1 + np.searchsorted(np.array(edges), raw, side="left")
    return labels.astype(int)


def standardize(train, test):
    """Scale both arrays by the training mean and standard deviation.

    Constant training columns map to zero.
    """
    train = np.asarray(train, dtype=float)
    test = np.asarray(test, dtype=float)
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    ok = sd > 0
    scale = np.where(ok, sd, 1.0)
    tr = np.where(ok, (train - mu) / scale, 0.0)
    te = np.where(ok, (test - mu) / scale, 0.0)
    return tr, te


def squared_error_score(pred, true) -> float:
    pred = np.asarray(pred, dtype=float).reshape(-1)
    true = np.asarray(true, dtype=float).reshape(-1)
    if pred.size != true.size:
        raise ValueError(f"length mismatch: {pred.size} predictions, {true.size} labels")
    return float(np.mean((pred - true) ** 2))


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank


@dataclass(frozen=True)
class WilcoxonResult:
    pvalue: float
    statistic: float  # sum of ranks of positive differences
    n: int  # nonzero differences
    method: str  # "exact", "normal" or "degenerate"
    all_zero: bool = False


def wilcoxon_signed_rank(a, b) -> WilcoxonResult:
    """Two-sided signed-rank test of ``a - b``.

    Zero differences are dropped.  With at most 20 pairs left the null
    distribution is enumerated exactly over all sign patterns (mid-ranks for
    tied magnitudes are kept), otherwise a normal approximation with the tie
    corrected variance is used.  All-zero differences give ``p = 1`` with
    ``all_zero`` set.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        return WilcoxonResult(1.0, 0.0, 0, "degenerate", all_zero=True)
    if n < 6:
        warnings.warn(f"only {n} nonzero differences; the signed-rank test has little power",
                      RuntimeWarning, stacklevel=2)
    ranks = rankdata(np.abs(d))
    t_plus = float(ranks[d > 0].sum())
    if n <= EXACT_MAX_N:
        # doubled ranks are integers even with mid-ranks
        r2 = np.rint(2 * ranks).astype(int)
        total = int(r2.sum())
        counts = np.zeros(total + 1)
        counts[0] = 1.0
        for r in r2:
            shifted = np.zeros_like(counts)
            shifted[r:] = counts[:-r] if r > 0 else counts
            counts = counts + shifted
        probs = counts / counts.sum()
        t2 = int(round(2 * t_plus))
        lower = probs[: t2 + 1].sum()
        upper = probs[t2:].sum()
        p = min(1.0, 2.0 * min(lower, upper))
        return WilcoxonResult(float(p), t_plus, n, "exact")
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    z = (t_plus - mean) / math.sqrt(var)
    p = min(1.0, 2.0 * norm.sf(abs(z)))
    return WilcoxonResult(float(p), t_plus, n, "normal")


# ---------------------------------------------------------------------------
# Cross-validation


def _split_hash(train_idx, test_idx) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(train_idx, dtype=np.int64).tobytes())
    h.update(b"|")
    h.update(np.asarray(test_idx, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


def kfold_splits(n, folds, seed, labels=None):
    """Seeded shuffled k-fold splits as ``(train_idx, test_idx)`` pairs.

    Passing ``labels`` stratifies the folds by class.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if folds > n:
        raise ValueError(f"folds={folds} exceeds the {n} samples")
    if labels is None:
        splitter = KFold(n_splits=folds, shuffle=True, random_state=seed).split(np.zeros(n))
    else:
        splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed).split(
            np.zeros(n), labels)
    return [(np.sort(tr), np.sort(te)) for tr, te in splitter]


@dataclass(frozen=True)
class MethodSpec:
    name: str
    kind: str  # "gat" or "ls"
    phi: str = "logistic"

    def make(self, k):
        if self.kind == "ls":
            return LeastSquaresOrdinalRegressor(n_classes=k)
        return ThresholdOrdinalRegressor(surrogate="gat", phi=self.phi, loss="squared", n_classes=k)


GAT_LOGISTIC = MethodSpec("gat", "gat", "logistic")
LEAST_SQUARES = MethodSpec("ls", "ls")


@dataclass
class CVResult:
    dataset: str
    k: int
    scores: dict  # method name -> per-fold squared errors
    split_hashes: dict  # method name -> per-fold split hash


def cross_validate(methods, data: Dataset, folds=20, seed=0, standardize_features=True,
                   repeats=1, stratify=False) -> CVResult:
    """Score every method on the same shuffled folds.

    ``data`` must already carry ordinal labels (see :func:`discretize_targets`).
    With ``repeats > 1`` the split is redrawn with seeds ``seed, seed+1, ...``
    and the per-fold scores are concatenated.
    """
    if data.k is None:
        raise ValueError("dataset has no ordinal labels; discretize first")
    y = np.asarray(data.targets, dtype=int)
    counts = np.bincount(y, minlength=data.k + 1)[1:]
    if np.any(counts < folds):
        logger.warning("%s: some class has fewer samples (%d) than folds (%d)",
                       data.name, int(counts.min()), folds)
    splits = []
    for r in range(repeats):
        splits += kfold_splits(data.n_samples, folds, seed + r, y if stratify else None)
    scores = {m.name: [] for m in methods}
    hashes = {m.name: [] for m in methods}
    for tr, te in splits:
        Xtr, Xte = data.features[tr], data.features[te]
        if standardize_features:
            Xtr, Xte = standardize(Xtr, Xte)
        for m in methods:
            est = m.make(data.k).fit(Xtr, y[tr])
            scores[m.name].append(squared_error_score(est.predict(Xte), y[te]))
            hashes[m.name].append(_split_hash(tr, te))
    return CVResult(data.name, data.k, {m: np.array(s) for m, s in scores.items()}, hashes)


# ---------------------------------------------------------------------------
# Reports


@dataclass
class BenchmarkReport:
    folds: int
    results: list = field(default_factory=list)  # CVResult
    failures: dict = field(default_factory=dict)  # dataset -> message

    def rows(self, reference="gat", baseline="ls"):
        out = []
        for res in self.results:
            if reference in res.scores and baseline in res.scores:
                p = wilcoxon_signed_rank(res.scores[reference], res.scores[baseline]).pvalue
            else:
                p = float("nan")
            for method in sorted(res.scores):
                s = res.scores[method]
                out.append((res.dataset, method, float(np.mean(s)), float(np.std(s, ddof=1)) if s.size > 1 else 0.0,
                            int(s.size), p, bool(p < SIGNIFICANCE_LEVEL)))
        out.sort(key=lambda r: (r[0], r[1]))
        return out

    def winners(self, reference="gat", baseline="ls"):
        """Dataset -> name of the method with the lower mean error."""
        out = {}
        for res in self.results:
            a, b = np.mean(res.scores[reference]), np.mean(res.scores[baseline])
            out[res.dataset] = reference if a < b else baseline if b < a else "tie"
        return out


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x + 0.0:.9g}"


def render_report(report: BenchmarkReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for row in report.rows():
        w.writerow([row[0], row[1]] + [_fmt(v) for v in row[2:]])
    return buf.getvalue()


def emit_report(report: BenchmarkReport, path) -> Path:
    """Write the report CSV atomically (temp file in the target dir, then rename)."""
    path = Path(path)
    text = render_report(report)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# ---------------------------------------------------------------------------
# Synthetic data


PLANTED_THRESHOLDS = (-1.0, -0.5, 0.0, 3.0)


def planted_dataset(n=2000, d=5, thresholds=PLANTED_THRESHOLDS, noise=0.5, seed=0,
                    name="planted"):
    """Draw labels from a planted linear threshold model with logistic noise.

    Uneven threshold gaps make the label values a poor linear target, which
    is where the threshold model should beat least squares.  Returns the
    dataset and the planted ``(w, theta)``.
    """
    rng = np.random.default_rng(seed)
    theta = np.asarray(thresholds, dtype=float)
    w = rng.normal(size=d)
    w *= 1.5 / np.linalg.norm(w)
    X = rng.normal(size=(n, d))
    score = X @ w + noise * rng.logistic(size=n)
    y = 1 + np.sum(score[:, None] > theta[None, :], axis=1)
    k = theta.size + 1
    return Dataset(name, X, y.astype(int), k), (w, theta)


def run_benchmark(datasets, folds=20, seed=0, k=5, phi="logistic", standardize_features=True,
                  repeats=1, stratify=False):
    """Cross-validate GAT and least squares on each dataset.

    ``datasets`` holds paths or :class:`Dataset` objects.  Raw targets are
    binned into ``k`` labels unless the dataset already carries labels.  A
    failure on one dataset is recorded and the rest proceed.
    """
    methods = [MethodSpec("gat", "gat", phi), LEAST_SQUARES]
    report = BenchmarkReport(folds * repeats)
    for item in datasets:
        label = str(item) if not isinstance(item, Dataset) else item.name
        try:
            data = item if isinstance(item, Dataset) else load_dataset(item)
            label = data.name
            if data.k is None:
                data = data.with_labels(discretize_targets(data.targets, k), k)
            report.results.append(cross_validate(methods, data, folds, seed, standardize_features,
                                                 repeats, stratify))
        except Exception as exc:  # isolate per-dataset failures
            logger.error("dataset %s failed: %s", label, exc)
            report.failures[label] = f"{type(exc).__name__}: {exc}"
    return report
