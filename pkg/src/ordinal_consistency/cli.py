"""Command-line interface.

Subcommands
-----------
risk         task and surrogate risks at one ``(alpha, p)``
consistency  simplex-grid sweep of the surrogate minimizer's excess risk
bench        cross-validated GAT vs least-squares comparison

Exit codes: 0 the checked property holds, 1 it is violated (or a dataset
failed), 2 usage / input error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .core import DecisionVector, SimplexPoint, get_loss
from .estimators import build_spec
from .optim import OptimConfig, consistency_sweep
from .risk import risk_report
from .surrogates import lad_transform

EXIT_OK, EXIT_VIOLATED, EXIT_USAGE = 0, 1, 2
MAX_GRID_K = 7
# flags whose values may start with "-" (negative numbers in a list)
_VALUE_FLAGS = ("--alpha", "--p", "--beta")


class UsageError(Exception):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x) + 0.0:.9g}"  # no "-0"
    if isinstance(x, (set, frozenset)):
        return "{" + ",".join(str(v) for v in sorted(x)) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return ",".join(fmt(v) for v in np.asarray(x).tolist())
    return str(x)


def emit(key, value, out=None):
    print(f"{key}={fmt(value)}", file=out or sys.stdout)


def parse_vector(text, field) -> np.ndarray:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise UsageError(f"{field}: cannot parse {text!r} as comma-separated numbers") from None
    if not vals:
        raise UsageError(f"{field}: empty vector")
    return np.array(vals)


def _join_negative_values(argv):
    """Rewrite ``--alpha -1,2`` as ``--alpha=-1,2`` so argparse keeps the value."""
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_FLAGS and i + 1 < len(argv):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def _spec_from_args(args, k):
    try:
        return build_spec(args.surrogate, k, args.phi, args.loss, args.link)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------


def cmd_risk(args) -> int:
    try:
        p = SimplexPoint(parse_vector(args.p, "--p"))
    except ValueError as exc:
        raise UsageError(f"--p: {exc}") from None
    k = p.k
    if args.alpha is not None and args.beta is not None:
        raise UsageError("give either --alpha or --beta, not both")
    if args.beta is not None:
        beta = parse_vector(args.beta, "--beta")
        if beta.size != 1:
            raise UsageError("--beta takes a single number")
        alpha_vals = lad_transform(float(beta[0]), k)
    elif args.alpha is not None:
        alpha_vals = parse_vector(args.alpha, "--alpha")
    else:
        raise UsageError("--alpha (or --beta for LAD) is required")
    try:
        alpha = DecisionVector(alpha_vals)
    except ValueError as exc:
        raise UsageError(f"--alpha: {exc}") from None
    if alpha.values.size != k - 1:
        raise UsageError(f"--alpha has {alpha.values.size} components, --p implies k-1={k - 1}")
    try:
        loss = get_loss(args.loss, k)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"--loss: {exc}") from None
    spec = _spec_from_args(args, k) if args.surrogate else None
    rep = risk_report(loss, spec, alpha.values, p.probs)
    fields = [("k", k), ("pred", int(1 + np.sum(alpha.values < 0))), ("loss", loss.kind),
              ("L", rep.L_value), ("L_star", rep.L_star)]
    if spec is not None:
        fields += [("surrogate", spec.describe()), ("A", rep.A_value), ("A_star", rep.A_star)]
    fields += [("excess", rep.excess), ("bayes_labels", rep.bayes_label_set)]
    for key, val in fields:
        emit(key, val)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([k_ for k_, _ in fields])
            w.writerow([fmt(v) for _, v in fields])
    return EXIT_OK


def cmd_consistency(args) -> int:
    k = args.k
    if k < 2:
        raise UsageError("--k must be at least 2")
    if k > MAX_GRID_K:
        raise UsageError(f"--k={k} exceeds the exhaustive-grid limit of {MAX_GRID_K}")
    if not 0 < args.step <= 0.5:
        raise UsageError("--step must lie in (0, 0.5]")
    spec = _spec_from_args(args, k)
    cfg = OptimConfig(grad_tolerance=args.grad_tol)
    res = consistency_sweep(spec, args.step, cfg, keep_rows=bool(args.csv))
    ok = res.max_excess <= args.tol
    emit("surrogate", spec.describe())
    emit("target_loss", spec.target_loss.kind)
    emit("k", k)
    emit("grid_points", res.n_points)
    emit("max_excess", res.max_excess)
    emit("worst_p", res.worst_p)
    emit("worst_alpha", res.worst_alpha)
    emit("consistent", ok)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["p", "alpha_hat", "excess"])
            for p, a, ex in res.rows:
                w.writerow([fmt(p), fmt(a), fmt(ex)])
    return EXIT_OK if ok else EXIT_VIOLATED


def cmd_bench(args) -> int:
    items = []
    if args.synthetic:
        if args.synthetic != "planted":
            raise UsageError(f"unknown synthetic generator {args.synthetic!r}")
        data, _ = bench.planted_dataset(n=args.n, seed=args.seed)
        items.append(data)
    for path in args.datasets:
        items.append(Path(path))
    if not items:
        raise UsageError("no datasets given (pass paths or --synthetic planted)")
    if args.folds < 2:
        raise UsageError("--folds must be at least 2")
    report = bench.run_benchmark(items, folds=args.folds, seed=args.seed, k=args.bins,
                                 phi=args.phi, standardize_features=not args.no_standardize,
                                 repeats=args.repeats, stratify=args.stratify)
    for res in report.results:
        gat, ls = res.scores["gat"], res.scores["ls"]
        p = bench.wilcoxon_signed_rank(gat, ls).pvalue
        winner = "gat" if gat.mean() < ls.mean() else "ls" if ls.mean() < gat.mean() else "tie"
        print(f"dataset={res.dataset} gat_mean={fmt(gat.mean())} ls_mean={fmt(ls.mean())} "
              f"wilcoxon_p={fmt(p)} winner={winner}")
    for name, msg in sorted(report.failures.items()):
        print(f"dataset={name} error={msg}", file=sys.stderr)
    wins = sum(1 for w in report.winners().values() if w == "gat")
    emit("datasets", len(report.results))
    emit("gat_wins", wins)
    emit("failures", len(report.failures))
    if args.out:
        bench.emit_report(report, args.out)
        emit("report", args.out)
    return EXIT_VIOLATED if report.failures else EXIT_OK


# ---------------------------------------------------------------------------


def _add_selectors(sp, surrogate_default):
    sp.add_argument("--surrogate", default=surrogate_default,
                    help="surrogate family: at, it, cl, lad, gat")
    sp.add_argument("--phi", default="logistic",
                    help="base loss: hinge, squared_hinge, logistic, exponential, squared, kinked")
    sp.add_argument("--link", default="logit", help="link for cl: logit or probit")
    sp.add_argument("--loss", default="absolute",
                    help="task loss: absolute, zero_one, squared (also the GAT weights)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ordinal-consistency",
                                     description="Surrogate consistency checks for ordinal regression.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("risk", help="risks at a single decision vector and label distribution")
    _add_selectors(sp, None)
    sp.add_argument("--p", required=True, help="label distribution, e.g. 0.2,0.3,0.5")
    sp.add_argument("--alpha", help="decision vector, e.g. -1,0.5")
    sp.add_argument("--beta", help="scalar regression output (LAD), mapped to alpha")
    sp.add_argument("--csv", help="also write the fields as a one-row CSV")
    sp.set_defaults(func=cmd_risk)

    sp = sub.add_parser("consistency", help="grid sweep of max excess risk")
    _add_selectors(sp, "at")
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--step", type=float, default=0.1, help="grid spacing")
    sp.add_argument("--tol", type=float, default=1e-6, help="excess-risk pass threshold")
    sp.add_argument("--grad-tol", type=float, default=1e-8)
    sp.add_argument("--csv", help="per-point CSV output")
    sp.set_defaults(func=cmd_consistency)

    sp = sub.add_parser("bench", help="cross-validated GAT vs least squares")
    sp.add_argument("datasets", nargs="*", help="delimited numeric files, target in last column")
    sp.add_argument("--synthetic", help="add a generated dataset (planted)")
    sp.add_argument("--n", type=int, default=2000, help="synthetic sample size")
    sp.add_argument("--folds", type=int, default=20)
    sp.add_argument("--repeats", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--bins", type=int, default=5)
    sp.add_argument("--phi", default="logistic")
    sp.add_argument("--stratify", action="store_true")
    sp.add_argument("--no-standardize", action="store_true")
    sp.add_argument("--out", help="report CSV path")
    sp.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_join_negative_values(argv))
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
