"""Command-line interface.

Subcommands: analyze, tune, simulate, mc, power, bias-demo, evalue. Every
run resolves its configuration into a manifest, writes manifest.json into
--out, and stamps the manifest's sha256 into every report file, so a rerun
with the same manifest reproduces the reports byte for byte regardless of
--workers. Exit codes: 0 success, 1 usage, 2 bad data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from . import __version__
from .data_io import load_design, write_encoded_csv
from .errors import DataError, NumericalError, UsageError
from .evalue import evalue_report
from .pipeline import AnalysisConfig, analyze
from .report import manifest_digest, write_csv, write_json, write_timing
from .simulate import (
    six_subgroup_design,
    run_bias_demo,
    run_monte_carlo,
    run_power_curve,
    gaussian_design,
)
from .tuning import default_candidates, select_r

ENV_SEED = "SUBGROUP_DEBIAS_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(sp):
    sp.add_argument("--seed", type=int, default=None,
                    help=f"master seed (default: ${ENV_SEED} or 0)")
    sp.add_argument("--workers", type=int, default=1,
                    help="parallel worker processes (results do not depend on this)")
    sp.add_argument("--out", default=".", help="output directory")


def _add_inference(sp):
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--r", default=None,
                    help="calibration rate in (0, 0.5), or 'auto' to tune")
    sp.add_argument("--b1", type=int, default=None, help="number of sample splits")
    sp.add_argument("--b2", type=int, default=None, help="number of bootstrap draws")
    sp.add_argument("--full-budget", action="store_true",
                    help="default budgets B1=500, B2=1000 instead of 100/500")
    sp.add_argument("--split-ratio", type=float, default=0.6)
    sp.add_argument("--min-size", type=int, default=3)
    sp.add_argument("--max-size", type=int, default=10)
    sp.add_argument("--cv-folds", type=int, default=3)
    sp.add_argument("--n-lambdas", type=int, default=100)
    sp.add_argument("--multiplier", choices=("normal", "rademacher"), default="normal")
    sp.add_argument("--ci", choices=("basic", "symmetric"), default="basic")
    sp.add_argument("--hessian-normalizer", choices=("n2", "n1"), default="n2")


def build_parser():
    p = _Parser(prog="subgroup-debias",
                description="Debiased bootstrap inference for the largest subgroup "
                            "treatment effect in sparse logistic regression")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sp = sub.add_parser("analyze", help="analyze a dataset")
    sp.add_argument("--data", required=True, help="CSV file (y,t,s,w1..wk)")
    sp.add_argument("--sidecar", default=None,
                    help="JSON role sidecar for the wide encoded format")
    _add_common(sp)
    _add_inference(sp)

    sp = sub.add_parser("tune", help="cross-validate the calibration rate r")
    sp.add_argument("--data", required=True)
    sp.add_argument("--sidecar", default=None)
    sp.add_argument("--tune-v", type=int, default=3)
    sp.add_argument("--tune-b1", type=int, default=100)
    sp.add_argument("--tune-b2", type=int, default=300)
    _add_common(sp)
    _add_inference(sp)

    sp = sub.add_parser("simulate", help="generate a synthetic dataset")
    sp.add_argument("--design", choices=("six-subgroup", "gaussian"), default="gaussian")
    sp.add_argument("--case", choices=("heterogeneous", "spurious"), default="heterogeneous")
    sp.add_argument("--n", type=int, default=2000)
    sp.add_argument("--p1", type=int, default=4)
    sp.add_argument("--p2", type=int, default=150)
    sp.add_argument("--p", type=int, default=200, help="six-subgroup design total covariate count")
    _add_common(sp)

    sp = sub.add_parser("mc", help="coverage/length/bias Monte Carlo study")
    sp.add_argument("--case", choices=("heterogeneous", "spurious"), default="heterogeneous")
    sp.add_argument("--n", type=int, default=2000)
    sp.add_argument("--p1", type=int, default=4)
    sp.add_argument("--p2", type=int, default=150)
    sp.add_argument("--replicates", "--reps", type=int, default=300)
    _add_common(sp)
    _add_inference(sp)

    sp = sub.add_parser("power", help="power curve for H0: beta_max <= 0")
    sp.add_argument("--grid", default="0,0.25,0.5,0.75,1.0",
                    help="comma-separated true beta_max values; must include 0")
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--p", type=int, default=200)
    sp.add_argument("--replicates", "--reps", type=int, default=300)
    _add_common(sp)
    _add_inference(sp)

    sp = sub.add_parser("bias-demo", help="selection bias of max-coefficient estimators")
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--p", type=int, default=200)
    sp.add_argument("--replicates", "--reps", type=int, default=200)
    sp.add_argument("--cv-folds", type=int, default=3)
    sp.add_argument("--n-lambdas", type=int, default=100)
    _add_common(sp)

    sp = sub.add_parser("evalue", help="E-value for a log odds ratio and its interval")
    sp.add_argument("--log-or", type=float, required=True)
    sp.add_argument("--lower", type=float, default=-math.inf)
    sp.add_argument("--upper", type=float, default=math.inf)
    _add_common(sp)

    return p


def _seed(args):
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get(ENV_SEED)
    return int(env) if env else 0


def _budgets(args):
    b1 = args.b1 if args.b1 is not None else (500 if args.full_budget else 100)
    b2 = args.b2 if args.b2 is not None else (1000 if args.full_budget else 500)
    return b1, b2


def _r_value(args, default="auto"):
    raw = args.r if args.r is not None else default
    if raw == "auto":
        return "auto"
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise UsageError(f"--r must be a number or 'auto', got {raw!r}") from None


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _inference_manifest(args, seed, b1, b2, r):
    return {
        "seed": seed, "b1": b1, "b2": b2, "r": r, "alpha": args.alpha,
        "split_ratio": args.split_ratio, "min_size": args.min_size,
        "max_size": args.max_size, "cv_folds": args.cv_folds,
        "n_lambdas": args.n_lambdas, "multiplier": args.multiplier,
        "ci": args.ci, "hessian_normalizer": args.hessian_normalizer,
        "version": __version__,
    }


def _emit(out, name, payload, csv_fields, csv_rows, manifest, runtime=None):
    digest = manifest_digest(manifest)
    payload = dict(payload)
    payload["manifest_hash"] = digest
    write_json(out / "manifest.json", manifest)
    write_json(out / f"{name}.json", payload)
    write_csv(out / f"{name}.csv", csv_fields, csv_rows, manifest_hash=digest)
    if runtime is not None:
        write_timing(out / "timing.json", runtime)
    return digest


def cmd_analyze(args):
    seed = _seed(args)
    b1, b2 = _budgets(args)
    r = _r_value(args)
    design = load_design(args.data, args.sidecar)
    config = AnalysisConfig(
        b1=b1, b2=b2, split_ratio=args.split_ratio, min_size=args.min_size,
        max_size=args.max_size, cv_folds=args.cv_folds,
        n_lambdas=args.n_lambdas, r=r, alpha=args.alpha,
        multiplier=args.multiplier, ci=args.ci,
        hessian_normalizer=args.hessian_normalizer, seed=seed,
        n_jobs=args.workers,
    )
    import time
    t0 = time.perf_counter()
    report = analyze(design, config)
    runtime = time.perf_counter() - t0

    manifest = {"command": "analyze", "data": Path(args.data).name,
                **_inference_manifest(args, seed, b1, b2, r)}
    out = _outdir(args)
    digest = _emit(out, "analysis", report.to_payload(), report.csv_fields,
                   report.to_csv_rows(), manifest, runtime)

    cal = report.calibrated
    print(f"selected subgroup: {report.s_hat} ({report.s_hat_label})")
    print(f"beta_max estimate {cal.estimate:+.4f}  bias-reduced {cal.bias_reduced:+.4f}  "
          f"(r = {report.r:.4g}{', tuned' if report.r_tuned else ''})")
    print(f"{int((1 - cal.alpha) * 100)}% CI [{cal.lower:+.4f}, {cal.upper:+.4f}]  "
          f"p = {cal.p_value:.4f} (one-sided {cal.p_value_one_sided:.4f})")
    print(f"E-value {report.e_value:.2f} (bound {report.e_value_bound:.2f})")
    print(f"wrote {out / 'analysis.json'} [manifest {digest[:12]}]")
    return 0


def cmd_tune(args):
    seed = _seed(args)
    design = load_design(args.data, args.sidecar)
    import time
    t0 = time.perf_counter()
    result = select_r(design, candidates=default_candidates(), v=args.tune_v,
                      b1=args.tune_b1, b2=args.tune_b2,
                      split_ratio=args.split_ratio, min_size=args.min_size,
                      max_size=args.max_size, cv_folds=args.cv_folds,
                      n_lambdas=args.n_lambdas,
                      hessian_normalizer=args.hessian_normalizer,
                      multiplier=args.multiplier, seed=seed, n_jobs=args.workers)
    runtime = time.perf_counter() - t0

    manifest = {"command": "tune", "data": Path(args.data).name,
                "tune_v": args.tune_v, "tune_b1": args.tune_b1,
                "tune_b2": args.tune_b2,
                **_inference_manifest(args, seed, args.tune_b1, args.tune_b2, "grid")}
    payload = {
        "r": result.r,
        "candidates": [float(c) for c in result.candidates],
        "criterion": [float(c) for c in result.criterion],
        "top_coordinates": [int(i) + 1 for i in result.top_coordinates],
    }
    rows = [{"r": float(c), "criterion": float(v)}
            for c, v in zip(result.candidates, result.criterion)]
    out = _outdir(args)
    digest = _emit(out, "tuning", payload, ("r", "criterion"), rows, manifest, runtime)
    print(f"selected r = {result.r:.6g}")
    print(f"wrote {out / 'tuning.json'} [manifest {digest[:12]}]")
    return 0


def cmd_simulate(args):
    seed = _seed(args)
    if args.design == "six-subgroup":
        design, truth = six_subgroup_design(n=args.n, p=args.p, seed=seed)
        meta = {"design": "six-subgroup", "n": args.n, "p": args.p}
    else:
        design, truth = gaussian_design(n=args.n, p1=args.p1, p2=args.p2,
                                         case=args.case, seed=seed)
        meta = {"design": "gaussian", "case": args.case, "n": args.n,
                "p1": args.p1, "p2": args.p2}
    manifest = {"command": "simulate", "seed": seed, "version": __version__, **meta}
    out = _outdir(args)
    digest = manifest_digest(manifest)
    write_json(out / "manifest.json", manifest)
    write_encoded_csv(design, out / "data.csv", out / "roles.json")
    write_json(out / "truth.json", {
        "beta": [float(b) for b in truth.beta],
        "beta_max": truth.beta_max,
        "support_x_columns": list(truth.support),
        "manifest_hash": digest,
    })
    print(f"wrote {out / 'data.csv'} ({design.n} rows) [manifest {digest[:12]}]")
    return 0


def cmd_mc(args):
    seed = _seed(args)
    b1, b2 = _budgets(args)
    r = _r_value(args, default=0.15)
    if r == "auto":
        raise UsageError("mc requires a fixed --r (tuning inside MC is not supported)")
    report = run_monte_carlo(
        case=args.case, n=args.n, p1=args.p1, p2=args.p2,
        replicates=args.replicates, b1=b1, b2=b2, r=r, alpha=args.alpha,
        multiplier=args.multiplier, ci=args.ci,
        hessian_normalizer=args.hessian_normalizer,
        split_ratio=args.split_ratio, min_size=args.min_size,
        max_size=args.max_size, cv_folds=args.cv_folds,
        n_lambdas=args.n_lambdas, seed=seed, n_jobs=args.workers)
    manifest = {"command": "mc", "case": args.case, "n": args.n,
                "p1": args.p1, "p2": args.p2, "replicates": args.replicates,
                **_inference_manifest(args, seed, b1, b2, r)}
    out = _outdir(args)
    digest = _emit(out, "mc", report.to_payload(), report.csv_fields,
                   report.to_csv_rows(), manifest, report.runtime_seconds)
    for name, s in report.methods.items():
        print(f"{name:>16}: cover {s.coverage:.3f} (se {s.coverage_se:.3f})  "
              f"len {s.mean_root_n_length:.2f}  bias {s.root_n_bias:+.2f}")
    print(f"wrote {out / 'mc.json'} [manifest {digest[:12]}] "
          f"in {report.runtime_seconds:.1f}s")
    return 0


def cmd_power(args):
    seed = _seed(args)
    b1, b2 = _budgets(args)
    r = _r_value(args, default=0.15)
    if r == "auto":
        raise UsageError("power requires a fixed --r")
    try:
        grid = tuple(float(g) for g in args.grid.split(","))
    except ValueError:
        raise UsageError(f"bad --grid {args.grid!r}") from None
    report = run_power_curve(
        grid=grid, replicates=args.replicates, n=args.n, p=args.p, b1=b1,
        b2=b2, r=r, alpha=args.alpha, multiplier=args.multiplier, ci=args.ci,
        hessian_normalizer=args.hessian_normalizer,
        split_ratio=args.split_ratio, min_size=args.min_size,
        max_size=args.max_size, cv_folds=args.cv_folds,
        n_lambdas=args.n_lambdas, seed=seed, n_jobs=args.workers)
    manifest = {"command": "power", "grid": list(grid), "n": args.n,
                "p": args.p, "replicates": args.replicates,
                **_inference_manifest(args, seed, b1, b2, r)}
    out = _outdir(args)
    digest = _emit(out, "power", report.to_payload(), report.csv_fields,
                   report.to_csv_rows(), manifest, report.runtime_seconds)
    for i, g in enumerate(grid):
        print(f"beta_max={g:4.2f}: calibrated {report.rates['boot-calibrated'][i]:.3f}  "
              f"simultaneous {report.rates['simultaneous'][i]:.3f}")
    print(f"wrote {out / 'power.json'} [manifest {digest[:12]}] "
          f"in {report.runtime_seconds:.1f}s")
    return 0


def cmd_bias_demo(args):
    seed = _seed(args)
    report = run_bias_demo(replicates=args.replicates, n=args.n, p=args.p,
                           cv_folds=args.cv_folds, n_lambdas=args.n_lambdas,
                           seed=seed, n_jobs=args.workers)
    manifest = {"command": "bias-demo", "n": args.n, "p": args.p,
                "replicates": args.replicates, "cv_folds": args.cv_folds,
                "n_lambdas": args.n_lambdas, "seed": seed,
                "version": __version__}
    out = _outdir(args)
    digest = _emit(out, "bias_demo", report.to_payload(), report.csv_fields,
                   report.to_csv_rows(), manifest, report.runtime_seconds)
    for k, (m, se) in report.rows.items():
        print(f"{k:>24}: sqrt(n) bias {m:+.3f} (se {se:.3f})")
    print(f"wrote {out / 'bias_demo.json'} [manifest {digest[:12]}]")
    return 0


def cmd_evalue(args):
    seed = _seed(args)
    if args.lower > args.upper:
        raise UsageError(f"--lower {args.lower} exceeds --upper {args.upper}")
    rep = evalue_report(args.log_or, args.lower, args.upper)
    manifest = {"command": "evalue", "log_or": args.log_or,
                "lower": args.lower, "upper": args.upper, "seed": seed,
                "version": __version__}
    out = _outdir(args)
    digest = manifest_digest(manifest)
    write_json(out / "manifest.json", manifest)
    write_json(out / "evalue.json", {
        "log_or": rep.log_or,
        "lower": None if math.isinf(rep.lower) else rep.lower,
        "upper": None if math.isinf(rep.upper) else rep.upper,
        "e_value": rep.e_estimate,
        "e_value_bound": rep.e_bound,
        "manifest_hash": digest,
    })
    print(f"E-value {rep.e_estimate:.2f} (bound {rep.e_bound:.2f})")
    return 0


_DISPATCH = {
    "analyze": cmd_analyze,
    "tune": cmd_tune,
    "simulate": cmd_simulate,
    "mc": cmd_mc,
    "power": cmd_power,
    "bias-demo": cmd_bias_demo,
    "evalue": cmd_evalue,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _DISPATCH[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
