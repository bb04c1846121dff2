"""Command-line surface: simulate, analyze, check.

``simulate`` runs the replication study on the synthetic design and
writes a CSV report (optionally mirrored as JSON).  ``analyze`` runs
the instrumented estimator on a user-supplied CSV, with an optional
row filter for subgroup analyses.  ``check`` runs the Monte Carlo
orthogonality suite against a closed-form truth.

Exit codes are a stable contract: 0 success, 1 statistical-quality
failure (estimation failed, too many replicate failures, or a
derivative check out of band), 2 usage or data error.

Numbers are written with full round-trip precision in machine outputs
(CSV/JSON) and 6 significant digits in console tables.  All output
files end with a trailing newline.  The environment variable
ORTHOSCORE_SEED supplies the default seed when --seed is not given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .core import Dataset
from .diagnostics import TARGETS, run_check
from .late import LateConfig, late_crossfit
from .sim import DgpConfig, run_replications

__all__ = ["main", "METHOD_LABELS"]

METHOD_LABELS = {
    "r-np": "robust_np",
    "r-lr": "robust_lr",
    "m": "moment",
    "reg-np": "reg_np",
    "reg-lr": "reg_lr",
}
_LABEL_OF = {v: k for k, v in METHOD_LABELS.items()}

_FILTER_OPS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def _err(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def _full(v) -> str:
    """Shortest round-trip decimal representation."""
    return repr(float(v))


def _resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("ORTHOSCORE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ValueError(f"ORTHOSCORE_SEED is not an integer: {env!r}")


def _write_text(path: str, content: str) -> None:
    if not content.endswith("\n"):
        content += "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(content)


# ------------------------------------------------------------- simulate

def _simulate_csv(report, labels) -> str:
    lines = ["method,scenario,n,p,reps,bias,smse,coverage,failures"]
    for label in labels:
        s = report.by_method(METHOD_LABELS[label])
        lines.append(",".join([
            label, report.scenario, str(report.n), str(report.p),
            str(report.reps), _full(s.bias), _full(s.smse),
            _full(s.coverage), str(s.failures),
        ]))
    return "\n".join(lines) + "\n"


def _simulate_json(report, labels) -> str:
    payload = {
        "scenario": report.scenario,
        "n": report.n,
        "p": report.p,
        "reps": report.reps,
        "seed": report.master_seed,
        "methods": [
            {
                "method": label,
                "bias": s.bias,
                "smse": s.smse,
                "coverage": s.coverage,
                "reps_done": s.reps_done,
                "failures": s.failures,
            }
            for label in labels
            for s in [report.by_method(METHOD_LABELS[label])]
        ],
    }
    return json.dumps(payload, indent=2) + "\n"


def cmd_simulate(args) -> int:
    try:
        seed = _resolve_seed(args.seed)
        labels = [m.strip() for m in args.methods.split(",") if m.strip()]
        if not labels:
            raise ValueError("no methods given")
        for label in labels:
            if label not in METHOD_LABELS:
                raise ValueError(f"unknown method label: {label!r}")
        if args.reps < 1:
            raise ValueError("reps must be at least 1")
        if args.jobs < 1:
            raise ValueError("jobs must be at least 1")
        dgp = DgpConfig(scenario=args.scenario, n=args.n, p=args.p, seed=0)
    except ValueError as exc:
        _err(str(exc))
        return 2

    report = run_replications(dgp, [METHOD_LABELS[m] for m in labels],
                              reps=args.reps, master_seed=seed, jobs=args.jobs)

    print(f"scenario={report.scenario} n={report.n} p={report.p} "
          f"reps={report.reps} seed={seed}")
    print(f"{'method':>8} {'bias':>12} {'smse':>12} {'coverage':>10} {'failures':>9}")
    for label in labels:
        s = report.by_method(METHOD_LABELS[label])
        print(f"{label:>8} {s.bias:>12.6g} {s.smse:>12.6g} "
              f"{s.coverage:>10.6g} {s.failures:>9d}")

    if args.out:
        _write_text(args.out, _simulate_csv(report, labels))
    if args.json:
        _write_text(args.json, _simulate_json(report, labels))

    worst = max(s.failures for s in report.methods)
    if worst > 0.2 * report.reps:
        _err(f"replicate failure rate above 20% ({worst}/{report.reps})")
        return 1
    return 0


# -------------------------------------------------------------- analyze

def _read_strict_csv(path: str):
    """Comma-separated, header row, no quoting.  Returns (header, rows).

    Quoted fields are rejected outright rather than being guessed at.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise ValueError("input file is empty")
    if any('"' in line for line in lines):
        raise ValueError("quoted fields are not supported")
    header = [c.strip() for c in lines[0].split(",")]
    rows = []
    for i, line in enumerate(lines[1:], start=1):
        if line == "":
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(header):
            raise ValueError(f"row {i} has {len(cells)} fields, expected {len(header)}")
        rows.append(cells)
    return header, rows


def _extract_column(header, rows, name):
    """Numeric column by name; returns (values, bad_row_numbers)."""
    col = header.index(name)
    values = np.empty(len(rows))
    bad = []
    for i, row in enumerate(rows):
        cell = row[col]
        if cell == "":
            bad.append(i + 1)
            continue
        try:
            values[i] = float(cell)
        except ValueError:
            bad.append(i + 1)
    return values, bad


def cmd_analyze(args) -> int:
    try:
        seed = _resolve_seed(args.seed)
    except ValueError as exc:
        _err(str(exc))
        return 2
    if args.method not in METHOD_LABELS:
        _err(f"unknown method label: {args.method!r}")
        return 2
    filter_flags = (args.filter_col, args.filter_op, args.filter_value)
    has_filter = any(f is not None for f in filter_flags)
    if has_filter and None in filter_flags:
        _err("--filter-col, --filter-op and --filter-value must be given together")
        return 2
    if has_filter and args.filter_op not in _FILTER_OPS:
        _err(f"unknown filter comparator: {args.filter_op!r}")
        return 2

    try:
        header, rows = _read_strict_csv(args.input)
    except OSError as exc:
        _err(str(exc))
        return 2
    except ValueError as exc:
        _err(str(exc))
        return 2

    covariates = [c.strip() for c in args.covariates.split(",") if c.strip()]
    if not covariates:
        _err("no covariate columns given")
        return 2
    used = covariates + [args.outcome, args.treatment, args.instrument]
    if has_filter:
        used.append(args.filter_col)
    for name in used:
        if name not in header:
            _err(f"column not found: {name!r}")
            return 2

    columns, bad_rows = {}, set()
    for name in dict.fromkeys(used):
        values, bad = _extract_column(header, rows, name)
        columns[name] = values
        bad_rows.update(bad)
    if bad_rows:
        shown = sorted(bad_rows)[:10]
        _err("missing or non-numeric values in rows: "
             + ", ".join(str(r) for r in shown))
        return 2

    if has_filter:
        try:
            cutoff = float(args.filter_value)
        except ValueError:
            _err(f"filter value is not numeric: {args.filter_value!r}")
            return 2
        keep = _FILTER_OPS[args.filter_op](columns[args.filter_col], cutoff)
    else:
        keep = np.ones(len(rows), dtype=bool)

    n_kept = int(np.count_nonzero(keep))
    if n_kept == 0:
        _err("filter selected no rows")
        return 2
    if n_kept < 20:
        _err(f"fewer than 20 rows after filtering ({n_kept})")
        return 2

    x = np.column_stack([columns[c][keep] for c in covariates])
    y = columns[args.outcome][keep]
    d = columns[args.treatment][keep]
    z = columns[args.instrument][keep]
    for name, col in ((args.treatment, d), (args.instrument, z)):
        if not np.all((col == 0.0) | (col == 1.0)):
            _err(f"column {name!r} must be binary 0/1")
            return 2

    try:
        data = Dataset(x, y, d, z)
    except ValueError as exc:
        _err(str(exc))
        return 2
    config = LateConfig(method=METHOD_LABELS[args.method], seed=seed)
    try:
        result = late_crossfit(data, config)
    except (ValueError, RuntimeError) as exc:
        _err(f"estimation failed: {exc}")
        return 1

    payload = {
        "method": args.method,
        "n": result.n,
        "beta_hat": result.beta_hat,
        "std_err": result.std_err,
        "ci_low": result.ci_low,
        "ci_high": result.ci_high,
        "seed": seed,
    }
    if args.format == "json":
        content = json.dumps(payload, indent=2) + "\n"
    else:
        keys = list(payload)
        content = (",".join(keys) + "\n"
                   + ",".join(_full(payload[k]) if isinstance(payload[k], float)
                              else str(payload[k]) for k in keys) + "\n")
    if args.out:
        _write_text(args.out, content)
        print(f"{args.method}: beta_hat={result.beta_hat:.6g} "
              f"ci=({result.ci_low:.6g}, {result.ci_high:.6g}) n={result.n}")
    else:
        sys.stdout.write(content)
    return 0


# ---------------------------------------------------------------- check

def cmd_check(args) -> int:
    try:
        seed = _resolve_seed(args.seed)
    except ValueError as exc:
        _err(str(exc))
        return 2
    if args.n_mc <= 0:
        _err("n-mc must be positive")
        return 2

    report = run_check(args.target, n_mc=args.n_mc, seed=seed)
    print(f"target={report.target} beta0={report.beta0:.6g} "
          f"n_mc={report.n_mc} seed={report.seed}")
    for case in report.cases:
        band = "> 5*SE required" if case.score == "control" else "<= 3*SE required"
        status = "ok" if case.passed else "FAIL"
        print(f"  {case.score:>10}  {case.nuisance:>2} / {case.direction:<16} "
              f"derivative {case.derivative:>13.6g} +- {case.std_error:.6g}  "
              f"[{band}] {status}")
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


# ----------------------------------------------------------------- main

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orthoscore",
        description="Cross-fitted orthogonal-score estimation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the synthetic replication study")
    sim.add_argument("--scenario", default="s1", choices=["s1", "s2"])
    sim.add_argument("--n", type=int, default=2000)
    sim.add_argument("--p", type=int, default=4)
    sim.add_argument("--reps", type=int, default=200)
    sim.add_argument("--methods", default="r-lr,m",
                     help="comma-separated labels: r-np,r-lr,m,reg-np,reg-lr")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", default=None, help="CSV report path")
    sim.add_argument("--json", default=None, help="JSON report path")
    sim.add_argument("--jobs", type=int, default=1)
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="estimate from a CSV dataset")
    ana.add_argument("--input", required=True)
    ana.add_argument("--outcome", required=True)
    ana.add_argument("--treatment", required=True)
    ana.add_argument("--instrument", required=True)
    ana.add_argument("--covariates", required=True,
                     help="comma-separated covariate column names")
    ana.add_argument("--method", default="r-lr")
    ana.add_argument("--filter-col", default=None)
    ana.add_argument("--filter-op", default=None,
                     help="one of == != < <= > >=")
    ana.add_argument("--filter-value", default=None)
    ana.add_argument("--seed", type=int, default=None)
    ana.add_argument("--out", default=None)
    ana.add_argument("--format", default="json", choices=["json", "csv"])
    ana.set_defaults(func=cmd_analyze)

    chk = sub.add_parser("check", help="Monte Carlo orthogonality suite")
    chk.add_argument("--target", required=True, choices=list(TARGETS))
    chk.add_argument("--n-mc", type=int, default=1_000_000)
    chk.add_argument("--seed", type=int, default=None)
    chk.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return 0
        return code if isinstance(code, int) else 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
