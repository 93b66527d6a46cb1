"""Command line interface: ``expweights <subcommand> ...``.

Exit codes: 0 success, 1 numerical failure (failing rows are printed to
stderr), 2 bad configuration or arguments.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .approx import best_poly, p_label, parse_p
from .battery import get_function
from .harness import (EXPERIMENTS, ConfigError, Context, ExperimentConfig, _fmt,
                      run_experiment)
from .mrs import MrsOverflowError, MrsTable, check_condition_14
from .operators import _values, partial_sum, primitive_vp, vallee_poussin
from .orthopoly import OrthonormalityError, stieltjes
from .quadrature import DTYPE
from .weights import parse_weight

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2


def code_version():
    """``git describe`` of the source tree, or the package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10, check=True)
        return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        return __version__


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else _fmt(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _int_list(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _write_csv(header, rows, path=None):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
    return text


def _write_summary(path, payload):
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _out_path(args, name):
    if not args.out:
        return None
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _finish(args, name, header, rows, extra=None):
    path = _out_path(args, f"{name}.csv")
    _write_csv(header, rows, path)
    if args.out:
        summary = {"command": name, "code_version": code_version(), "rows": len(rows),
                   "passed": True}
        summary.update(extra or {})
        _write_summary(_out_path(args, f"{name}.summary.json"), summary)
    return EXIT_OK


# -- subcommands ------------------------------------------------------------

def cmd_mrs(args):
    weight = parse_weight(args.weight)
    table = MrsTable(weight)
    xs = [float(v) for v in args.x.split(",")]
    rows = []
    for x in xs:
        a = table.a(x)
        cond = check_condition_14(table, [x])[0][1] if x >= 1 else float("nan")
        rows.append((x, a, table.T(x), table.delta(x), cond))
    return _finish(args, "mrs", ("x", "a_x", "T_a_x", "delta_x", "growth_condition_ratio"),
                   rows, {"weight": weight.to_dict()})


def cmd_recurrence(args):
    weight = parse_weight(args.weight)
    rec = stieltjes(weight, MrsTable(weight), args.N)
    rows = [(k, rec.b[k]) for k in range(1, rec.N + 1)]
    return _finish(args, "recurrence", ("k", "b_k"), rows,
                   {"weight": weight.to_dict(), "norm0": float(rec.norm0), "N": rec.N})


def cmd_gauss(args):
    weight = parse_weight(args.weight)
    rec = stieltjes(weight, MrsTable(weight), max(args.n - 1, 1))
    g = rec.gauss(args.n)
    rows = [(k + 1, x, lam) for k, (x, lam) in enumerate(zip(g.zeros, g.christoffel))]
    return _finish(args, "gauss", ("k", "x_kn", "lambda_kn"), rows,
                   {"weight": weight.to_dict(), "n": args.n})


def cmd_approx_op(args):
    weight = parse_weight(args.weight)
    table = MrsTable(weight)
    n = args.n
    rec = stieltjes(weight, table, max(2 * n + 1, 2))
    tf = get_function(args.f, rec)
    if args.op == "s":
        P = partial_sum(rec, tf, n)
    elif args.op == "v":
        P = vallee_poussin(rec, tf, n)
    else:
        P = primitive_vp(rec, table, tf.derivative(0), tf.derivative(1), n, args.p,
                         return_basis=True)
    R = rec.rule.radius
    x = np.linspace(-R, R, args.points, dtype=DTYPE)
    fx, px = _values(tf, x), P(x)
    w = np.exp(-weight.Q(x))
    rows = list(zip(x, fx, px, w, np.abs(fx - px) * w))
    return _finish(args, "approx-op", ("x", "f", f"{args.op}_n_f", "w", "weighted_error"), rows,
                   {"weight": weight.to_dict(), "f": args.f, "n": n, "op": args.op})


def cmd_best(args):
    weight = parse_weight(args.weight)
    ctx = Context()
    rec, table = ctx.rec(weight), ctx.table(weight)
    rows = []
    for fname in args.f.split(","):
        tf = get_function(fname, rec)
        for p in [parse_p(v) for v in args.p.split(",")]:
            for n in _int_list(args.n):
                res = best_poly(rec, tf, p, n, ctx.grid(weight, n), table)
                rows.append((fname, n, p_label(p), res.E))
    return _finish(args, "best", ("f", "n", "p", "E"), rows, {"weight": weight.to_dict()})


def _config_from_args(args):
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if args.weight:
        data["weights"] = [parse_weight(w).to_dict() for w in args.weight.split(";")]
    if args.p:
        data["p_list"] = args.p.split(",")
    if args.nmax is not None or args.nmin is not None:
        lo = args.nmin if args.nmin is not None else 4
        hi = args.nmax if args.nmax is not None else 16
        data["n_list"] = list(range(lo, hi + 1))
    if args.functions:
        data["functions"] = args.functions.split(",")
    if args.out:
        data["out_dir"] = args.out
    return ExperimentConfig.from_dict(data)


def cmd_verify(args):
    cfg = _config_from_args(args)
    rep = run_experiment(args.theorem, cfg, Context(cfg.N))
    out = args.out or cfg.out_dir or "."
    os.makedirs(out, exist_ok=True)
    stem = os.path.join(out, rep.experiment)
    with open(f"{stem}.csv", "w", newline="") as fh:
        rep.to_csv(fh)
    # the output location is not part of the experiment, so runs into different
    # directories stay byte-identical
    config = {k: v for k, v in cfg.to_dict().items() if k != "out_dir"}
    summary = rep.summary(config=config, code_version=code_version())
    _write_summary(f"{stem}.summary.json", summary)
    for key, pts in sorted(rep.series().items()):
        safe = "".join(c if c.isalnum() or c in "-_.=" else "_" for c in key)
        with open(f"{stem}.{safe}.dat", "w") as fh:
            fh.write("# n ratio\n")
            for n, r in pts:
                fh.write(f"{_fmt(n)} {_fmt(r)}\n")
    counts = rep.counts()
    print(f"{rep.experiment}: {counts['row_pass']}/{counts['asserted_rows']} rows, "
          f"{counts['check_pass']}/{counts['check_pass'] + counts['check_fail']} checks, "
          f"{'PASS' if rep.passed else 'FAIL'}")
    if not rep.passed:
        for row in rep.failing_rows():
            print("failing row: " + ", ".join(f"{k}={_fmt(v)}" for k, v in row.items()
                                              if v != ""), file=sys.stderr)
        for c in rep.checks:
            if not c["passed"]:
                print(f"failing check: {c['name']} [{c['group']}] value={c['value']:.6g} "
                      f"limit={c['limit']:.6g}", file=sys.stderr)
        if not rep.consistency_ok():
            print(f"report inconsistent: residual {rep.consistency_residual():.3e}",
                  file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="expweights", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, weight_default="erdos"):
        p.add_argument("--weight", default=weight_default,
                       help="freud:ALPHA, erdos, erdos:U,ALPHA,L or a JSON object")
        p.add_argument("--out", default=None, help="output directory (default: CSV to stdout)")

    p = sub.add_parser("mrs", help="MRS numbers a_x with T, delta and the growth ratio")
    common(p)
    p.add_argument("--x", required=True, help="comma separated x values")
    p.set_defaults(func=cmd_mrs)

    p = sub.add_parser("recurrence", help="recurrence coefficients b_k")
    common(p)
    p.add_argument("--N", type=int, default=40)
    p.set_defaults(func=cmd_recurrence)

    p = sub.add_parser("gauss", help="Gauss nodes and Christoffel numbers")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_gauss)

    p = sub.add_parser("approx-op", help="evaluate s_n, v_n or V_n of a test function")
    common(p)
    p.add_argument("--f", default="sin")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--op", choices=("s", "v", "V"), default="v")
    p.add_argument("--p", default="2")
    p.add_argument("--points", type=int, default=101)
    p.set_defaults(func=cmd_approx_op)

    p = sub.add_parser("best", help="degrees of best approximation E_{p,n}")
    common(p)
    p.add_argument("--f", default="sin", help="comma separated battery names")
    p.add_argument("--p", default="2", help="comma separated from 1,2,inf")
    p.add_argument("--n", default="4..16", help="list such as 4,6,8 or a range 4..16")
    p.set_defaults(func=cmd_best)

    p = sub.add_parser("verify", help="run a verification experiment")
    p.add_argument("--theorem", required=True, choices=sorted(EXPERIMENTS))
    p.add_argument("--config", default=None, help="JSON experiment config")
    p.add_argument("--weight", default=None, help="weight(s), ';' separated")
    p.add_argument("--p", default=None)
    p.add_argument("--nmin", type=int, default=None)
    p.add_argument("--nmax", type=int, default=None)
    p.add_argument("--functions", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if getattr(args, "p", None) and args.command not in ("verify",):
        try:
            [parse_p(v) for v in str(args.p).split(",")]
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OrthonormalityError, MrsOverflowError, ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
