"""Command-line entry point: ``hcmc <subcommand> [flags]``.

Every output embeds the package version, the numerical configuration and the
master seed, either as a leading ``#`` comment line (CSV) or as a ``"meta"``
object (JSON).  Paths and ``--threads`` are not part of the recorded
configuration: they never influence the numbers, and leaving them out keeps
outputs byte-identical across thread counts and output locations.

Exit codes: 0 on success, 2 on usage errors, 1 on runtime errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from hcmc import __version__
from hcmc.approx import (
    approximate,
    approximate_real,
    make_plan,
    plan_from_budget,
    two_stage_approximate,
    two_stage_params,
)
from hcmc.hypercross import cross_size, degree, layer, layer_stats
from hcmc.io import atomic_write, dumps_coeffs, dumps_csv, loads_csv, read_coeffs
from hcmc.lab import (
    FAMILIES,
    error_sweep,
    expected_sup_norm,
    fit_rate,
    lemma_bound,
)
from hcmc.seeding import MASK64, derive_seed
from hcmc.trigpoly import SmoothnessParams

BENCH_COLUMNS = ["n", "J", "L", "family", "reps", "mean_err", "stderr", "seed"]
LEMMA_COLUMNS = ["j", "set_size", "deg", "q", "mean_norm", "stderr", "ratio_to_bound"]
INDEX_COLUMNS = ["d", "j", "compositions", "layer_size", "cumulative_size"]

# flags that never affect results and are kept out of the embedded metadata
_UNRECORDED = {"threads", "out", "input", "in_path", "command", "handler"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= MASK64:
        raise argparse.ArgumentTypeError(f"seed {text} is not an unsigned 64-bit integer")
    return value


def _q_value(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    q = float(text)
    if not 1 <= q < math.inf:
        raise argparse.ArgumentTypeError(f"q must be >= 1 or inf, got {text}")
    return q


def _pow2(text: str) -> int:
    n = int(text)
    if n < 2 or n & (n - 1):
        raise argparse.ArgumentTypeError(f"{text} is not a power of two >= 2")
    return n


def _threads(value: int) -> int:
    if value == 0:
        return os.cpu_count() or 1
    return value


def _meta(args) -> dict:
    config = {k: (str(v) if isinstance(v, float) and math.isinf(v) else v)
              for k, v in sorted(vars(args).items()) if k not in _UNRECORDED}
    return {"version": __version__, "command": args.command, "config": config,
            "master_seed": getattr(args, "seed", None)}


def _emit(args, text: str) -> None:
    out = getattr(args, "out", None)
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _table(args, columns, rows, meta: dict | None = None) -> str:
    meta = _meta(args) if meta is None else meta
    if getattr(args, "format", "csv") == "json":
        records = [dict(zip(columns, row)) for row in rows]
        return json.dumps({"meta": meta, "rows": records}, sort_keys=True, indent=1) + "\n"
    return dumps_csv(columns, rows, meta)


# -- subcommands ---------------------------------------------------------------------


def cmd_index(args) -> None:
    rows = []
    for j in range(args.max_layer + 1):
        st = layer_stats(args.d, j)
        rows.append((args.d, j, st.compositions, st.layer_size, st.cumulative_size))
    _emit(args, _table(args, INDEX_COLUMNS, rows))


def _plan(args):
    params = SmoothnessParams(args.d, args.r)
    if args.J is not None:
        if cross_budget(args.d, args.J) > args.budget:
            raise ValueError(f"--J {args.J} needs a budget of {cross_budget(args.d, args.J)} > {args.budget}")
        return make_plan(params, args.J, args.L, seed=args.seed, variant=args.variant)
    return plan_from_budget(params, args.budget, args.L, seed=args.seed, variant=args.variant)


def cross_budget(d: int, J: int) -> int:
    return 2 * cross_size(d, J)


def _load(args):
    f = read_coeffs(args.input)
    if f.d != args.d:
        raise ValueError(f"input has dimension {f.d}, --d is {args.d}")
    return f


def cmd_approx(args) -> None:
    f = _load(args)
    plan = _plan(args)
    run = approximate_real if args.variant == "real" else approximate
    g = run(f, plan, sketch=args.sketch, threads=_threads(args.threads))
    meta = _meta(args)
    meta["plan"] = {"J": plan.J, "L": plan.L, "n0": plan.n0, "budget": plan.budget}
    _emit(args, dumps_coeffs(g, meta))


def cmd_twostage(args) -> None:
    f = _load(args)
    params = SmoothnessParams(args.d, args.r)
    ts = two_stage_params(params, args.budget, args.m, args.s_aux, args.L, seed=args.seed)
    g = two_stage_approximate(f, ts, sketch=args.sketch, threads=_threads(args.threads))
    meta = _meta(args)
    plan = ts.stage_plan
    meta["plan"] = {"J": plan.J, "L": plan.L, "n0": plan.n0, "budget": plan.budget, "s_aux": ts.s_aux}
    _emit(args, dumps_coeffs(g, meta))


def cmd_bench(args) -> None:
    if args.n_max < args.n_min:
        raise ValueError("--n-max must be at least --n-min")
    budgets = []
    n = args.n_min
    while n <= args.n_max:
        budgets.append(n)
        n *= 2
    report = error_sweep(SmoothnessParams(args.d, args.r), budgets, args.family, args.reps, args.seed,
                         L_offset=None if args.default_L else args.L_offset, sigma=args.sigma,
                         threads=_threads(args.threads))
    rows = [(row.n, row.J, row.L, row.family, row.reps, row.mean_err, row.stderr, row.seed) for row in report.rows]
    meta = _meta(args)
    meta["flags"] = {str(row.n): list(row.flags) for row in report.rows}
    _emit(args, _table(args, BENCH_COLUMNS, rows, meta))


def cmd_normlemma(args) -> None:
    if args.j_max < args.j_min:
        raise ValueError("--j-max must be at least --j-min")
    threads = _threads(args.threads)
    rows = []
    for j in range(args.j_min, args.j_max + 1):
        E = layer(args.d, j)
        deg = degree(E)
        if math.isinf(args.q) and deg < 2:
            raise ValueError(f"layer {j} has degree {deg} < 2; the sup-norm bound is undefined")
        est = expected_sup_norm(E, args.q, args.reps, derive_seed(args.seed, "sampler", j),
                                sigma=args.sigma, threads=threads)
        bound = lemma_bound(E, args.q)
        rows.append((j, E.shape[0], deg, "inf" if math.isinf(args.q) else args.q, est.mean, est.stderr,
                     est.mean / bound))
    _emit(args, _table(args, LEMMA_COLUMNS, rows))


def cmd_ratefit(args) -> None:
    with open(args.in_path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        meta, records = doc.get("meta"), doc["rows"]
    else:
        meta, records = loads_csv(text)
    d = args.d
    if d is None and meta is not None:
        d = meta.get("config", {}).get("d")
    points = [(float(rec["n"]), float(rec["mean_err"])) for rec in records]
    fit = fit_rate(points, args.predictor, d)
    result = {"slope": fit.slope, "intercept": fit.intercept, "residual": fit.residual_rms,
              "predictor": args.predictor, "regressor": fit.predictor, "points": len(points)}
    _emit(args, json.dumps(result, sort_keys=True) + "\n")


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker threads, 0 = auto; never changes results")

    parser = _Parser(prog="hcmc", description="Randomized hyperbolic-cross approximation experiments.")
    parser.add_argument("--version", action="version", version=f"hcmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("index", parents=[common], help="hyperbolic layer sizes")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--max-layer", type=int, required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_index)

    for name, handler in (("approx", cmd_approx), ("twostage", cmd_twostage)):
        p = sub.add_parser(name, parents=[common], help=f"run the {name} method on a coefficient file")
        p.add_argument("--d", type=int, required=True)
        p.add_argument("--r", type=float, required=True)
        p.add_argument("--budget", type=int, required=True)
        p.add_argument("--L", type=int)
        p.add_argument("--seed", type=_u64, required=True)
        p.add_argument("--input", required=True)
        p.add_argument("--out")
        p.add_argument("--sketch", choices=("ensemble", "law"), default="ensemble")
        if name == "approx":
            p.add_argument("--J", type=int)
            p.add_argument("--variant", choices=("complex", "real"), default="complex")
        else:
            p.add_argument("--m", type=int, required=True)
            p.add_argument("--s-aux", type=float)
        p.set_defaults(handler=handler)

    p = sub.add_parser("bench", parents=[common], help="expected sup-norm error against the budget")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--n-min", type=_pow2, required=True)
    p.add_argument("--n-max", type=_pow2, required=True)
    p.add_argument("--n-step", choices=("pow2",), default="pow2")
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--family", choices=FAMILIES, default="random_ball")
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--L-offset", type=int, default=2, help="use L = J + offset (default 2)")
    p.add_argument("--default-L", action="store_true", help="use the theory default for L instead of --L-offset")
    p.add_argument("--sigma", type=int, default=4, help="sup-norm grid oversampling")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("normlemma", parents=[common], help="expected norm of Gaussian polynomials on layers")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--j-min", type=int, required=True)
    p.add_argument("--j-max", type=int, required=True)
    p.add_argument("--q", type=_q_value, default=math.inf)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--sigma", type=int, default=4)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_normlemma)

    p = sub.add_parser("ratefit", parents=[common], help="fit a rate to a bench table")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--predictor", choices=("raw_log", "hyperbolic"), default="raw_log")
    p.add_argument("--d", type=int)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_ratefit)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", 1) < 0:
            raise UsageError("--threads must be >= 0")
        if getattr(args, "reps", 2) < 2:
            raise UsageError("--reps must be at least 2")
        if getattr(args, "L_offset", 1) < 1:
            raise UsageError("--L-offset must be at least 1")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        args.handler(args)
    except (ValueError, OSError, OverflowError, MemoryError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())
