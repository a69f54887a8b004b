"""Command-line driver.

Each subcommand writes one table (CSV or JSON lines) whose columns are fixed
per subcommand, and prints a one-line summary.  Every row carries ``seed``,
``replicas`` and ``estimator_id``.

Defaults may come from a ``key = value`` file given with ``--config``; keys
are long option names.  Flags override the file, the file overrides the
built-in defaults.

Exit codes: 0 success, 1 runtime error, 2 invalid arguments.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Callable, Sequence

import numpy as np

from . import bellshape, partition, tail
from .estimates import TailEstimate
from .partition import RegimeViolation, build_scheme
from .process import sample_rwrs, second_moment
from .scenery import DivergentMGF, SceneryDistribution
from .walk import (
    INCREMENT_LAWS,
    WalkConfig,
    localization_fit,
    local_times,
    max_displacement,
    simulate_path,
)

COLUMNS = {
    "simulate": ["replica", "d", "n", "alpha", "c", "x_n", "range_size", "self_intersection",
                 "max_local_time", "max_displacement"],
    "moments": ["d", "alpha", "c", "n", "second_moment", "std_error", "decoupled",
                "decoupled_std_error", "z", "normalizer", "ratio"],
    "tail": ["d", "alpha", "c", "n", "y", "log_p", "std_log", "p", "log_ci_low", "log_ci_high",
             "hits", "ess"],
    "exponent": ["d", "alpha", "c", "n", "y", "ny", "log_p", "std_log", "log_neg_log_p", "ess",
                 "slope", "intercept", "slope_std_error"],
    "localization": ["d", "side", "t", "t_scaled", "log_p", "std_log", "hits", "slope",
                     "intercept"],
    "partition": ["key", "value"],
    "bellshape-verify": ["check", "case", "params", "value", "tolerance", "passed"],
    "lower-bound": ["d", "alpha", "c", "n", "y", "k", "log_bound", "kappa_hat", "bracket",
                    "log_scenery_tail"],
}
AUDIT = ["seed", "replicas", "estimator_id"]

# subcommands whose question is only posed in the regime 1 <= alpha < d/2
NEEDS_REGIME = ("exponent", "partition")


class UsageError(ValueError):
    pass


def int_list(text: str) -> list[int]:
    try:
        out = [int(float(t)) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def count(text: str) -> int:
    # accept 1e5 as well as 100000
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if v != int(v):
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    return int(v)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, replicas: int, scenery: bool = True):
    p.add_argument("--seed", type=int, default=None, help="random seed (required)")
    p.add_argument("--replicas", type=count, default=replicas)
    p.add_argument("--output", default="-", help="output path, '-' for stdout")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--config", default=None, help="key = value file of defaults")
    p.add_argument("--d", type=int, default=3, help="lattice dimension")
    p.add_argument("--law", choices=INCREMENT_LAWS, default="simple", help="increment law")
    if scenery:
        p.add_argument("--alpha", type=float, default=1.0, help="scenery tail exponent")
        p.add_argument("--c", type=float, default=1.0, help="scenery tail constant")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="rwrs", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["simulate"] = sub.add_parser("simulate", help="sample paths and X_n")
    _common(p, 1)
    p.add_argument("--n", type=count, default=1000)

    p = subs["moments"] = sub.add_parser("moments", help="E[X_n^2] and the decoupling identity")
    _common(p, 10**4)
    p.add_argument("--n", type=int_list, default=[1000, 4000, 16000])

    p = subs["tail"] = sub.add_parser("tail", help="estimate P(X_n >= n y)")
    _common(p, 10**4)
    p.add_argument("--n", type=count, default=256)
    p.add_argument("--y", type=float, default=1.0)
    p.add_argument("--estimator", choices=("naive", "tilted", "lower-bound"), default="tilted")
    p.add_argument("--inner", type=count, default=8, help="inner replicas per outer path")
    p.add_argument("--proposal", choices=("auto", "walk", "trap"), default="auto")

    p = subs["exponent"] = sub.add_parser("exponent", help="fit log(-log P) against log(n y)")
    _common(p, 10**4)
    p.add_argument("--n", type=int_list, default=[256, 1024, 4096, 16384])
    p.add_argument("--y", type=float, default=1.0)
    p.add_argument("--estimator", choices=("naive", "tilted"), default="tilted")
    p.add_argument("--inner", type=count, default=8)

    p = subs["localization"] = sub.add_parser("localization", help="sojourn-time tails of cubes")
    _common(p, 10**5, scenery=False)
    p.add_argument("--sides", type=int_list, default=[1, 2, 4, 8])
    p.add_argument("--points", type=count, default=8)
    p.add_argument("--min-hits", type=count, default=100)

    p = subs["partition"] = sub.add_parser("partition", help="build the local-time partition")
    _common(p, 0)
    p.add_argument("--n", type=float, default=1e6)
    p.add_argument("--y", type=float, default=1.0)
    p.add_argument("--z", type=float, default=0.1, help="down-class threshold")

    p = subs["bellshape-verify"] = sub.add_parser("bellshape-verify", help="bell-shape suite")
    _common(p, 10**5, scenery=False)
    p.add_argument("--pairs", type=count, default=50)
    p.add_argument("--monotone-pairs", type=count, default=20)

    p = subs["lower-bound"] = sub.add_parser("lower-bound", help="k-return lower bound")
    _common(p, 10**5)
    p.add_argument("--n", type=count, default=4096)
    p.add_argument("--y", type=float, default=1.0)
    p.add_argument("--k", type=count, default=None)
    p.add_argument("--scan", action="store_true", help="report every k in 1..3 (n y)^a")
    p.add_argument("--horizon", type=count, default=10**6)
    return parser, subs


def read_config(path: str) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for i, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{i}: expected 'key = value'")
            out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def parse(argv: Sequence[str] | None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sp = subs[args.command]
        try:
            values = read_config(args.config)
        except OSError as exc:
            sp.error(f"cannot read config: {exc}")
        except UsageError as exc:
            sp.error(str(exc))
        known = {a.dest: a for a in sp._actions}
        for key, value in values.items():
            if key not in known or key in ("config", "help"):
                sp.error(f"unknown config key {key!r}")
            act = known[key]
            if isinstance(act, argparse._StoreTrueAction):
                values[key] = value.lower() in ("1", "true", "yes", "on")
            elif act.choices is not None and value not in act.choices:
                sp.error(f"config key {key!r}: invalid choice {value!r}")
        # string defaults go through each option's type on reparse
        sp.set_defaults(**values)
        args = parser.parse_args(argv)
    if args.seed is None:
        subs[args.command].error("--seed is required (no default seed, for reproducibility)")
    if args.replicas < 0:
        subs[args.command].error("--replicas must be >= 0")
    return args


# ---------------------------------------------------------------------------
# subcommands: each returns (rows, summary)
# ---------------------------------------------------------------------------

def _walk(args) -> WalkConfig:
    return WalkConfig(args.d, args.law)


def _dist(args) -> SceneryDistribution:
    return SceneryDistribution(args.alpha, args.c)


def _require_regime(args):
    if not 1.0 <= args.alpha < args.d / 2.0:
        raise RegimeViolation(
            f"regime violation: requires 1 <= alpha < d/2 (got alpha = {args.alpha}, d = {args.d})")


def _tail_row(args, n, y, est: TailEstimate) -> dict:
    lp, sl = est.log_probability, est.std_log
    return dict(d=args.d, alpha=args.alpha, c=args.c, n=n, y=y, log_p=lp, std_log=sl,
                p=est.probability, log_ci_low=lp - 1.96 * sl, log_ci_high=min(lp + 1.96 * sl, 0.0),
                hits=est.hits, ess=est.effective_replicas, estimator_id=est.estimator_id)


def cmd_simulate(args):
    cfg, dist = _walk(args), _dist(args)
    reps = max(args.replicas, 1)
    rows = []
    for r in range(reps):
        s = sample_rwrs(cfg, dist, args.n, args.seed, replica=r)
        lt = s.local_times
        rows.append(dict(replica=r, d=args.d, n=args.n, alpha=args.alpha, c=args.c, x_n=s.x_n,
                         range_size=lt.range_size, self_intersection=lt.self_intersection,
                         max_local_time=int(lt.counts.max()),
                         max_displacement=max_displacement(simulate_path(cfg, args.n, args.seed, r)),
                         replicas=reps, estimator_id="path"))
    x = np.array([row["x_n"] for row in rows])
    return rows, f"simulate: {reps} path(s) of n = {args.n} in d = {args.d}, mean X_n = {x.mean():.6g}"


def _normalizer(d: int, n: int) -> float:
    if d == 1:
        return n**1.5
    if d == 2:
        return n * math.log(n)
    return float(n)


def cmd_moments(args):
    cfg, dist = _walk(args), _dist(args)
    if args.replicas < 2:
        raise UsageError("moments needs --replicas >= 2")
    rows = []
    for n in args.n:
        m = second_moment(cfg, dist, n, args.replicas, args.seed)
        norm = _normalizer(args.d, n)
        rows.append(dict(d=args.d, alpha=args.alpha, c=args.c, n=n, second_moment=m.value,
                         std_error=m.std_error, decoupled=m.decoupled,
                         decoupled_std_error=m.decoupled_std_error, z=m.z, normalizer=norm,
                         ratio=m.value / norm, estimator_id="sample-mean"))
    ratios = [r["ratio"] for r in rows]
    zmax = max(abs(r["z"]) for r in rows)
    return rows, (f"moments: ratio spread {max(ratios) / min(ratios):.4g} over {len(rows)} n values,"
                  f" max |z| = {zmax:.3g}")


def cmd_tail(args):
    cfg, dist = _walk(args), _dist(args)
    if args.estimator == "naive":
        est = tail.naive_tail(cfg, dist, args.n, args.y, args.replicas, args.seed)
    elif args.estimator == "tilted":
        proposal = None if args.proposal == "auto" else args.proposal
        est = tail.tilted_tail(cfg, dist, args.n, args.y, args.replicas, args.inner, args.seed,
                               proposal=proposal)
    else:
        lb = tail.lower_bound(cfg, dist, args.n, args.y, args.seed, replicas=args.replicas)
        est = TailEstimate(lb.log_bound, 0.0, args.replicas, "lower-bound", args.seed,
                           extra={"k": lb.k})
    row = _tail_row(args, args.n, args.y, est)
    return [row], (f"tail[{est.estimator_id}]: log P(X_{args.n} >= {args.n * args.y:g}) = "
                   f"{est.log_probability:.6g} +- {est.std_log:.3g}")


def cmd_exponent(args):
    _require_regime(args)
    cfg, dist = _walk(args), _dist(args)
    sweep = tail.exponent_sweep(cfg, dist, args.n, args.y, args.replicas, args.inner, args.seed,
                                estimator=args.estimator)
    f = sweep.fit
    rows = []
    for n, est in zip(sweep.n, sweep.estimates):
        lp = est.log_probability
        rows.append(dict(d=args.d, alpha=args.alpha, c=args.c, n=n, y=args.y, ny=n * args.y,
                         log_p=lp, std_log=est.std_log, log_neg_log_p=math.log(-lp),
                         ess=est.effective_replicas, slope=f.slope, intercept=f.intercept,
                         slope_std_error=f.slope_std_error, estimator_id=est.estimator_id))
    a = args.alpha / (args.alpha + 1.0)
    return rows, f"exponent: slope {f.slope:.4f} +- {f.slope_std_error:.2g} (a = {a:.4f})"


def cmd_localization(args):
    cfg = _walk(args)
    rows, slopes = [], []
    for side in args.sides:
        fit = localization_fit(cfg, side, args.replicas, args.seed, args.points, args.min_hits)
        slopes.append(fit.slope)
        for t, lp, sl, h in zip(fit.t, fit.log_p, fit.std_log, fit.hits):
            rows.append(dict(d=args.d, side=side, t=int(t), t_scaled=t / fit.scale, log_p=lp,
                             std_log=sl, hits=int(h), slope=fit.slope, intercept=fit.intercept,
                             estimator_id="naive"))
    return rows, (f"localization: slopes {', '.join(f'{s:.4g}' for s in slopes)}; "
                  f"max/min {max(slopes) / min(slopes):.3g}")


def cmd_partition(args):
    _require_regime(args)
    scheme = build_scheme(args.alpha, args.d, args.n, args.y, z_threshold=args.z)
    rows = []
    for line in scheme.to_text().splitlines():
        key, _, value = line.partition("=")
        rows.append(dict(key=key.strip(), value=value.strip()))
    derived = dict(a=scheme.a, b=scheme.b, down_limit=scheme.down_limit,
                   level0_limit=scheme.level0_limit, up_limit=scheme.up_limit)
    derived.update({f"residual_{k}": v for k, v in scheme.invariant_residuals().items()})
    rows += [dict(key=k, value=repr(float(v))) for k, v in derived.items()]
    if args.replicas > 0:
        n = int(args.n)
        if n != args.n or n > 10**6:
            raise UsageError("the decomposition check simulates paths; use an integer n <= 1e6")
        cfg, dist = _walk(args), _dist(args)
        vac = bad = 0
        for r in range(args.replicas):
            rep = partition.event_decomposition_check(sample_rwrs(cfg, dist, n, args.seed, r), scheme)
            vac += rep.vacuous
            bad += rep.violated
        rows += [dict(key="checked", value=str(args.replicas)),
                 dict(key="event_samples", value=str(args.replicas - vac)),
                 dict(key="violations", value=str(bad))]
    for row in rows:
        row.update(estimator_id="scheme")
    return rows, f"partition: N = {scheme.N}, chi = {scheme.chi:.6g}, beta = {scheme.beta:.6g}"


def cmd_bellshape(args):
    rows = []
    suite = bellshape.verify_suite(args.seed, pairs=args.pairs, monotone_pairs=args.monotone_pairs,
                                   replicas=max(args.replicas, 2))
    for r in suite:
        rows.append(dict(check=r.check, case=r.case, params=r.params, value=r.value,
                         tolerance=r.tolerance, passed=r.passed,
                         estimator_id="mc" if r.check == "coefficient-monotonicity" else "grid"))
    failed = sum(not r.passed for r in suite)
    return rows, f"bellshape-verify: {len(suite) - failed}/{len(suite)} checks passed"


def cmd_lower_bound(args):
    cfg, dist = _walk(args), _dist(args)
    if args.scan:
        scan = tail.lower_bound_scan(cfg, dist, args.n, args.y, args.seed, replicas=args.replicas,
                                     horizon=args.horizon)
        rows = [dict(d=args.d, alpha=args.alpha, c=args.c, n=args.n, y=args.y, k=int(k),
                     log_bound=float(v), kappa_hat=math.nan, bracket=math.nan,
                     log_scenery_tail=math.nan, estimator_id="lower-bound")
                for k, v in zip(scan.k, scan.log_bound)]
        return rows, f"lower-bound: argmax k = {scan.argmax} of {len(rows)}"
    lb = tail.lower_bound(cfg, dist, args.n, args.y, args.seed, k=args.k, replicas=args.replicas,
                          horizon=args.horizon)
    row = dict(d=args.d, alpha=args.alpha, c=args.c, n=args.n, y=args.y, k=lb.k,
               log_bound=lb.log_bound, kappa_hat=lb.kappa_hat, bracket=lb.bracket,
               log_scenery_tail=lb.log_scenery_tail, estimator_id="lower-bound")
    return [row], f"lower-bound: log P >= {lb.log_bound:.6g} at k = {lb.k}"


COMMANDS: dict[str, Callable] = {
    "simulate": cmd_simulate,
    "moments": cmd_moments,
    "tail": cmd_tail,
    "exponent": cmd_exponent,
    "localization": cmd_localization,
    "partition": cmd_partition,
    "bellshape-verify": cmd_bellshape,
    "lower-bound": cmd_lower_bound,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else v


def _json_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        # JSON has no inf or nan
        return v if math.isfinite(v) else repr(v)
    return v


def render(rows: list[dict], columns: list[str], fmt: str) -> str:
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])
    else:
        for row in rows:
            buf.write(json.dumps({c: _json_cell(row.get(c)) for c in columns}) + "\n")
    return buf.getvalue()


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = parse(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        rows, summary = COMMANDS[args.command](args)
    except (RegimeViolation, UsageError, DivergentMGF, ValueError) as exc:
        print(f"rwrs {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 -- report and map to the runtime exit code
        print(f"rwrs {args.command}: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for row in rows:
        row.setdefault("seed", args.seed)
        row.setdefault("replicas", args.replicas)
    text = render(rows, COLUMNS[args.command] + AUDIT, args.format)
    if args.output == "-":
        sys.stdout.write(text)
        print(summary, file=sys.stderr)
    else:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
        print(summary)
    return 0


def main() -> int:
    return run(sys.argv[1:])
