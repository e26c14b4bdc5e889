"""Command line entry point: ``harvest-assoc simulate | verify-dist | sweep``.

Exit codes: 0 success, 1 a verification check failed, 2 usage or
configuration error.  Output goes under ``--out`` or, when that is absent,
under ``$HARVEST_ASSOC_OUT`` (default ``./runs``).
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import itertools
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import prob, verify
from .report import write_bundle, write_csv, write_manifest
from .scenario import load_scenario, resolve_scenario
from .sim import ConfigError, PolicyKind, run_replications

log = logging.getLogger("harvest_assoc")

OUT_ENV = "HARVEST_ASSOC_OUT"
SWEEP_AXES = ("mu", "theta", "alpha", "t", "k", "q_max")
SWEEP_DEFAULTS = {"mu": "0.03", "theta": "1", "alpha": "10", "t": "0.625", "k": "50", "q_max": "7"}


class UsageError(Exception):
    pass


def output_root() -> Path:
    return Path(os.environ.get(OUT_ENV) or "runs")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _arms(text: str) -> tuple[int, ...]:
    try:
        arms = tuple(int(x) - 1 for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"arms must be comma-separated SBS ids, got {text!r}") from None
    return arms


# -- simulate -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    started, t0 = _now(), time.perf_counter()
    path = resolve_scenario(args.scenario)
    cfg = load_scenario(path)
    overrides = {k: v for k, v in {
        "seed": args.seed, "policy": args.policy, "trials": args.trials, "replications": args.replications,
        "gamma": args.gamma, "multi": args.multi, "arms": args.arms,
    }.items() if v is not None}
    try:
        cfg = dataclasses.replace(cfg, **overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out) if args.out else output_root() / f"{path.stem}-{cfg.policy.value}-s{cfg.seed}"
    log.info("running %d replication(s) of %s, %d trials, policy %s", cfg.replications, path, cfg.trials,
             cfg.policy.value)
    summary = run_replications(cfg, workers=args.workers, record_events=args.events)
    files = write_bundle(out, summary, events=args.events, trace=args.trace)
    write_manifest(out, files, command="simulate", cfg=cfg, seed=cfg.seed, started=started,
                   wall_time=time.perf_counter() - t0, extra={"scenario": path.name})
    print(f"aggregate reward {summary.mean:.6f} +/- {summary.stderr:.6f} over {cfg.replications} "
          f"replication(s); wrote {out}")
    return 0


# -- verify-dist --------------------------------------------------------------

def cmd_verify_dist(args) -> int:
    started, t0 = _now(), time.perf_counter()
    ctx = verify.Context(seed=args.seed, samples=args.samples)
    if args.inject:
        ctx.approx_rate = verify.FAULTS[args.inject]
    checks = [c for c in verify.REGISTRY if not args.only or args.only in c.name]
    if not checks:
        raise UsageError(f"no check name contains {args.only!r}")
    rows = verify.run_checks(ctx, checks)
    out = Path(args.out) if args.out else output_root() / "verify-dist"
    out.mkdir(parents=True, exist_ok=True)
    report = out / "verify_dist.csv"
    verify.write_report(rows, report)
    failed = [r for r in rows if not r.passed]
    write_manifest(out, [report], command="verify-dist", seed=args.seed, started=started,
                   wall_time=time.perf_counter() - t0,
                   extra={"checks": len(rows), "failed": len(failed), "inject": args.inject})
    for r in failed:
        print(f"FAIL {r.check} [{r.param_set}] {r.metric}={r.value:.6g} threshold={r.threshold:.6g}")
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed; report {report}")
    return 1 if failed else 0


# -- sweep --------------------------------------------------------------------

def parse_axis(name: str, text: str) -> np.ndarray:
    """``a,b,c`` lists values; ``start:stop:num`` spans ``num`` points inclusive."""
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            n = int(num)
            if n < 1:
                raise ValueError
            values = np.linspace(float(start), float(stop), n)
        else:
            values = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise UsageError(f"--{name.replace('_', '-')}: expected 'a,b,...' or 'start:stop:num', got {text!r}") from None
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise UsageError(f"--{name.replace('_', '-')}: values must be finite")
    if name == "k":
        if np.any(values != np.round(values)) or np.any(values < 1):
            raise UsageError("--k: values must be positive integers")
    elif name in ("theta", "alpha", "t"):
        if np.any(values < 0):
            raise UsageError(f"--{name}: values must be nonnegative")
    elif np.any(values <= 0):
        raise UsageError(f"--{name.replace('_', '-')}: values must be positive")
    return values


def cmd_sweep(args) -> int:
    started, t0 = _now(), time.perf_counter()
    axes = [parse_axis(a, getattr(args, a)) for a in SWEEP_AXES]
    size = int(np.prod([len(a) for a in axes]))
    if size > args.max_points:
        raise UsageError(f"grid has {size} points, above --max-points {args.max_points}")
    rows = []
    for mu, th, alpha, t, k, q_max in itertools.product(*axes):
        k = int(k)
        rows.append((mu, th, alpha, t, k, q_max,
                     prob.success_prob_lower_bound(mu, alpha, th, t, k, q_max),
                     prob.success_prob_numeric(mu, alpha, th, t, k, q_max, method=args.method)))
    out = Path(args.out) if args.out else output_root() / "sweep"
    out.mkdir(parents=True, exist_ok=True)
    path = write_csv(out / "sweep.csv", ("mu", "theta", "alpha", "t", "k", "q_max", "lower_bound", "numeric"), rows)
    write_manifest(out, [path], command="sweep", started=started, wall_time=time.perf_counter() - t0,
                   extra={"points": len(rows), "method": args.method})
    print(f"{len(rows)} grid points; wrote {path}")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="harvest-assoc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario and write the CSV bundle")
    s.add_argument("scenario", nargs="?", default="table1",
                   help="scenario file, or a shipped name (table1, large8); default table1")
    s.add_argument("--seed", type=int, help="base seed (overrides the scenario)")
    s.add_argument("--policy", choices=[k.value for k in PolicyKind], help="association policy")
    s.add_argument("--trials", type=int, help="trials per tracked user")
    s.add_argument("--replications", type=int, help="independent replications")
    s.add_argument("--gamma", type=float, help="EXP4-SB exploration rate in (0, 1]")
    s.add_argument("--multi", type=int, help="SBSs per super-action")
    s.add_argument("--arms", type=_arms, help="comma-separated SBS ids the users may pick, e.g. 1,2,3,4")
    s.add_argument("--workers", type=int, default=1, help="parallel replications (default 1)")
    s.add_argument("--events", action="store_true", help="also write events.csv")
    s.add_argument("--trace", action="store_true", help="also write the per-trial trace.csv")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify-dist", help="check the probability models against oracles")
    v.add_argument("--seed", type=int, default=verify.Context.seed)
    v.add_argument("--samples", type=int, default=verify.Context.samples)
    v.add_argument("--inject", choices=sorted(verify.FAULTS), help="swap in a known-bad component")
    v.add_argument("--only", help="run checks whose name contains this text")
    v.add_argument("--out", help="output directory")
    v.set_defaults(func=cmd_verify_dist)

    w = sub.add_parser("sweep", help="success probability over a parameter grid")
    for a in SWEEP_AXES:
        w.add_argument(f"--{a.replace('_', '-')}", dest=a, default=SWEEP_DEFAULTS[a],
                       help=f"values or start:stop:num (default {SWEEP_DEFAULTS[a]})")
    w.add_argument("--method", choices=("quad", "legendre"), default="legendre")
    w.add_argument("--max-points", type=int, default=100_000)
    w.add_argument("--out", help="output directory")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"harvest-assoc {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
