"""Command-line entry point: ``nsrlsvi {run,sweep,verify-env,design}``."""

import argparse
from pathlib import Path
import sys

from .design import DesignError
from .envs import EnvError
from .harness import (ConfigError, cpu_count, design_for, execute, expand_seeds, load_config,
                      resolve_env_path, sweep, verify_report)
from .schedule import ScheduleError


def _seeds(text):
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def _parser():
    p = argparse.ArgumentParser(prog="nsrlsvi", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    r.add_argument("--output", help="override the config's output directory")

    s = sub.add_parser("sweep", help="run several configs, possibly over many seeds")
    s.add_argument("configs", nargs="*")
    s.add_argument("--seeds", type=_seeds, help="e.g. 1-20 or 1,2,5")
    s.add_argument("--jobs", type=int, default=1, help="worker processes (0 = all cores)")
    s.add_argument("--output", default="sweep_out")

    v = sub.add_parser("verify-env", help="check an environment spec")
    v.add_argument("env")
    v.add_argument("--probes", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)

    d = sub.add_parser("design", help="compute an approximate D-optimal design")
    d.add_argument("env")
    d.add_argument("--eps", type=float, default=0.01)
    d.add_argument("--output")
    return p


def _run(args):
    cfg = load_config(args.config)
    if args.output:
        cfg.output = args.output
    res = execute(cfg)
    print(f"wrote {cfg.output}: regret {res.regret:.6g} over {len(res.logs)} rounds, "
          f"{res.span_failures} span failures (budget {res.d * res.H})")
    if not res.ok:
        print(f"error: {res.error}", file=sys.stderr)
        return 3
    return 0


def _sweep(args):
    configs = [load_config(c) for c in args.configs]
    runs = expand_seeds(configs, args.seeds, args.output)
    jobs = cpu_count() if args.jobs == 0 else max(1, args.jobs)
    report = sweep(runs, jobs, args.output)
    for label, freq in report.optimism.items():
        print(f"{label}: optimism frequency {freq:.4f}")
    for label, seed, err in report.failures:
        print(f"failed: {label} seed {seed}: {err}", file=sys.stderr)
    return 0 if report.ok else 3


def _verify(args):
    lines, rep = verify_report(resolve_env_path(args.env, Path.cwd()), args.probes, args.seed)
    print("\n".join(lines))
    return 0 if rep.is_lbc else 4


def _design(args):
    design = design_for(resolve_env_path(args.env, Path.cwd()), args.eps, args.output)
    print(f"g(rho) = {design.g_value:.6g}, d = {design.d}, support = {design.m}, "
          f"iterations = {design.iterations}")
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    handler = {"run": _run, "sweep": _sweep, "verify-env": _verify, "design": _design}[args.command]
    try:
        return handler(args)
    except (ConfigError, EnvError, ScheduleError, DesignError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
