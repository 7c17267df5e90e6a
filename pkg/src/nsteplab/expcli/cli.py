"""Command line entry point: ``nsteplab run|summarize|welch|plotdata``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

from nsteplab import stats
from nsteplab.expcli import sweep
from nsteplab.expcli.config import PRESETS, ConfigError, parse_config
from nsteplab.errors import ContractError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsteplab", description="n-step DQN-style experiments on mountain car")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a sweep (completed runs are skipped)")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--config", metavar="FILE", help="flat key = value sweep file")
    r.add_argument("--runs", type=int, help="seeds per configuration")
    r.add_argument("--seed", type=int, help="base seed")
    r.add_argument("--out", help="output directory")
    r.add_argument("--jobs", type=int, help="parallel runs")
    r.add_argument("--labels", help="comma-separated subset of labels")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="extra config line, e.g. episodes=100 or config.sarsa_n1.epsilon=0.2")
    r.add_argument("--dry-run", action="store_true", help="print the resolved sweep and exit")

    s = sub.add_parser("summarize", help="print summary.csv of a finished sweep")
    s.add_argument("--out", default="results")

    w = sub.add_parser("welch", help="Welch's test between two labels")
    w.add_argument("--a", required=True, metavar="LABEL")
    w.add_argument("--b", required=True, metavar="LABEL")
    w.add_argument("--window", default="all", choices=stats.WINDOWS)
    w.add_argument("--out", default="results")

    d = sub.add_parser("plotdata", help="write plot.csv (interval means with 95%% CIs)")
    d.add_argument("--out", default="results")
    d.add_argument("--window-size", type=int, default=stats.WINDOW_SIZE)
    return p


def _resolve(args) -> sweep.SweepSpec:
    lines = []
    if args.config:
        lines.append(Path(args.config).read_text(encoding="utf-8"))
    lines.extend(args.set)
    if args.labels:
        lines.append(f"labels = {args.labels}")
    spec = parse_config("\n".join(lines), preset_name=args.preset)
    changes = {}
    if args.runs is not None:
        changes["runs_per_config"] = args.runs
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = args.out
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    return dataclasses.replace(spec, **changes)


def cmd_run(args) -> int:
    try:
        spec = _resolve(args)
    except (ConfigError, ContractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.dry_run:
        from nsteplab.expcli.config import render
        sys.stdout.write(render(spec))
        return 0
    total = len(spec.labels) * spec.runs_per_config
    done = 0

    def progress(label, idx, seed, err):
        nonlocal done
        done += 1
        status = "ok" if err is None else f"FAILED ({err})"
        print(f"[{done}] {label} run {idx} seed {seed}: {status}", file=sys.stderr, flush=True)

    report = sweep.run_sweep(spec, progress=progress)
    print(f"{len(report.executed)} executed, {len(report.skipped)} skipped, "
          f"{len(report.failed)} failed of {total}; results in {spec.out_dir}")
    return 0 if report.ok else 1


def cmd_summarize(args) -> int:
    path = Path(args.out) / "summary.csv"
    if not path.exists():
        print(f"error: {path} not found", file=sys.stderr)
        return 2
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    print(f"{'label':<28} {'window':<8} {'n':>4} {'mean':>10} {'sd':>9} {'ci_low':>10} {'ci_high':>10}")
    for label, window, n, mean, sd, lo, hi in rows[1:]:
        print(f"{label:<28} {window:<8} {n:>4} {float(mean):>10.2f} {float(sd):>9.2f} "
              f"{float(lo):>10.2f} {float(hi):>10.2f}")
    return 0


def cmd_welch(args) -> int:
    try:
        data = sweep.read_episodes(args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for label in (args.a, args.b):
        if label not in data:
            print(f"error: no runs for label {label!r}", file=sys.stderr)
            return 2
    a = [stats.window_mean(r, args.window) for r in data[args.a].values()]
    b = [stats.window_mean(r, args.window) for r in data[args.b].values()]
    try:
        w = stats.welch_test(a, b)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(",".join(sweep.WELCH_HEADER))
    print(",".join([args.a, args.b, args.window, sweep.fmt(w.t_stat), sweep.fmt(w.dof), sweep.fmt(w.p_value)]))
    return 0


def cmd_plotdata(args) -> int:
    try:
        path = sweep.emit_plot_data(args.out, args.window_size)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "summarize": cmd_summarize, "welch": cmd_welch, "plotdata": cmd_plotdata}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
