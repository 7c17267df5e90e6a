"""Multi-seed sweep execution and CSV persistence.

Every finished run is written atomically to
``<out>/runs/<label>-<confighash>/seed_<seed>.csv``; a run whose file already
exists is skipped, so an interrupted sweep resumes where it stopped. The
collector then rebuilds ``episodes.csv``, ``summary.csv`` and ``welch.csv``
from those per-run files.
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import math
import multiprocessing
import os
import tempfile
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field, replace
from pathlib import Path

from nsteplab import stats
from nsteplab.expcli.config import SweepSpec
from nsteplab.trainer import ExperimentConfig, run

log = logging.getLogger(__name__)

EPISODES_HEADER = ["label", "seed", "episode", "return", "steps", "timed_out"]
SUMMARY_HEADER = ["label", "window", "n_runs", "mean", "sd", "ci_low", "ci_high"]
WELCH_HEADER = ["label_a", "label_b", "window", "t", "dof", "p"]
PLOT_HEADER = ["label", "interval", "mean", "ci_low", "ci_high", "n_runs"]
RUN_HEADER = ["episode", "return", "steps", "timed_out"]


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def config_hash(cfg: ExperimentConfig) -> str:
    d = cfg.as_dict()
    d.pop("seed", None)
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def run_path(out_dir: str | Path, label: str, cfg: ExperimentConfig, seed: int) -> Path:
    return Path(out_dir) / "runs" / f"{label}-{config_hash(cfg)}" / f"seed_{seed}.csv"


@dataclass(frozen=True)
class RunTask:
    label: str
    run_index: int
    seed: int
    config: ExperimentConfig
    path: str


@dataclass
class SweepReport:
    executed: list[tuple[str, int]] = field(default_factory=list)
    skipped: list[tuple[str, int]] = field(default_factory=list)
    failed: list[tuple[str, int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed


def _write_atomic(path: Path, rows: Iterable[list], header: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        os.chmod(tmp, 0o644)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _execute(task: RunTask) -> tuple[str, int, int, str | None]:
    try:
        result = run(replace(task.config, seed=task.seed))
        rows = [[r.episode_index, fmt(r.episode_return), r.steps, int(r.timed_out)]
                for r in result.episodes]
        _write_atomic(Path(task.path), rows, RUN_HEADER)
        return task.label, task.run_index, task.seed, None
    except Exception as exc:  # reported per run, the sweep continues
        return task.label, task.run_index, task.seed, f"{type(exc).__name__}: {exc}"


def plan(spec: SweepSpec) -> list[RunTask]:
    tasks = []
    for label, cfg in spec.configs:
        for i in range(spec.runs_per_config):
            seed = spec.seed(label, i)
            tasks.append(RunTask(label, i, seed, cfg, str(run_path(spec.out_dir, label, cfg, seed))))
    return tasks


def run_sweep(spec: SweepSpec,
              progress: Callable[[str, int, int, str | None], None] | None = None) -> SweepReport:
    """Execute missing runs (in parallel across runs) and rebuild the CSVs."""
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = SweepReport()
    pending = []
    for t in plan(spec):
        if os.path.exists(t.path):
            report.skipped.append((t.label, t.run_index))
        else:
            pending.append(t)

    def collect(item):
        label, idx, seed, err = item
        if err is None:
            report.executed.append((label, idx))
        else:
            log.error("run %s #%d (seed %d) failed: %s", label, idx, seed, err)
            report.failed.append((label, idx, err))
        if progress is not None:
            progress(label, idx, seed, err)

    if spec.jobs == 1 or len(pending) <= 1:
        for t in pending:
            collect(_execute(t))
    else:
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(min(spec.jobs, len(pending))) as pool:
            for item in pool.imap_unordered(_execute, pending):
                collect(item)

    collect_results(spec)
    return report


# -- collection ---------------------------------------------------------------

def read_run(path: str | Path) -> list[tuple[int, float, int, bool]]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        if next(r) != RUN_HEADER:
            raise ValueError(f"{path}: unexpected header")
        return [(int(e), float(ret), int(s), t == "1") for e, ret, s, t in r]


def load_runs(spec: SweepSpec) -> dict[str, dict[int, list[tuple[int, float, int, bool]]]]:
    """label -> seed -> episode rows, for every run present on disk."""
    runs: dict[str, dict[int, list]] = {label: {} for label in spec.labels}
    for t in plan(spec):
        if os.path.exists(t.path):
            runs[t.label][t.seed] = read_run(t.path)
    return runs


def window_values(rows_by_seed: dict[int, list], window: str) -> list[float]:
    return [stats.window_mean([row[1] for row in rows], window) for rows in rows_by_seed.values()
            if window == "all" or len(rows) >= stats.WINDOW_SIZE]


def _summary_row(label: str, window: str, values: list[float]) -> list[str]:
    n = len(values)
    if n >= 2:
        s = stats.summarize(values)
        return [label, window, str(n), fmt(s.mean), fmt(s.sample_sd), fmt(s.ci_low), fmt(s.ci_high)]
    mean = fmt(values[0]) if n == 1 else "nan"
    return [label, window, str(n), mean, "nan", "nan", "nan"]


def welch_row(a_label: str, b_label: str, window: str, a: list[float], b: list[float]) -> list[str]:
    try:
        w = stats.welch_test(a, b)
        return [a_label, b_label, window, fmt(w.t_stat), fmt(w.dof), fmt(w.p_value)]
    except Exception:
        return [a_label, b_label, window, "nan", "nan", "nan"]


def collect_results(spec: SweepSpec) -> dict[str, dict[int, list]]:
    """Rebuild episodes.csv, summary.csv and welch.csv from per-run files."""
    out = Path(spec.out_dir)
    runs = load_runs(spec)
    episode_rows = []
    for t in plan(spec):
        for e, ret, steps, timed_out in runs[t.label].get(t.seed, []):
            episode_rows.append([t.label, t.seed, e, fmt(ret), steps, int(timed_out)])
    _write_atomic(out / "episodes.csv", episode_rows, EPISODES_HEADER)

    values = {(label, w): window_values(runs[label], w) for label in spec.labels for w in stats.WINDOWS}
    _write_atomic(out / "summary.csv",
                  [_summary_row(label, w, values[label, w]) for label in spec.labels for w in stats.WINDOWS],
                  SUMMARY_HEADER)
    welch_rows = [welch_row(a, b, w, values[a, w], values[b, w])
                  for a, b in itertools.combinations(spec.labels, 2) for w in stats.WINDOWS]
    _write_atomic(out / "welch.csv", welch_rows, WELCH_HEADER)
    return runs


def read_episodes(out_dir: str | Path) -> dict[str, dict[int, list[float]]]:
    """label -> seed -> returns in episode order, from episodes.csv."""
    data: dict[str, dict[int, list[tuple[int, float]]]] = {}
    with open(Path(out_dir) / "episodes.csv", newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        if next(r) != EPISODES_HEADER:
            raise ValueError("episodes.csv: unexpected header")
        for label, seed, episode, ret, _steps, _to in r:
            data.setdefault(label, {}).setdefault(int(seed), []).append((int(episode), float(ret)))
    return {label: {seed: [ret for _, ret in sorted(rows)] for seed, rows in by_seed.items()}
            for label, by_seed in data.items()}


def emit_plot_data(out_dir: str | Path, window_size: int = 50) -> Path:
    """Interval means across runs with 95% t intervals, written to plot.csv.

    Rows where fewer runs than the label's maximum cover an interval show the
    reduced count in ``n_runs``; intervals with a single run get NaN bounds.
    """
    if window_size < 1:
        raise ValueError("window_size must be >= 1")
    data = read_episodes(out_dir)
    rows = []
    for label, by_seed in data.items():
        per_run = [[math.fsum(r[k * window_size:(k + 1) * window_size]) / window_size
                    for k in range(len(r) // window_size)] for r in by_seed.values()]
        n_intervals = max((len(p) for p in per_run), default=0)
        for k in range(n_intervals):
            vals = [p[k] for p in per_run if k < len(p)]
            if len(vals) >= 2:
                s = stats.summarize(vals)
                rows.append([label, k, fmt(s.mean), fmt(s.ci_low), fmt(s.ci_high), len(vals)])
            else:
                rows.append([label, k, fmt(vals[0]), "nan", "nan", len(vals)])
    path = Path(out_dir) / "plot.csv"
    _write_atomic(path, rows, PLOT_HEADER)
    return path
