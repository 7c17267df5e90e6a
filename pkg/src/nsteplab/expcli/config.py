"""Sweep definitions: presets, a flat ``key = value`` format and seed mixing.

Format (one assignment per line, ``#`` starts a comment)::

    preset = nstep_sweep          # optional starting grid
    runs = 30
    base_seed = 0
    out = results
    jobs = 1
    labels = sarsa_n1, sarsa_n20  # optional filter, in this order
    episodes = 200                # applies to every config
    config.sarsa_n20.epsilon = 0.05
    config.mine.family = treebackup   # new labels may be defined too

Keys under ``config.<label>.`` are ExperimentConfig fields or AlgorithmSpec
fields (``family``, ``n``, ``off_policy_correction``, ``sigma_mode``,
``sigma``, ``sigma_decrement``, ``cutoff_k``). Bare field names apply to all
configs. ``seed`` is not settable: seeds come from ``base_seed``.
"""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field

from nsteplab.errors import ContractError
from nsteplab.targets import AlgorithmSpec, Family
from nsteplab.trainer import ExperimentConfig

MASK64 = (1 << 64) - 1

ALGO_FIELDS = {f.name: f for f in dataclasses.fields(AlgorithmSpec)}
RUN_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)
              if f.name not in ("algorithm", "seed")}
SWEEP_KEYS = ("preset", "runs", "base_seed", "out", "jobs", "labels")
_LABEL_RE = re.compile(r"^[A-Za-z0-9_.+-]+$")


class ConfigError(ContractError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class SweepSpec:
    configs: tuple[tuple[str, ExperimentConfig], ...]
    runs_per_config: int = 1
    base_seed: int = 0
    out_dir: str = "results"
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "configs", tuple((str(l), c) for l, c in self.configs))
        labels = [l for l, _ in self.configs]
        if len(set(labels)) != len(labels):
            raise ContractError("config labels must be unique")
        for l in labels:
            if not _LABEL_RE.match(l):
                raise ContractError(f"invalid label {l!r}")
        if self.runs_per_config < 1 or self.jobs < 1:
            raise ContractError("runs and jobs must be >= 1")
        if not 0 <= self.base_seed <= MASK64:
            raise ContractError("base_seed must be a 64-bit unsigned integer")

    @property
    def labels(self) -> list[str]:
        return [l for l, _ in self.configs]

    def config(self, label: str) -> ExperimentConfig:
        for l, c in self.configs:
            if l == label:
                return c
        raise KeyError(label)

    def seed(self, label: str, run_index: int) -> int:
        return run_seed(self.base_seed, label, run_index)


# -- seeds ------------------------------------------------------------------

def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def run_seed(base_seed: int, label: str, run_index: int) -> int:
    """``base_seed`` XOR a platform-independent mix of (label, run index)."""
    return (base_seed ^ splitmix64(fnv1a64(label) ^ splitmix64(run_index))) & MASK64


# -- presets ------------------------------------------------------------------

def _six_algorithms() -> list[tuple[str, AlgorithmSpec]]:
    return [
        ("retrace", AlgorithmSpec(Family.RETRACE, cutoff_k=1.0)),
        ("qlearning", AlgorithmSpec(Family.QLEARNING)),
        ("treebackup", AlgorithmSpec(Family.TREE_BACKUP)),
        ("sarsa", AlgorithmSpec(Family.SARSA)),
        ("qsigma0.5", AlgorithmSpec(Family.QSIGMA, sigma=0.5)),
        ("decsigma", AlgorithmSpec(Family.QSIGMA, sigma_mode="decaying", sigma=1.0)),
    ]


def _with_n(spec: AlgorithmSpec, n: int, **kw) -> AlgorithmSpec:
    return dataclasses.replace(spec, n=n, **kw)


def preset(name: str) -> list[tuple[str, ExperimentConfig]]:
    if name == "on_vs_off":
        algos = [a for a in _six_algorithms() if a[0] in ("sarsa", "qsigma0.5", "decsigma")]
        return [
            (f"{tag}_n1_{mode}", ExperimentConfig(_with_n(spec, 1, off_policy_correction=(mode == "off"))))
            for tag, spec in algos
            for mode in ("on", "off")
        ]
    if name == "nstep_sweep":
        return [
            (f"{tag}_n{n}", ExperimentConfig(_with_n(spec, n)))
            for tag, spec in _six_algorithms()
            for n in (1, 3, 5, 10, 20)
        ]
    if name == "target_freq":
        return [
            (f"{tag}_n20_sync{period}", ExperimentConfig(_with_n(spec, 20), target_sync_period=period))
            for tag, spec in _six_algorithms()
            for period in (500, 1000, 2000)
        ]
    raise ContractError(f"unknown preset {name!r}; expected one of {PRESETS}")


PRESETS = ("on_vs_off", "nstep_sweep", "target_freq")


# -- parsing ------------------------------------------------------------------

def _convert(raw: str, ftype, name: str, line: int):
    t = ftype if isinstance(ftype, str) else getattr(ftype, "__name__", str(ftype))
    try:
        if t == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if t == "int":
            return int(raw, 0)
        if t == "float":
            return float(raw)
        if t == "Family":
            return Family(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot read {raw!r} as {t}", line) from None


def _field_type(name: str) -> str:
    f = ALGO_FIELDS.get(name) or RUN_FIELDS[name]
    return f.type if isinstance(f.type, str) else f.type.__name__


def _apply(cfg: ExperimentConfig | None, overrides: list[tuple[str, object, int]],
           label: str) -> ExperimentConfig:
    algo_kw = {k: v for k, v, _ in overrides if k in ALGO_FIELDS}
    run_kw = {k: v for k, v, _ in overrides if k in RUN_FIELDS}
    line = overrides[-1][2] if overrides else None
    try:
        if cfg is None:
            if "family" not in algo_kw:
                raise ConfigError(f"config {label!r} is not in the preset and sets no family", line)
            return ExperimentConfig(AlgorithmSpec(**algo_kw), **run_kw)
        algo = dataclasses.replace(cfg.algorithm, **algo_kw) if algo_kw else cfg.algorithm
        return dataclasses.replace(cfg, algorithm=algo, **run_kw)
    except ConfigError:
        raise
    except (ContractError, TypeError, ValueError) as exc:
        raise ConfigError(f"config {label!r}: {exc}", line) from None


def parse_config(text: str, preset_name: str | None = None) -> SweepSpec:
    """Parse the flat format into a validated :class:`SweepSpec`.

    ``preset_name`` is used when the text has no ``preset`` key.
    """
    sweep: dict[str, tuple[str, int]] = {}
    global_over: list[tuple[str, object, int]] = []
    label_over: dict[str, list[tuple[str, object, int]]] = {}
    seen: dict[str, int] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError("empty key or value", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno)
        seen[key] = lineno
        if key in SWEEP_KEYS:
            sweep[key] = (value, lineno)
        elif key.startswith("config."):
            rest = key[len("config."):]
            label, _, fname = rest.rpartition(".")
            if not label or not _LABEL_RE.match(label):
                raise ConfigError(f"malformed per-config key {key!r}", lineno)
            if fname not in ALGO_FIELDS and fname not in RUN_FIELDS:
                raise ConfigError(f"unknown field {fname!r}", lineno)
            label_over.setdefault(label, []).append(
                (fname, _convert(value, _field_type(fname), key, lineno), lineno))
        elif key in ALGO_FIELDS or key in RUN_FIELDS:
            global_over.append((key, _convert(value, _field_type(key), key, lineno), lineno))
        else:
            raise ConfigError(f"unknown key {key!r}", lineno)

    name = sweep["preset"][0] if "preset" in sweep else preset_name
    base: list[tuple[str, ExperimentConfig | None]] = []
    if name is not None:
        try:
            base = list(preset(name))
        except ContractError as exc:
            raise ConfigError(str(exc), sweep.get("preset", (None, None))[1]) from None
    known = {l for l, _ in base}
    base += [(l, None) for l in label_over if l not in known]

    configs = []
    for label, cfg in base:
        if cfg is not None and global_over:
            cfg = _apply(cfg, global_over, label)
        extra = label_over.get(label, [])
        if cfg is None:
            cfg = _apply(None, global_over + extra, label)
        elif extra:
            cfg = _apply(cfg, extra, label)
        configs.append((label, cfg))

    if "labels" in sweep:
        value, lineno = sweep["labels"]
        wanted = [w.strip() for w in value.split(",") if w.strip()]
        table = dict(configs)
        missing = [w for w in wanted if w not in table]
        if missing:
            raise ConfigError(f"labels not defined: {', '.join(missing)}", lineno)
        configs = [(w, table[w]) for w in wanted]
    if not configs:
        raise ConfigError("no configurations: set a preset or define config.<label>.family")

    def sweep_int(key: str, default: int, low: int) -> int:
        if key not in sweep:
            return default
        value, lineno = sweep[key]
        n = _convert(value, "int", key, lineno)
        if not low <= n <= MASK64:
            raise ConfigError(f"{key} must lie in [{low}, 2**64 - 1], got {n}", lineno)
        return n

    runs, base_seed, jobs = sweep_int("runs", 1, 1), sweep_int("base_seed", 0, 0), sweep_int("jobs", 1, 1)
    try:
        return SweepSpec(
            configs=tuple(configs),
            runs_per_config=runs,
            base_seed=base_seed,
            out_dir=sweep["out"][0] if "out" in sweep else "results",
            jobs=jobs,
        )
    except ContractError as exc:
        raise ConfigError(str(exc)) from None


def _render_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Family):
        return v.value
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(spec: SweepSpec) -> str:
    """Fully explicit text form; ``parse_config(render(s)) == s``."""
    lines = [
        f"runs = {spec.runs_per_config}",
        f"base_seed = {spec.base_seed}",
        f"out = {spec.out_dir}",
        f"jobs = {spec.jobs}",
    ]
    for label, cfg in spec.configs:
        lines.append("")
        for name in ALGO_FIELDS:
            lines.append(f"config.{label}.{name} = {_render_value(getattr(cfg.algorithm, name))}")
        for name in RUN_FIELDS:
            lines.append(f"config.{label}.{name} = {_render_value(getattr(cfg, name))}")
    return "\n".join(lines) + "\n"


def load_config(path: str, preset_name: str | None = None) -> SweepSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), preset_name)
