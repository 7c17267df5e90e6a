"""Compiled kernels vs the numpy fallback at the training shapes (H=1000, B=32).

    python benchmarks/bench_kernels.py [--repeat 7] [--hidden 1000] [--n 20]

Each timing is the best of ``--repeat`` rounds divided by the loop count.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from nsteplab import _backend, _fallback
from nsteplab.replay import ReplayBuffer

N_ACTIONS = 3


def build_cases(mod, hidden: int, n: int, rng: np.random.Generator) -> dict:
    theta = rng.normal(0.0, 0.05, 3 * hidden + N_ACTIONS * hidden + N_ACTIONS)
    states = rng.uniform(-1.0, 1.0, (32, 2))
    actions = rng.integers(0, N_ACTIONS, 32)
    targets = rng.normal(-50.0, 10.0, 32)
    grad = np.zeros_like(theta)
    q32, q1 = np.empty((32, N_ACTIONS)), np.empty((1, N_ACTIONS))
    g, s = np.zeros_like(theta), np.zeros_like(theta)
    scratch = theta.copy()

    buf = ReplayBuffer(20000, N_ACTIONS)
    for k in range(20000):
        first = k % 300 == 0
        buf.append(*rng.uniform(-1, 1, 2), int(rng.integers(3)), 0.0 if first else -1.0, False, first,
                   0.0 if first else 0.9 + 0.1 / 3, 0.0 if first else 0.5)
    cand = rng.integers(0, buf.count, 64)
    idx = np.zeros((32, n + 1), dtype=np.int64)
    length = np.zeros(32, dtype=np.int64)
    term = np.zeros(32, dtype=np.uint8)
    mod.find_segments(cand, buf.count, buf.oldest, buf.capacity, n, buf.terminal, buf.first_step,
                      idx, length, term, 0)
    out = np.empty(32)
    qcache = np.zeros((buf.capacity, N_ACTIONS))
    qgen = np.full(buf.capacity, -1, dtype=np.int64)
    gen = [0]

    def targets_cold():
        # a fresh generation forces every target-network evaluation
        gen[0] += 1
        mod.batch_targets(idx, length, term, 32, buf.states, buf.actions, buf.rewards, buf.probs,
                          buf.sigmas, theta, hidden, N_ACTIONS, qcache, qgen, gen[0], _backend.TREE_BACKUP,
                          False, 1.0, 1.0, 0.1, None, out)

    return {
        "forward B=1": lambda: mod.forward(theta, hidden, N_ACTIONS, states[:1], q1),
        "forward B=32": lambda: mod.forward(theta, hidden, N_ACTIONS, states, q32),
        "loss_grad B=32": lambda: mod.loss_grad(theta, hidden, N_ACTIONS, states, actions, targets, grad),
        "rmsprop": lambda: mod.rmsprop(scratch, g, s, grad, 1e-9, 0.95, 0.95, 0.01),
        "find_segments 64": lambda: mod.find_segments(cand, buf.count, buf.oldest, buf.capacity, n,
                                                      buf.terminal, buf.first_step, idx, length, term, 0),
        f"batch_targets TB n={n} (cold cache)": targets_cold,
    }


def best_time(fn, repeat: int) -> float:
    timer = timeit.Timer(fn)
    loops, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=loops)) / loops


def main(argv: list[str] | None = None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=7)
    p.add_argument("--hidden", type=int, default=1000)
    p.add_argument("--n", type=int, default=20)
    args = p.parse_args(argv)
    try:
        from nsteplab import _core
    except ImportError:
        raise SystemExit("compiled extension not built; run `pip install --no-build-isolation -e .`")

    results = {}
    for name, mod in (("compiled", _core), ("python", _fallback)):
        cases = build_cases(mod, args.hidden, args.n, np.random.default_rng(0))
        results[name] = {k: best_time(fn, args.repeat) for k, fn in cases.items()}

    print(f"H={args.hidden}, active backend: {_backend.BACKEND}")
    print(f"{'kernel':<36} {'compiled':>12} {'python':>12} {'speedup':>8}")
    for k in results["compiled"]:
        c, py = results["compiled"][k], results["python"][k]
        print(f"{k:<36} {c * 1e6:>10.1f}us {py * 1e6:>10.1f}us {py / c:>7.1f}x")


if __name__ == "__main__":
    main()
