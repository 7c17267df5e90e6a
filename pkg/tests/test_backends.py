"""The compiled kernels and the numpy fallback must agree."""
import numpy as np
import pytest

from nsteplab import _backend, _fallback
from nsteplab.replay import ReplayBuffer

core = pytest.importorskip("nsteplab._core")

H, A = 24, 3


def random_theta(rng):
    return rng.normal(0, 0.5, 3 * H + A * H + A)


def test_compiled_backend_selected():
    assert _backend.BACKEND == "compiled"


def test_forward_parity():
    rng = np.random.default_rng(0)
    theta = random_theta(rng)
    states = rng.uniform(-1, 1, (40, 2))
    a, b = np.empty((40, A)), np.empty((40, A))
    core.forward(theta, H, A, states, a)
    _fallback.forward(theta, H, A, states, b)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_loss_grad_parity():
    rng = np.random.default_rng(1)
    theta = random_theta(rng)
    states = rng.uniform(-1, 1, (32, 2))
    actions = rng.integers(0, A, 32)
    targets = rng.normal(0, 3, 32)
    ga, gb = np.empty_like(theta), np.empty_like(theta)
    la = core.loss_grad(theta, H, A, states, actions, targets, ga)
    lb = _fallback.loss_grad(theta, H, A, states, actions, targets, gb)
    assert la == pytest.approx(lb, rel=1e-12)
    np.testing.assert_allclose(ga, gb, rtol=1e-10, atol=1e-12)


def test_rmsprop_parity():
    rng = np.random.default_rng(2)
    theta = random_theta(rng)
    grad = rng.normal(0, 1, theta.size)
    state = [(theta.copy(), np.zeros_like(theta), np.zeros_like(theta)) for _ in range(2)]
    for _ in range(5):
        core.rmsprop(*state[0], grad, 0.00025, 0.95, 0.95, 0.01)
        _fallback.rmsprop(*state[1], grad, 0.00025, 0.95, 0.95, 0.01)
    for x, y in zip(*state):
        np.testing.assert_allclose(x, y, rtol=1e-13, atol=1e-16)


def filled_buffer(rng, cap=64, entries=150):
    buf = ReplayBuffer(cap, A)
    first = True
    for _ in range(entries):
        x, v = rng.uniform(-1, 1, 2)
        if first:
            buf.append(x, v, int(rng.integers(A)), 0.0, False, True, 0.0, 0.0)
            first = False
        elif rng.random() < 0.1:
            buf.append(x, v, 0, -1.0, True, False, 0.0, 0.0)
            first = True
        else:
            buf.append(x, v, int(rng.integers(A)), -1.0, False, False,
                       float(rng.choice([0.9 + 0.1 / 3, 0.1 / 3])), float(rng.random()))
            first = rng.random() < 0.05
    return buf


def segments(mod, buf, cand, n):
    idx = np.zeros((len(cand), n + 1), dtype=np.int64)
    length = np.zeros(len(cand), dtype=np.int64)
    term = np.zeros(len(cand), dtype=np.uint8)
    filled = mod.find_segments(cand, buf.count, buf.oldest, buf.capacity, n, buf.terminal,
                               buf.first_step, idx, length, term, 0)
    return idx[:filled], length[:filled], term[:filled]


@pytest.mark.parametrize("n", [1, 3, 7])
def test_find_segments_parity(n):
    rng = np.random.default_rng(n)
    buf = filled_buffer(rng)
    cand = rng.integers(0, buf.count, 200)
    for x, y in zip(segments(core, buf, cand, n), segments(_fallback, buf, cand, n)):
        assert np.array_equal(x, y)


@pytest.mark.parametrize("family", [_backend.SARSA, _backend.TREE_BACKUP, _backend.QSIGMA,
                                    _backend.RETRACE, _backend.QLEARNING])
@pytest.mark.parametrize("off_policy,online", [(False, False), (True, False), (True, True)])
def test_batch_targets_parity(family, off_policy, online):
    rng = np.random.default_rng(family * 10 + off_policy)
    buf = filled_buffer(rng)
    n = 5
    idx, length, term = segments(core, buf, rng.integers(0, buf.count, 64), n)
    theta_t = random_theta(rng)
    theta_pi = random_theta(rng) if online else None
    outs = []
    for mod in (core, _fallback):
        qcache = np.zeros((buf.capacity, A))
        qgen = np.full(buf.capacity, -1, dtype=np.int64)
        out = np.empty(len(idx))
        bad = mod.batch_targets(idx, length, term, len(idx), buf.states, buf.actions, buf.rewards,
                                buf.probs, buf.sigmas, theta_t, H, A, qcache, qgen, 0, family,
                                off_policy, 0.9, 1.0, 0.1, theta_pi, out)
        assert bad == -1
        outs.append(out)
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-12, atol=1e-12)
