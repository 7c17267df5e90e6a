import numpy as np
import pytest

from nsteplab import trainer
from nsteplab.errors import ContractError
from nsteplab.replay import ReplayBuffer
from nsteplab.targets import AlgorithmSpec, Family
from nsteplab.trainer import ExperimentConfig, run, sigma_schedule


def small(family=Family.SARSA, n=1, **kw):
    base = dict(hidden_units=8, episodes=3, timeout_steps=200, warmup_actions=50)
    base.update(kw)
    return ExperimentConfig(algorithm=AlgorithmSpec(family, n=n), **base)


class CapturingBuffer(ReplayBuffer):
    last = None

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        CapturingBuffer.last = self


def test_defaults():
    c = ExperimentConfig(algorithm=AlgorithmSpec(Family.SARSA))
    assert (c.epsilon, c.gamma, c.episodes, c.timeout_steps, c.hidden_units) == (0.1, 1.0, 500, 5000, 1000)
    assert (c.alpha, c.grad_momentum, c.sq_grad_momentum, c.min_sq_grad) == (0.00025, 0.95, 0.95, 0.01)
    assert (c.buffer_capacity, c.warmup_actions, c.batch_size, c.target_sync_period) == (20000, 1000, 32, 1000)
    assert c.policy_source == "target_net"


@pytest.mark.parametrize("kw", [dict(episodes=0), dict(timeout_steps=0), dict(epsilon=1.5),
                                dict(policy_source="other"), dict(batch_size=0)])
def test_config_validation(kw):
    with pytest.raises(ContractError):
        ExperimentConfig(algorithm=AlgorithmSpec(Family.SARSA), **kw)


def test_sigma_schedule_examples():
    dec = AlgorithmSpec(Family.QSIGMA, sigma_mode="decaying", sigma=1.0)
    assert sigma_schedule(dec, 0) == 1.0
    assert sigma_schedule(dec, 100) == pytest.approx(0.8, abs=1e-12)
    assert sigma_schedule(dec, 600) == 0.0
    assert sigma_schedule(AlgorithmSpec(Family.QSIGMA, sigma=0.5), 300) == 0.5
    with pytest.raises(ContractError):
        sigma_schedule(dec, -1)


def test_warmup_has_no_updates():
    # 5 episodes of at most 101 decisions stay inside a 1000-action warm-up
    res = run(small(episodes=5, timeout_steps=100, warmup_actions=1000))
    assert res.decisions <= 505
    assert res.training_updates == 0 and res.target_syncs == 0


def test_counting_invariants():
    res = run(small(Family.TREE_BACKUP, n=4, episodes=4, timeout_steps=300))
    terminals = sum(not e.timed_out for e in res.episodes)
    assert res.training_updates == res.decisions - 50
    assert res.stored_entries == res.decisions + terminals
    assert len(res.episodes) == 4
    for e in res.episodes:
        assert e.episode_return == -e.steps
        assert not e.timed_out or e.steps == 300


def test_target_sync_count():
    # timeout after one step: every episode contributes two decisions and cannot terminate
    res = run(small(episodes=1255, timeout_steps=1, warmup_actions=10, target_sync_period=1000))
    assert res.decisions == 2510 and res.training_updates == 2500
    assert res.target_syncs == 2


def test_timeout_record_and_final_entry(monkeypatch):
    monkeypatch.setattr(trainer, "ReplayBuffer", CapturingBuffer)
    res = run(small(episodes=1, timeout_steps=40, warmup_actions=10))
    rec = res.episodes[0]
    assert rec.steps == 40 and rec.timed_out and rec.episode_return == -40.0
    buf = CapturingBuffer.last
    last = buf.transition((buf.write_index - 1) % buf.capacity)
    assert not last.terminal and not last.first_step
    assert last.reward == -1.0 and last.stored_prob > 0.0


def test_determinism():
    cfg = small(Family.RETRACE, n=3, episodes=3, seed=99)
    a, b = run(cfg), run(cfg)
    assert a.episodes == b.episodes
    assert (a.decisions, a.training_updates) == (b.decisions, b.training_updates)


def test_seed_changes_init():
    a = trainer.make_params(small(seed=1))
    b = trainer.make_params(small(seed=2))
    assert not np.array_equal(a.theta, b.theta)


def test_make_params_matches_run_init():
    cfg = small(seed=5)
    p = trainer.make_params(cfg)
    q = trainer.init_params(8, np.random.default_rng(5), 3)
    assert np.array_equal(p.theta, q.theta)


@pytest.mark.slow
def test_qlearning_learning_smoke():
    wins = 0
    for seed in range(10):
        cfg = ExperimentConfig(algorithm=AlgorithmSpec(Family.QLEARNING, n=1),
                               hidden_units=128, episodes=150, seed=seed)
        r = run(cfg).returns
        wins += r[-20:].mean() > r[:20].mean()
    assert wins >= 8
