"""Agent loop: act epsilon-greedily, store, sample n-step segments, descend.

One training update follows every stored decision after the warm-up phase.
Timed-out episodes end with a non-terminal entry (with a freshly chosen
action) so that truncated targets can still bootstrap from ``Q(S, A)``.
"""
from __future__ import annotations

import math
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field

import numpy as np

from nsteplab import env
from nsteplab._backend import kernels
from nsteplab.errors import ContractError, NonFiniteError, NotReadyError
from nsteplab.replay import ReplayBuffer
from nsteplab.targets import AlgorithmSpec, Family, TargetCache, buffer_targets
from nsteplab.valuenet import NetParams, OptState, init_params

POLICY_SOURCES = ("target_net", "online_net")


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: AlgorithmSpec
    epsilon: float = 0.1
    gamma: float = 1.0
    episodes: int = 500
    timeout_steps: int = 5000
    hidden_units: int = 1000
    alpha: float = 0.00025
    grad_momentum: float = 0.95
    sq_grad_momentum: float = 0.95
    min_sq_grad: float = 0.01
    buffer_capacity: int = 20000
    warmup_actions: int = 1000
    batch_size: int = 32
    target_sync_period: int = 1000
    seed: int = 0
    policy_source: str = "target_net"
    normalize_inputs: bool = True

    def __post_init__(self):
        if self.episodes < 1 or self.timeout_steps < 1:
            raise ContractError("episodes and timeout_steps must be >= 1")
        if not 0.0 <= self.epsilon <= 1.0 or not 0.0 <= self.gamma <= 1.0:
            raise ContractError("epsilon and gamma must lie in [0, 1]")
        if min(self.hidden_units, self.buffer_capacity, self.batch_size, self.target_sync_period) < 1:
            raise ContractError("sizes and periods must be positive")
        if self.buffer_capacity < 2 or self.warmup_actions < 0 or self.alpha <= 0.0:
            raise ContractError("invalid buffer capacity, warm-up length or learning rate")
        if self.policy_source not in POLICY_SOURCES:
            raise ContractError(f"policy_source must be one of {POLICY_SOURCES}")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["algorithm"]["family"] = self.algorithm.family.value
        return d


@dataclass(frozen=True)
class EpisodeRecord:
    episode_index: int
    episode_return: float
    steps: int
    timed_out: bool


@dataclass
class RunResult:
    config: ExperimentConfig
    seed: int
    episodes: list[EpisodeRecord] = field(default_factory=list)
    wall_seconds: float = 0.0
    decisions: int = 0
    training_updates: int = 0
    target_syncs: int = 0
    stored_entries: int = 0

    @property
    def returns(self) -> np.ndarray:
        return np.array([e.episode_return for e in self.episodes])


def sigma_schedule(spec: AlgorithmSpec, episode_index: int) -> float:
    if episode_index < 0:
        raise ContractError("episode_index must be >= 0")
    if spec.sigma_mode == "fixed":
        return spec.sigma
    return max(0.0, spec.sigma - spec.sigma_decrement * episode_index)


def run(config: ExperimentConfig,
        on_episode: Callable[[EpisodeRecord], None] | None = None) -> RunResult:
    """Train one agent for ``config.episodes`` episodes and record returns."""
    started = time.perf_counter()
    spec = config.algorithm
    n_actions = env.N_ACTIONS
    hidden = config.hidden_units
    eps = config.epsilon
    rng = np.random.default_rng(config.seed)

    online = init_params(hidden, rng, n_actions)
    target = online.copy()
    opt = OptState.for_params(online, alpha=config.alpha, beta_g=config.grad_momentum,
                              beta_s=config.sq_grad_momentum, min_sq=config.min_sq_grad)
    buf = ReplayBuffer(config.buffer_capacity, n_actions)
    cache = TargetCache(config.buffer_capacity, n_actions)
    policy_net = online if config.policy_source == "online_net" else None
    # Q-learning and uncorrected Sarsa never read a policy
    if spec.family == Family.QLEARNING or (spec.family == Family.SARSA and not spec.corrected):
        policy_net = None

    grad = np.zeros_like(online.theta)
    targets = np.empty(config.batch_size)
    state_buf = np.empty((1, 2))
    q_buf = np.empty((1, n_actions))
    norm = config.normalize_inputs

    def observe(x: float, v: float) -> tuple[float, float]:
        return env.observation(x, v, norm)

    uniform_p = 1.0 / n_actions
    greedy_p = eps / n_actions + (1.0 - eps)
    explore_p = eps / n_actions

    result = RunResult(config=config, seed=config.seed)
    decisions = updates = syncs = stored = 0

    def train_step() -> None:
        nonlocal updates, syncs
        try:
            seg_idx, seg_len, seg_term = buf.sample_indices(config.batch_size, spec.n, rng)
        except NotReadyError:
            return
        buffer_targets(buf, seg_idx, seg_len, seg_term, spec, config.gamma, target, eps,
                       cache, policy_net, out=targets)
        start = seg_idx[:, 0]
        loss = kernels.loss_grad(online.theta, hidden, n_actions, buf.states[start],
                                 buf.actions[start], targets, grad)
        if not math.isfinite(loss):
            raise NonFiniteError(
                f"non-finite loss {loss} at update {updates} (episode {len(result.episodes)}, "
                f"targets range [{targets.min()}, {targets.max()}])"
            )
        kernels.rmsprop(online.theta, opt.g, opt.s, grad, opt.alpha, opt.beta_g, opt.beta_s, opt.min_sq)
        updates += 1
        if updates % config.target_sync_period == 0:
            target.theta[:] = online.theta
            cache.new_generation()
            syncs += 1

    for episode in range(config.episodes):
        sigma = sigma_schedule(spec, episode)
        start_state = env.reset(rng)
        x, v = start_state.position, start_state.velocity
        obs = observe(x, v)
        first = True
        reward_in = 0.0
        steps = 0
        timed_out = False
        while True:
            if decisions < config.warmup_actions:
                a = int(rng.integers(n_actions))
                p = uniform_p
            else:
                state_buf[0, 0], state_buf[0, 1] = obs
                kernels.forward(online.theta, hidden, n_actions, state_buf, q_buf)
                greedy = int(q_buf[0].argmax())
                if rng.random() < eps:
                    a = int(rng.integers(n_actions))
                else:
                    a = greedy
                p = greedy_p if a == greedy else explore_p
            if first:
                slot = buf.append(*obs, a, 0.0, False, True, 0.0, 0.0)
            else:
                slot = buf.append(*obs, a, reward_in, False, False, p, sigma)
            cache.invalidate(slot)
            stored += 1
            decisions += 1
            if decisions > config.warmup_actions:
                train_step()
            if steps == config.timeout_steps:
                timed_out = True
                break
            x, v, terminal = env.dynamics(x, v, a)
            obs = observe(x, v)
            steps += 1
            reward_in = -1.0
            first = False
            if terminal:
                slot = buf.append(*obs, 0, reward_in, True, False, 0.0, 0.0)
                cache.invalidate(slot)
                stored += 1
                break
        record = EpisodeRecord(episode, -float(steps), steps, timed_out)
        result.episodes.append(record)
        if on_episode is not None:
            on_episode(record)

    result.wall_seconds = time.perf_counter() - started
    result.decisions = decisions
    result.training_updates = updates
    result.target_syncs = syncs
    result.stored_entries = stored
    return result


def make_params(config: ExperimentConfig) -> NetParams:
    """Initial online parameters exactly as :func:`run` draws them."""
    return init_params(config.hidden_units, np.random.default_rng(config.seed), env.N_ACTIONS)
