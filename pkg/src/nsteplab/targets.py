"""n-step update targets: Sarsa, Tree Backup, Q(sigma), Retrace, Q-learning.

Each target is evaluated by the backward recursion

    G_{l-1} = R_l + gamma * X_l(G_l)

over the ``m`` reward steps of a :class:`Segment`, where ``X_l`` is the
family-specific bracket applied at state ``S_l`` (entry ``l``) and the base
case is ``Q(S_m, A_m)`` (``max_a Q(S_m, a)`` for Q-learning). At a terminal
entry the bracket is zero.

Action values ``Q`` come from the target network. The policy ``pi`` used for
expectations and importance ratios is epsilon-greedy over those values unless
a separate policy network is supplied.
"""
from __future__ import annotations

import enum
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from nsteplab import _backend
from nsteplab._backend import kernels
from nsteplab.errors import ContractError, DegenerateRatioError, NonFiniteError
from nsteplab.valuenet import NetParams, forward_batch


class Family(str, enum.Enum):
    SARSA = "sarsa"
    TREE_BACKUP = "treebackup"
    QSIGMA = "qsigma"
    RETRACE = "retrace"
    QLEARNING = "qlearning"


_FAMILY_CODE = {
    Family.SARSA: _backend.SARSA,
    Family.TREE_BACKUP: _backend.TREE_BACKUP,
    Family.QSIGMA: _backend.QSIGMA,
    Family.RETRACE: _backend.RETRACE,
    Family.QLEARNING: _backend.QLEARNING,
}


@dataclass(frozen=True)
class AlgorithmSpec:
    """Which target to build and how.

    ``sigma_mode`` is ``"fixed"`` (constant ``sigma``) or ``"decaying"``
    (starts at ``sigma`` and drops by ``sigma_decrement`` per episode).
    ``off_policy_correction`` only changes Sarsa and Q(sigma).
    """

    family: Family
    n: int = 1
    off_policy_correction: bool = False
    sigma_mode: str = "fixed"
    sigma: float = 1.0
    sigma_decrement: float = 0.002
    cutoff_k: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if int(self.n) != self.n or self.n < 1:
            raise ContractError(f"backup length n must be a positive integer, got {self.n!r}")
        if not 0.0 <= self.sigma <= 1.0:
            raise ContractError(f"sigma must lie in [0, 1], got {self.sigma}")
        if self.sigma_mode not in ("fixed", "decaying"):
            raise ContractError(f"unknown sigma_mode {self.sigma_mode!r}")
        if self.sigma_decrement < 0.0:
            raise ContractError("sigma_decrement must be non-negative")
        if not self.cutoff_k > 0.0:
            raise ContractError(f"cutoff_k must be positive, got {self.cutoff_k}")

    @property
    def corrected(self) -> bool:
        """Whether Sarsa/Q(sigma) apply importance ratios."""
        return self.off_policy_correction and self.family in (Family.SARSA, Family.QSIGMA)


@dataclass(frozen=True)
class PolicyDist:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if np.any(probs < 0.0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ContractError(f"not a probability vector: {probs}")
        object.__setattr__(self, "probs", probs)

    def __getitem__(self, a):
        return self.probs[a]


def epsilon_greedy_probs(q, epsilon: float) -> PolicyDist:
    """epsilon/|A| everywhere plus 1-epsilon on the first maximiser of ``q``."""
    if not 0.0 <= epsilon <= 1.0:
        raise ContractError(f"epsilon must lie in [0, 1], got {epsilon}")
    q = np.asarray(q, dtype=np.float64)
    probs = np.full(q.shape[0], epsilon / q.shape[0])
    probs[int(np.argmax(q))] += 1.0 - epsilon
    return PolicyDist(probs)


@dataclass
class Segment:
    """Entries ``t .. t+m`` of one episode plus target-network data.

    ``q_values[l]`` and ``policies[l]`` belong to the state of ``entries[l]``;
    index 0 is never read. They may be ``None`` for a terminal last entry.
    """

    entries: list
    ends_terminal: bool
    q_values: list | None = None
    policies: list | None = None

    @property
    def m(self) -> int:
        return len(self.entries) - 1

    @property
    def bootstrap_q(self):
        return None if self.ends_terminal or self.q_values is None else self.q_values[-1]

    @property
    def bootstrap_policy(self):
        return None if self.ends_terminal or self.policies is None else self.policies[-1]

    def check(self, needs_q: bool, needs_policy: bool) -> None:
        """Validate shape and presence of the per-step data a family reads."""
        if self.m < 1:
            raise ContractError("segment has no reward steps")
        if not self.ends_terminal and self.bootstrap_q is None:
            raise ContractError("non-terminal segment lacks bootstrap action values")
        last = self.m if not self.ends_terminal else self.m - 1
        for ell in range(1, last + 1):
            if needs_q and (self.q_values is None or self.q_values[ell] is None):
                raise ContractError(f"missing action values at step {ell}")
            if needs_policy and (self.policies is None or self.policies[ell] is None):
                raise ContractError(f"missing policy at step {ell}")


def _ratio(seg: Segment, ell: int) -> float:
    e = seg.entries[ell]
    if e.stored_prob < _backend.MIN_STORED_PROB:
        raise DegenerateRatioError(
            f"stored behaviour probability {e.stored_prob!r} at step {ell} is too small for a ratio"
        )
    return seg.policies[ell][e.action] / e.stored_prob


def _others(pi: PolicyDist, q, taken: int) -> float:
    """sum over a != taken of pi(a) q(a), in index order."""
    total = 0.0
    for a in range(len(q)):
        if a != taken:
            total += pi[a] * q[a]
    return total


def _recurse(seg: Segment, gamma: float, base: float, bracket) -> float:
    g = base
    for ell in range(seg.m, 0, -1):
        if ell == seg.m and seg.ends_terminal:
            x = 0.0
        else:
            x = bracket(ell, g)
        g = seg.entries[ell].reward + gamma * x
    return float(g)


def _base_q(seg: Segment) -> float:
    if seg.ends_terminal:
        return 0.0
    return float(seg.q_values[-1][seg.entries[-1].action])


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma <= 1.0:
        raise ContractError(f"gamma must lie in [0, 1], got {gamma}")


def sarsa_target(seg: Segment, gamma: float, spec: AlgorithmSpec) -> float:
    _check_gamma(gamma)
    corrected = spec.off_policy_correction
    seg.check(needs_q=False, needs_policy=corrected)
    if corrected:
        return _recurse(seg, gamma, _base_q(seg), lambda ell, g: _ratio(seg, ell) * g)
    return _recurse(seg, gamma, _base_q(seg), lambda ell, g: g)


def tree_backup_target(seg: Segment, gamma: float, spec: AlgorithmSpec) -> float:
    _check_gamma(gamma)
    seg.check(needs_q=True, needs_policy=True)

    def bracket(ell, g):
        pi, q, a = seg.policies[ell], seg.q_values[ell], seg.entries[ell].action
        return pi[a] * g + _others(pi, q, a)

    return _recurse(seg, gamma, _base_q(seg), bracket)


def qsigma_target(seg: Segment, gamma: float, spec: AlgorithmSpec) -> float:
    """sigma at each level is the sigma stored with that transition."""
    _check_gamma(gamma)
    seg.check(needs_q=True, needs_policy=True)
    corrected = spec.off_policy_correction

    def bracket(ell, g):
        e = seg.entries[ell]
        pi, q, a, sig = seg.policies[ell], seg.q_values[ell], e.action, e.stored_sigma
        w = sig * _ratio(seg, ell) if corrected else sig
        return (w + (1.0 - sig) * pi[a]) * g + (1.0 - sig) * _others(pi, q, a)

    return _recurse(seg, gamma, _base_q(seg), bracket)


TraceCoefficient = Callable[[PolicyDist, float, int], float]


def retrace_target(seg: Segment, gamma: float, spec: AlgorithmSpec,
                   coefficient: TraceCoefficient | None = None) -> float:
    """``coefficient(pi, stored_prob, action)`` defaults to min(k, rho)."""
    _check_gamma(gamma)
    seg.check(needs_q=True, needs_policy=True)
    k = spec.cutoff_k

    def bracket(ell, g):
        e = seg.entries[ell]
        pi, q, a = seg.policies[ell], seg.q_values[ell], e.action
        if coefficient is None:
            c = min(k, _ratio(seg, ell))
            assert c <= k
        else:
            c = coefficient(pi, e.stored_prob, a)
        expected = 0.0
        for b in range(len(q)):
            expected += pi[b] * q[b]
        return c * g + expected - c * q[a]

    return _recurse(seg, gamma, _base_q(seg), bracket)


def qlearning_target(seg: Segment, gamma: float, spec: AlgorithmSpec) -> float:
    _check_gamma(gamma)
    seg.check(needs_q=False, needs_policy=False)
    base = 0.0 if seg.ends_terminal else float(np.max(seg.q_values[-1]))
    return _recurse(seg, gamma, base, lambda ell, g: g)


_DISPATCH = {
    Family.SARSA: sarsa_target,
    Family.TREE_BACKUP: tree_backup_target,
    Family.QSIGMA: qsigma_target,
    Family.RETRACE: retrace_target,
    Family.QLEARNING: qlearning_target,
}


def segment_target(seg: Segment, gamma: float, spec: AlgorithmSpec) -> float:
    return _DISPATCH[spec.family](seg, gamma, spec)


def attach_values(seg: Segment, target_net: NetParams, epsilon: float,
                  policy_net: NetParams | None = None) -> Segment:
    """Fill ``q_values``/``policies`` for entries 1..m from the networks."""
    m = seg.m
    live = range(1, m + 1) if not seg.ends_terminal else range(1, m)
    q_values: list = [None] * (m + 1)
    policies: list = [None] * (m + 1)
    idx = list(live)
    if idx:
        states = np.array([seg.entries[i].state for i in idx], dtype=np.float64)
        qs = forward_batch(target_net, states)
        pis = qs if policy_net is None else forward_batch(policy_net, states)
        for row, i in enumerate(idx):
            q_values[i] = qs[row]
            policies[i] = epsilon_greedy_probs(pis[row], epsilon)
    seg.q_values = q_values
    seg.policies = policies
    return seg


def compute_targets(segments: Sequence[Segment], spec: AlgorithmSpec, gamma: float,
                    target_net: NetParams, epsilon: float,
                    policy_net: NetParams | None = None) -> np.ndarray:
    out = np.empty(len(segments))
    for i, seg in enumerate(segments):
        attach_values(seg, target_net, epsilon, policy_net)
        try:
            out[i] = segment_target(seg, gamma, spec)
        except (ContractError, DegenerateRatioError) as exc:
            raise type(exc)(f"segment {i}: {exc}") from exc
    return out


class TargetCache:
    """Per-slot memo of target-network action values.

    Entries are valid for one target-network generation; bump the generation
    on every sync and invalidate a slot whenever it is overwritten.
    """

    def __init__(self, capacity: int, n_actions: int):
        self.values = np.zeros((capacity, n_actions))
        self.generation_of = np.full(capacity, -1, dtype=np.int64)
        self.generation = 0

    def new_generation(self) -> None:
        self.generation += 1

    def invalidate(self, slot: int) -> None:
        self.generation_of[slot] = -1


def buffer_targets(buffer, seg_idx, seg_len, seg_term, spec: AlgorithmSpec,
                   gamma: float, target_net: NetParams, epsilon: float,
                   cache: TargetCache, policy_net: NetParams | None = None,
                   out: np.ndarray | None = None) -> np.ndarray:
    """Targets for segments given as slot-index rows of a ``ReplayBuffer``.

    Equivalent to :func:`compute_targets` on the same segments; this is the
    path the trainer uses.
    """
    nseg = seg_len.shape[0]
    if out is None:
        out = np.empty(nseg)
    bad = kernels.batch_targets(
        seg_idx, seg_len, seg_term, nseg,
        buffer.states, buffer.actions, buffer.rewards, buffer.probs, buffer.sigmas,
        target_net.theta, target_net.hidden, target_net.n_actions,
        cache.values, cache.generation_of, cache.generation,
        _FAMILY_CODE[spec.family], spec.corrected, float(gamma), float(spec.cutoff_k),
        float(epsilon), None if policy_net is None else policy_net.theta, out,
    )
    if bad >= 0:
        raise DegenerateRatioError(f"segment {bad}: stored behaviour probability too small for a ratio")
    if not np.all(np.isfinite(out[:nseg])):
        raise NonFiniteError("non-finite n-step target")
    return out
