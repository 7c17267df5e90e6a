"""Circular experience buffer with per-entry behaviour probability and sigma.

Entry ``k`` holds ``(S_k, A_k, R_k, terminal_k, first_step_k, mu_k(A_k|S_k),
sigma_k)`` where ``R_k`` is the reward that led *into* ``S_k``. Reward,
probability and sigma are zero on the first entry of an episode. A terminal
entry closes its episode and carries sentinel zeros for action, probability
and sigma.

Segments start at a non-terminal entry whose successor continues the same
episode and run forward for up to ``n`` reward steps. They stop early at a
terminal entry, at the last entry of a timed-out episode, or at the newest
entry in the buffer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nsteplab._backend import kernels
from nsteplab.errors import ContractError, NotReadyError
from nsteplab.targets import Segment


@dataclass(frozen=True)
class Transition:
    state: tuple[float, float]
    action: int
    reward: float
    terminal: bool = False
    first_step: bool = False
    stored_prob: float = 0.0
    stored_sigma: float = 0.0


class ReplayBuffer:
    def __init__(self, capacity: int = 20000, n_actions: int = 3):
        if capacity < 2:
            raise ContractError("capacity must be at least 2")
        self.capacity = capacity
        self.n_actions = n_actions
        self.states = np.zeros((capacity, 2))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=np.uint8)
        self.first_step = np.zeros(capacity, dtype=np.uint8)
        self.probs = np.zeros(capacity)
        self.sigmas = np.zeros(capacity)
        self.write_index = 0
        self.count = 0

    def __len__(self) -> int:
        return self.count

    @property
    def oldest(self) -> int:
        return (self.write_index - self.count) % self.capacity

    def append(self, position: float, velocity: float, action: int, reward: float,
               terminal: bool, first_step: bool, prob: float, sigma: float) -> int:
        """Write one entry; returns the slot it landed in."""
        if first_step and (reward != 0.0 or prob != 0.0 or sigma != 0.0):
            raise ContractError("first entry of an episode must have zero reward, probability and sigma")
        if terminal and (action != 0 or prob != 0.0 or sigma != 0.0):
            raise ContractError("terminal entries carry zero action, probability and sigma")
        if not 0 <= action < self.n_actions:
            raise ContractError(f"action {action} out of range")
        if not (0.0 <= prob <= 1.0 and 0.0 <= sigma <= 1.0):
            raise ContractError("probability and sigma must lie in [0, 1]")
        slot = self.write_index
        self.states[slot, 0] = position
        self.states[slot, 1] = velocity
        self.actions[slot] = action
        self.rewards[slot] = reward
        self.terminal[slot] = terminal
        self.first_step[slot] = first_step
        self.probs[slot] = prob
        self.sigmas[slot] = sigma
        self.write_index = (slot + 1) % self.capacity
        if self.count < self.capacity:
            self.count += 1
        return slot

    def store(self, t: Transition) -> int:
        return self.append(float(t.state[0]), float(t.state[1]), int(t.action), float(t.reward),
                           bool(t.terminal), bool(t.first_step), float(t.stored_prob),
                           float(t.stored_sigma))

    def transition(self, slot: int) -> Transition:
        return Transition(
            state=(float(self.states[slot, 0]), float(self.states[slot, 1])),
            action=int(self.actions[slot]),
            reward=float(self.rewards[slot]),
            terminal=bool(self.terminal[slot]),
            first_step=bool(self.first_step[slot]),
            stored_prob=float(self.probs[slot]),
            stored_sigma=float(self.sigmas[slot]),
        )

    def sampleable(self) -> np.ndarray:
        """Logical positions (0 = oldest) that can start a segment."""
        pos = np.arange(self.count - 1)
        slots = (self.oldest + pos) % self.capacity
        nxt = (slots + 1) % self.capacity
        ok = (self.terminal[slots] == 0) & (self.first_step[nxt] == 0)
        return pos[ok]

    def sample_indices(self, batch_size: int, n: int, rng: np.random.Generator):
        """Draw ``batch_size`` segment starts uniformly (with replacement).

        Returns ``(slots, lengths, ends_terminal)`` where row ``b`` of ``slots``
        lists the buffer slots of entries ``0..lengths[b]`` of segment ``b``.
        """
        if n < 1:
            raise ContractError("n must be >= 1")
        seg_idx = np.zeros((batch_size, n + 1), dtype=np.int64)
        seg_len = np.zeros(batch_size, dtype=np.int64)
        seg_term = np.zeros(batch_size, dtype=np.uint8)
        if self.count < 2:
            raise NotReadyError("replay buffer holds fewer than two entries")
        filled = 0
        oldest = self.oldest
        while filled < batch_size:
            cand = rng.integers(0, self.count, size=batch_size - filled)
            before = filled
            filled = kernels.find_segments(
                cand, self.count, oldest, self.capacity, n, self.terminal, self.first_step,
                seg_idx, seg_len, seg_term, filled,
            )
            if filled == before and self.sampleable().size == 0:
                raise NotReadyError("no entry can start a segment yet")
        return seg_idx, seg_len, seg_term

    def segments_from_indices(self, seg_idx, seg_len, seg_term) -> list[Segment]:
        return [
            Segment([self.transition(int(s)) for s in seg_idx[b, : seg_len[b] + 1]], bool(seg_term[b]))
            for b in range(seg_len.shape[0])
        ]

    def sample_segments(self, batch_size: int, n: int, rng: np.random.Generator) -> list[Segment]:
        return self.segments_from_indices(*self.sample_indices(batch_size, n, rng))
