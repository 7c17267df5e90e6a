"""Mountain-car dynamics (textbook version) with episodic reset.

Actions are throttle indices ``0, 1, 2`` meaning reverse, coast and forward.
Every step costs ``-1`` so an undiscounted return equals minus the episode
length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nsteplab.errors import ContractError

MIN_POSITION = -1.2
MAX_POSITION = 0.6
MAX_SPEED = 0.07
GOAL_POSITION = 0.5
FORCE = 0.001
GRAVITY = 0.0025
START_LOW = -0.6
START_HIGH = -0.4
N_ACTIONS = 3


@dataclass(frozen=True)
class EnvState:
    position: float
    velocity: float

    def as_array(self) -> np.ndarray:
        return np.array([self.position, self.velocity], dtype=np.float64)


@dataclass(frozen=True)
class StepOutcome:
    next: EnvState
    reward: float
    terminal: bool


def reset(rng: np.random.Generator) -> EnvState:
    """Start state: position uniform in [-0.6, -0.4), zero velocity."""
    return EnvState(START_LOW + (START_HIGH - START_LOW) * rng.random(), 0.0)


def dynamics(position: float, velocity: float, action: int) -> tuple[float, float, bool]:
    """Scalar form of :func:`step` used by the training loop."""
    if action != 0 and action != 1 and action != 2:
        raise ContractError(f"action must be 0, 1 or 2, got {action!r}")
    v = velocity + FORCE * (action - 1) - GRAVITY * math.cos(3.0 * position)
    if v < -MAX_SPEED:
        v = -MAX_SPEED
    elif v > MAX_SPEED:
        v = MAX_SPEED
    x = position + v
    if x <= MIN_POSITION:
        x = MIN_POSITION
        v = 0.0
    elif x > MAX_POSITION:
        x = MAX_POSITION
    return x, v, x >= GOAL_POSITION


def step(s: EnvState, action: int) -> StepOutcome:
    x, v, terminal = dynamics(s.position, s.velocity, action)
    return StepOutcome(EnvState(x, v), -1.0, terminal)


def observation(position: float, velocity: float, normalize: bool = True) -> tuple[float, float]:
    """Network input for a state; ``normalize`` maps the state box onto [-1, 1]^2."""
    if not normalize:
        return position, velocity
    centre = 0.5 * (MIN_POSITION + MAX_POSITION)
    half = 0.5 * (MAX_POSITION - MIN_POSITION)
    return (position - centre) / half, velocity / MAX_SPEED
