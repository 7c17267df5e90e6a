"""Two-layer action-value network, squared-error loss and centered RMSprop.

The network maps a 2-d state through ``H`` ReLU units to one linear output per
action. Weights live in one flat float64 vector so the optimizer and the
snapshot format can treat them uniformly.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from nsteplab._backend import kernels
from nsteplab.errors import ContractError, NonFiniteError

INPUT_DIM = 2
SNAPSHOT_MAGIC = b"NSTEPQN\x00"


def n_params(hidden: int, n_actions: int) -> int:
    return INPUT_DIM * hidden + hidden + n_actions * hidden + n_actions


@dataclass
class NetParams:
    """Flat parameter vector with named views ``W1, b1, W2, b2``."""

    theta: np.ndarray
    hidden: int
    n_actions: int = 3

    def __post_init__(self):
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if self.theta.shape != (n_params(self.hidden, self.n_actions),):
            raise ContractError(
                f"expected {n_params(self.hidden, self.n_actions)} parameters for "
                f"H={self.hidden}, |A|={self.n_actions}; got shape {self.theta.shape}"
            )

    @classmethod
    def zeros(cls, hidden: int, n_actions: int = 3) -> NetParams:
        return cls(np.zeros(n_params(hidden, n_actions)), hidden, n_actions)

    @classmethod
    def from_arrays(cls, W1, b1, W2, b2) -> NetParams:
        W1 = np.asarray(W1, dtype=np.float64)
        W2 = np.asarray(W2, dtype=np.float64)
        hidden, n_actions = W1.shape[0], W2.shape[0]
        if W1.shape != (hidden, INPUT_DIM) or W2.shape != (n_actions, hidden):
            raise ContractError("inconsistent weight shapes")
        theta = np.concatenate([W1.ravel(), np.ravel(b1), W2.ravel(), np.ravel(b2)])
        return cls(theta, hidden, n_actions)

    @property
    def W1(self) -> np.ndarray:
        return self.theta[: 2 * self.hidden].reshape(self.hidden, 2)

    @property
    def b1(self) -> np.ndarray:
        return self.theta[2 * self.hidden : 3 * self.hidden]

    @property
    def W2(self) -> np.ndarray:
        h = self.hidden
        return self.theta[3 * h : 3 * h + self.n_actions * h].reshape(self.n_actions, h)

    @property
    def b2(self) -> np.ndarray:
        return self.theta[3 * self.hidden + self.n_actions * self.hidden :]

    def copy(self) -> NetParams:
        return NetParams(self.theta.copy(), self.hidden, self.n_actions)


def init_params(hidden: int, rng: np.random.Generator, n_actions: int = 3) -> NetParams:
    """Weights uniform in +-1/sqrt(fan_in), biases zero."""
    p = NetParams.zeros(hidden, n_actions)
    lim1 = 1.0 / np.sqrt(INPUT_DIM)
    lim2 = 1.0 / np.sqrt(hidden)
    p.W1[...] = rng.uniform(-lim1, lim1, size=(hidden, INPUT_DIM))
    p.W2[...] = rng.uniform(-lim2, lim2, size=(n_actions, hidden))
    return p


@dataclass
class OptState:
    g: np.ndarray
    s: np.ndarray
    alpha: float = 0.00025
    beta_g: float = 0.95
    beta_s: float = 0.95
    min_sq: float = 0.01

    @classmethod
    def for_params(cls, p: NetParams, **hyper) -> OptState:
        return cls(np.zeros_like(p.theta), np.zeros_like(p.theta), **hyper)


@dataclass
class Minibatch:
    inputs: np.ndarray
    action_indices: np.ndarray
    targets: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float64).reshape(-1, INPUT_DIM)
        self.action_indices = np.ascontiguousarray(self.action_indices, dtype=np.int64)
        self.targets = np.ascontiguousarray(self.targets, dtype=np.float64)
        b = self.inputs.shape[0]
        if self.action_indices.shape != (b,) or self.targets.shape != (b,):
            raise ContractError("inputs, action_indices and targets must have matching length")


def forward_batch(p: NetParams, states: np.ndarray) -> np.ndarray:
    states = np.ascontiguousarray(states, dtype=np.float64).reshape(-1, INPUT_DIM)
    out = np.empty((states.shape[0], p.n_actions))
    kernels.forward(p.theta, p.hidden, p.n_actions, states, out)
    return out


def forward(p: NetParams, state) -> np.ndarray:
    """Action values ``q(state, ., p)``."""
    return forward_batch(p, state)[0]


def loss_and_gradients(p: NetParams, batch: Minibatch) -> tuple[float, NetParams]:
    """Mean squared error over the batch and its exact gradient.

    Targets are constants; only the output row of the taken action receives
    gradient from each example.
    """
    if not np.all(np.isfinite(batch.targets)):
        raise NonFiniteError("minibatch contains non-finite targets")
    if np.any(batch.action_indices < 0) or np.any(batch.action_indices >= p.n_actions):
        raise ContractError("action index out of range")
    grads = NetParams.zeros(p.hidden, p.n_actions)
    loss = kernels.loss_grad(
        p.theta, p.hidden, p.n_actions, batch.inputs, batch.action_indices,
        batch.targets, grads.theta,
    )
    return float(loss), grads


def rmsprop_step(p: NetParams, o: OptState, grads: NetParams) -> tuple[NetParams, OptState]:
    """Centered RMSprop (in place on ``p`` and ``o``, which are also returned).

    g <- bg*g + (1-bg)*grad;  s <- bs*s + (1-bs)*grad^2;
    theta <- theta - alpha * grad / sqrt(s - g^2 + min_sq)
    """
    kernels.rmsprop(p.theta, o.g, o.s, grads.theta, o.alpha, o.beta_g, o.beta_s, o.min_sq)
    return p, o


def sync_target(online: NetParams) -> NetParams:
    return online.copy()


def save_params(p: NetParams, path: str | Path) -> None:
    """Write a snapshot: 16-byte header (magic, H, |A|) then little-endian float64s."""
    header = SNAPSHOT_MAGIC + struct.pack("<II", p.hidden, p.n_actions)
    Path(path).write_bytes(header + p.theta.astype("<f8").tobytes())


def load_params(path: str | Path) -> NetParams:
    raw = Path(path).read_bytes()
    if raw[:8] != SNAPSHOT_MAGIC:
        raise ContractError(f"{path}: not a parameter snapshot")
    hidden, n_actions = struct.unpack("<II", raw[8:16])
    theta = np.frombuffer(raw[16:], dtype="<f8").astype(np.float64)
    return NetParams(theta, hidden, n_actions)
