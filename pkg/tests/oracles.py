"""Independent reference implementations used only by the tests.

None of these import the code under test beyond plain data containers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate


# -- environment ----------------------------------------------------------------

def mountain_car_step(x: float, v: float, action: int):
    """Straight transcription of the textbook update."""
    throttle = action - 1
    v2 = v + 0.001 * throttle - 0.0025 * math.cos(3 * x)
    v2 = min(max(v2, -0.07), 0.07)
    x2 = x + v2
    if x2 < -1.2 or x2 == -1.2:
        x2, v2 = -1.2, 0.0
    x2 = min(x2, 0.6)
    return x2, v2, x2 >= 0.5


# -- network ------------------------------------------------------------------

def forward_loops(W1, b1, W2, b2, state):
    """Explicit loops, no matrix products."""
    H = len(b1)
    hidden = []
    for j in range(H):
        z = W1[j][0] * state[0] + W1[j][1] * state[1] + b1[j]
        hidden.append(z if z > 0 else 0.0)
    out = []
    for a in range(len(b2)):
        out.append(math.fsum(W2[a][j] * hidden[j] for j in range(H)) + b2[a])
    return np.array(out)


def mse_loss(theta, hidden, n_actions, states, actions, targets):
    W1 = theta[: 2 * hidden].reshape(hidden, 2)
    b1 = theta[2 * hidden : 3 * hidden]
    W2 = theta[3 * hidden : 3 * hidden + n_actions * hidden].reshape(n_actions, hidden)
    b2 = theta[3 * hidden + n_actions * hidden :]
    h = np.maximum(states @ W1.T + b1, 0.0)
    q = h @ W2.T + b2
    pred = q[np.arange(len(actions)), actions]
    return float(np.mean((pred - targets) ** 2))


def central_difference_grad(theta, hidden, n_actions, states, actions, targets, h=1e-6):
    g = np.empty_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += h
        tm[i] -= h
        g[i] = (mse_loss(tp, hidden, n_actions, states, actions, targets)
                - mse_loss(tm, hidden, n_actions, states, actions, targets)) / (2 * h)
    return g


# -- targets --------------------------------------------------------------------

@dataclass
class RawStep:
    """One segment level: reward into the state, taken action, and its data."""
    reward: float
    action: int
    stored_prob: float
    sigma: float
    pi: np.ndarray | None
    q: np.ndarray | None


def _level_weights(family, corrected, step: RawStep, coefficient=None):
    """(weight on the continuation, list of additive leaf values) at one level."""
    a = step.action
    pi, q = step.pi, step.q
    rho = None
    if pi is not None and step.stored_prob > 0:
        rho = pi[a] / step.stored_prob
    others = [] if pi is None else [pi[b] * q[b] for b in range(len(q)) if b != a]
    if family == "sarsa":
        return (rho if corrected else 1.0), []
    if family == "qlearning":
        return 1.0, []
    if family == "treebackup":
        return pi[a], others
    if family == "qsigma":
        s = step.sigma
        w = s * rho if corrected else s
        return w + (1 - s) * pi[a], [(1 - s) * o for o in others]
    if family == "retrace":
        c = coefficient(pi, step.stored_prob, a) if coefficient else min(1.0, rho)
        # sum_b pi(b) q(b) - c q(a), expanded into separate leaves
        return c, [pi[b] * q[b] for b in range(len(q))] + [-c * q[a]]
    raise ValueError(family)


def target_leaves(family: str, corrected: bool, steps: list[RawStep], terminal: bool,
                  gamma: float, coefficient=None) -> list[float]:
    """Forward enumeration of every term of the fully expanded target.

    ``steps[l]`` for l = 1..m describes segment level l; ``steps[0]`` is unused.
    A non-terminal segment bootstraps from ``steps[m].q``.
    """
    m = len(steps) - 1
    terms = []
    weight = 1.0  # product of continuation weights of levels < l
    for ell in range(1, m + 1):
        st = steps[ell]
        terms.append(gamma ** (ell - 1) * weight * st.reward)
        if ell == m:
            if terminal:
                break
            base = float(np.max(st.q)) if family == "qlearning" else float(st.q[st.action])
            if family == "sarsa" or family == "qlearning":
                w = _level_weights(family, corrected, st)[0]
                terms.append(gamma ** m * weight * w * base)
            else:
                w, leaves = _level_weights(family, corrected, st, coefficient)
                terms.append(gamma ** m * weight * w * base)
                terms.extend(gamma ** m * weight * leaf for leaf in leaves)
            break
        w, leaves = _level_weights(family, corrected, st, coefficient)
        terms.extend(gamma ** ell * weight * leaf for leaf in leaves)
        weight *= w
    return terms


def target_oracle(*args, **kw) -> tuple[float, float]:
    """(exactly rounded sum of leaves, sum of absolute leaves) for tolerances."""
    terms = target_leaves(*args, **kw)
    return math.fsum(terms), math.fsum(abs(t) for t in terms)


# -- replay ---------------------------------------------------------------------

class ShadowBuffer:
    """Append-only list; the live window is the last ``capacity`` entries."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: list[dict] = []

    def store(self, **entry) -> None:
        self.items.append(entry)

    @property
    def live(self) -> list[dict]:
        return self.items[-self.capacity:]

    def sampleable(self) -> list[int]:
        live = self.live
        return [i for i in range(len(live) - 1)
                if not live[i]["terminal"] and not live[i + 1]["first_step"]]

    def segment(self, i: int, n: int) -> tuple[list[dict], bool]:
        live = self.live
        seg = [live[i]]
        for ell in range(1, n + 1):
            e = live[i + ell]
            seg.append(e)
            if e["terminal"]:
                return seg, True
            if ell == n or i + ell + 1 >= len(live) or live[i + ell + 1]["first_step"]:
                break
        return seg, False


# -- statistics -------------------------------------------------------------------

def t_density(x: float, dof: float) -> float:
    logc = math.lgamma((dof + 1) / 2) - math.lgamma(dof / 2) - 0.5 * math.log(dof * math.pi)
    return math.exp(logc - (dof + 1) / 2 * math.log1p(x * x / dof))


def t_cdf_quad(x: float, dof: float) -> float:
    """0.5 +- integral of the density from 0 to |x| (adaptive quadrature)."""
    area, _ = integrate.quad(t_density, 0.0, abs(x), args=(dof,), epsabs=1e-14, epsrel=1e-13, limit=200)
    return 0.5 + area if x >= 0 else 0.5 - area
