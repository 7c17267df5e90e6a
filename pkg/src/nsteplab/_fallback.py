"""Pure numpy implementations of the hot kernels.

Same call signatures and semantics as the compiled ``_core`` module; used when
the extension is not built or ``NSTEPLAB_BACKEND=python`` is set.

Parameter vectors are flat float64 arrays laid out as
``W1 (H x 2, row-major) | b1 (H) | W2 (A x H, row-major) | b2 (A)``.
"""
from __future__ import annotations

import numpy as np

SARSA, TREE_BACKUP, QSIGMA, RETRACE, QLEARNING = range(5)
MIN_STORED_PROB = 1e-9


def _views(theta, hidden, n_actions):
    w1 = theta[: 2 * hidden].reshape(hidden, 2)
    b1 = theta[2 * hidden : 3 * hidden]
    w2 = theta[3 * hidden : 3 * hidden + n_actions * hidden].reshape(n_actions, hidden)
    b2 = theta[3 * hidden + n_actions * hidden :]
    return w1, b1, w2, b2


def forward(theta, hidden, n_actions, states, out):
    w1, b1, w2, b2 = _views(theta, hidden, n_actions)
    h = np.maximum(states @ w1.T + b1, 0.0)
    out[...] = h @ w2.T + b2


def loss_grad(theta, hidden, n_actions, states, actions, targets, grad):
    w1, b1, w2, b2 = _views(theta, hidden, n_actions)
    gw1, gb1, gw2, gb2 = _views(grad, hidden, n_actions)
    batch = states.shape[0]
    pre = states @ w1.T + b1
    h = np.maximum(pre, 0.0)
    q = np.einsum("bh,bh->b", h, w2[actions]) + b2[actions]
    err = q - targets
    d = 2.0 * err / batch
    grad[:] = 0.0
    np.add.at(gw2, actions, d[:, None] * h)
    np.add.at(gb2, actions, d)
    dh = d[:, None] * w2[actions] * (pre > 0.0)
    gw1[...] = dh.T @ states
    gb1[...] = dh.sum(axis=0)
    return float(np.dot(err, err) / batch)


def rmsprop(theta, g, s, grad, alpha, beta_g, beta_s, min_sq):
    g *= beta_g
    g += (1.0 - beta_g) * grad
    s *= beta_s
    s += (1.0 - beta_s) * grad * grad
    theta -= alpha * grad / np.sqrt(s - g * g + min_sq)


def find_segments(cand, count, oldest, capacity, n, terminal, first_step,
                  seg_idx, seg_len, seg_term, filled):
    """Validate candidate start positions and expand them into segments.

    ``cand`` holds logical positions (0 = oldest live entry). Accepted
    segments are appended at row ``filled``; returns the new fill count.
    """
    limit = seg_idx.shape[0]
    for c in cand:
        if filled >= limit:
            break
        i = int(c)
        if i + 1 >= count:
            continue
        slot = (oldest + i) % capacity
        nxt = (slot + 1) % capacity
        if terminal[slot] or first_step[nxt]:
            continue
        seg_idx[filled, 0] = slot
        ends = False
        m = 0
        for ell in range(1, n + 1):
            sl = (oldest + i + ell) % capacity
            seg_idx[filled, ell] = sl
            m = ell
            if terminal[sl]:
                ends = True
                break
            if ell == n:
                break
            if i + ell + 1 >= count or first_step[(sl + 1) % capacity]:
                break
        seg_len[filled] = m
        seg_term[filled] = ends
        filled += 1
    return filled


def _eps_greedy(q, eps):
    n_actions = q.shape[0]
    probs = np.full(n_actions, eps / n_actions)
    probs[int(np.argmax(q))] += 1.0 - eps
    return probs


def _dot(pi, q, skip):
    # left-to-right like the compiled loop
    total = 0.0
    for j in range(q.shape[0]):
        if j != skip:
            total += pi[j] * q[j]
    return total


def batch_targets(seg_idx, seg_len, seg_term, nseg, states, actions, rewards,
                  probs, sigmas, theta_t, hidden, n_actions, qcache, qgen, gen,
                  family, off_policy, gamma, cutoff, eps, theta_pi, out):
    """Backward recursion for every segment.

    Returns -1, or the first row whose importance ratio needs a stored
    behaviour probability below ``MIN_STORED_PROB``.

    ``qcache``/``qgen`` memoise target-network values per buffer slot for the
    current target generation ``gen``.
    """
    buf = np.empty((1, n_actions))

    def qvals(slot):
        if qgen[slot] != gen:
            forward(theta_t, hidden, n_actions, states[slot : slot + 1], buf)
            qcache[slot] = buf[0]
            qgen[slot] = gen
        return qcache[slot]

    def policy(slot, q):
        if theta_pi is None:
            return _eps_greedy(q, eps)
        forward(theta_pi, hidden, n_actions, states[slot : slot + 1], buf)
        return _eps_greedy(buf[0], eps)

    for b in range(nseg):
        m = int(seg_len[b])
        term = bool(seg_term[b])
        last = seg_idx[b, m]
        if term:
            g = 0.0
        else:
            q = qvals(last)
            g = float(q.max()) if family == QLEARNING else float(q[actions[last]])
        for ell in range(m, 0, -1):
            slot = seg_idx[b, ell]
            if ell == m and term:
                x = 0.0
            elif family == QLEARNING or (family == SARSA and not off_policy):
                x = g
            else:
                q = qvals(slot)
                pi = policy(slot, q)
                a = actions[slot]
                if family == SARSA or family == RETRACE or (family == QSIGMA and off_policy):
                    if probs[slot] < MIN_STORED_PROB:
                        return b
                    rho = pi[a] / probs[slot]
                if family == SARSA:
                    x = rho * g
                elif family == RETRACE:
                    c = min(cutoff, rho)
                    x = c * g + _dot(pi, q, -1) - c * q[a]
                else:
                    rest = _dot(pi, q, a)
                    if family == TREE_BACKUP:
                        x = pi[a] * g + rest
                    else:
                        sig = sigmas[slot]
                        w = sig * rho if off_policy else sig
                        x = (w + (1.0 - sig) * pi[a]) * g + (1.0 - sig) * rest
            g = rewards[slot] + gamma * x
        out[b] = g
    return -1
