# cython: language_level=3
"""Compiled kernels; twin of ``nsteplab._fallback`` (same signatures).

Dense maths lives in ``_kernels.h``. Reductions use a fixed order so
results are bit-reproducible for a given build; no fast-math.
"""
import numpy as np

DEF MAX_ACTIONS = 16

cdef enum:
    SARSA = 0
    TREE_BACKUP = 1
    QSIGMA = 2
    RETRACE = 3
    QLEARNING = 4

cdef double MIN_STORED_PROB = 1e-9


cdef extern from "_kernels.h" nogil:
    void nsl_forward(const double* theta, Py_ssize_t H, Py_ssize_t A,
                     double x, double v, double* out)
    double nsl_loss_grad(const double* theta, Py_ssize_t H, Py_ssize_t A,
                         const double* states, const long* actions,
                         const double* targets, Py_ssize_t B,
                         double* grad, double* scratch)
    void nsl_rmsprop(double* theta, double* g, double* s, const double* grad,
                     Py_ssize_t P, double alpha, double beta_g, double beta_s,
                     double min_sq)


cdef inline void _fwd(const double* theta, Py_ssize_t hidden, Py_ssize_t n_actions,
                      double x, double v, double* out) noexcept nogil:
    nsl_forward(theta, hidden, n_actions, x, v, out)


def forward(const double[::1] theta, Py_ssize_t hidden, Py_ssize_t n_actions,
            const double[:, ::1] states, double[:, ::1] out):
    cdef Py_ssize_t i
    with nogil:
        for i in range(states.shape[0]):
            _fwd(&theta[0], hidden, n_actions, states[i, 0], states[i, 1], &out[i, 0])


def loss_grad(const double[::1] theta, Py_ssize_t hidden, Py_ssize_t n_actions,
              const double[:, ::1] states, const long[::1] actions,
              const double[::1] targets, double[::1] grad):
    cdef Py_ssize_t batch = states.shape[0]
    cdef double loss
    cdef double[::1] scratch = np.empty(5 * hidden)
    if batch == 0:
        grad[:] = 0.0
        return 0.0
    with nogil:
        loss = nsl_loss_grad(&theta[0], hidden, n_actions, &states[0, 0], &actions[0],
                             &targets[0], batch, &grad[0], &scratch[0])
    return loss


def rmsprop(double[::1] theta, double[::1] g, double[::1] s, const double[::1] grad,
            double alpha, double beta_g, double beta_s, double min_sq):
    with nogil:
        nsl_rmsprop(&theta[0], &g[0], &s[0], &grad[0], theta.shape[0],
                    alpha, beta_g, beta_s, min_sq)


def find_segments(const long[::1] cand, Py_ssize_t count, Py_ssize_t oldest,
                  Py_ssize_t capacity, Py_ssize_t n,
                  const unsigned char[::1] terminal, const unsigned char[::1] first_step,
                  long[:, ::1] seg_idx, long[::1] seg_len, unsigned char[::1] seg_term,
                  Py_ssize_t filled):
    cdef Py_ssize_t limit = seg_idx.shape[0]
    cdef Py_ssize_t k, i, slot, sl, ell, m
    cdef bint ends
    with nogil:
        for k in range(cand.shape[0]):
            if filled >= limit:
                break
            i = cand[k]
            if i + 1 >= count:
                continue
            slot = (oldest + i) % capacity
            if terminal[slot] or first_step[(slot + 1) % capacity]:
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


cdef inline void _eps_greedy(const double* q, Py_ssize_t n_actions, double eps,
                             double* pi) noexcept nogil:
    cdef Py_ssize_t a, best = 0
    for a in range(1, n_actions):
        if q[a] > q[best]:
            best = a
    for a in range(n_actions):
        pi[a] = eps / n_actions
    pi[best] += 1.0 - eps


def batch_targets(const long[:, ::1] seg_idx, const long[::1] seg_len,
                  const unsigned char[::1] seg_term, Py_ssize_t nseg,
                  const double[:, ::1] states, const long[::1] actions,
                  const double[::1] rewards, const double[::1] probs,
                  const double[::1] sigmas, const double[::1] theta_t,
                  Py_ssize_t hidden, Py_ssize_t n_actions,
                  double[:, ::1] qcache, long[::1] qgen, long gen,
                  int family, bint off_policy, double gamma, double cutoff,
                  double eps, theta_pi, double[::1] out):
    cdef const double[::1] tpi
    cdef const double* pi_ptr = NULL
    cdef double pi[MAX_ACTIONS]
    cdef double qpi[MAX_ACTIONS]
    cdef double* q
    cdef Py_ssize_t b, m, ell, slot, last, a, j
    cdef bint term
    cdef Py_ssize_t bad = -1
    cdef double g, x, rho = 0.0, c, rest, sig, w, best
    if n_actions > MAX_ACTIONS:
        raise ValueError("too many actions")
    if theta_pi is not None:
        tpi = theta_pi
        pi_ptr = &tpi[0]
    with nogil:
        for b in range(nseg):
            m = seg_len[b]
            term = seg_term[b]
            last = seg_idx[b, m]
            g = 0.0
            if not term:
                if qgen[last] != gen:
                    _fwd(&theta_t[0], hidden, n_actions, states[last, 0], states[last, 1], &qcache[last, 0])
                    qgen[last] = gen
                q = &qcache[last, 0]
                if family == QLEARNING:
                    best = q[0]
                    for a in range(1, n_actions):
                        if q[a] > best:
                            best = q[a]
                    g = best
                else:
                    g = q[actions[last]]
            ell = m
            while ell >= 1:
                slot = seg_idx[b, ell]
                if ell == m and term:
                    x = 0.0
                elif family == QLEARNING or (family == SARSA and not off_policy):
                    x = g
                else:
                    if qgen[slot] != gen:
                        _fwd(&theta_t[0], hidden, n_actions, states[slot, 0], states[slot, 1], &qcache[slot, 0])
                        qgen[slot] = gen
                    q = &qcache[slot, 0]
                    if pi_ptr == NULL:
                        _eps_greedy(q, n_actions, eps, pi)
                    else:
                        _fwd(pi_ptr, hidden, n_actions, states[slot, 0], states[slot, 1], qpi)
                        _eps_greedy(qpi, n_actions, eps, pi)
                    a = actions[slot]
                    if family == SARSA or family == RETRACE or (family == QSIGMA and off_policy):
                        if probs[slot] < MIN_STORED_PROB:
                            bad = b
                            break
                        rho = pi[a] / probs[slot]
                    if family == SARSA:
                        x = rho * g
                    elif family == RETRACE:
                        c = cutoff if cutoff < rho else rho
                        rest = 0.0
                        for j in range(n_actions):
                            rest += pi[j] * q[j]
                        x = c * g + rest - c * q[a]
                    else:
                        rest = 0.0
                        for j in range(n_actions):
                            if j != a:
                                rest += pi[j] * q[j]
                        if family == TREE_BACKUP:
                            x = pi[a] * g + rest
                        else:
                            sig = sigmas[slot]
                            w = sig * rho if off_policy else sig
                            x = (w + (1.0 - sig) * pi[a]) * g + (1.0 - sig) * rest
                g = rewards[slot] + gamma * x
                ell -= 1
            if bad >= 0:
                break
            out[b] = g
    return bad
