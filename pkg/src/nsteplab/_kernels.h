/* Dense kernels for the 2 -> H -> A ReLU network.
 *
 * Parameter layout (flat, float64):
 *   W1 (H x 2, row-major) | b1 (H) | W2 (A x H, row-major) | b2 (A)
 *
 * Every reduction runs in a fixed order (the batch dot product uses four
 * interleaved partial sums), so results do not depend on the call pattern.
 */
#ifndef NSTEPLAB_KERNELS_H
#define NSTEPLAB_KERNELS_H

#include <math.h>
#include <stddef.h>
#include <string.h>

static inline double nsl_relu(double z) { return z > 0.0 ? z : 0.0; }

/* q[a] = b2[a] + sum_j W2[a, j] * relu(W1[j] . s + b1[j]) */
static void nsl_forward(const double *theta, ptrdiff_t H, ptrdiff_t A,
                        double x, double v, double *out)
{
    const double *w1 = theta, *b1 = theta + 2 * H, *w2 = theta + 3 * H;
    const double *b2 = w2 + A * H;
    ptrdiff_t j, a;
    if (A == 3) {
        /* partial sums over j mod 4, combined as in nsl_dot4 */
        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
        double c0 = 0.0, c1 = 0.0, c2 = 0.0, c3 = 0.0;
        double e0 = 0.0, e1 = 0.0, e2 = 0.0, e3 = 0.0;
        const double *u = w2, *w = w2 + H, *z = w2 + 2 * H;
        for (j = 0; j + 3 < H; j += 4) {
            double h0 = nsl_relu(w1[2 * j] * x + w1[2 * j + 1] * v + b1[j]);
            double h1 = nsl_relu(w1[2 * j + 2] * x + w1[2 * j + 3] * v + b1[j + 1]);
            double h2 = nsl_relu(w1[2 * j + 4] * x + w1[2 * j + 5] * v + b1[j + 2]);
            double h3 = nsl_relu(w1[2 * j + 6] * x + w1[2 * j + 7] * v + b1[j + 3]);
            a0 += u[j] * h0; a1 += u[j + 1] * h1; a2 += u[j + 2] * h2; a3 += u[j + 3] * h3;
            c0 += w[j] * h0; c1 += w[j + 1] * h1; c2 += w[j + 2] * h2; c3 += w[j + 3] * h3;
            e0 += z[j] * h0; e1 += z[j + 1] * h1; e2 += z[j + 2] * h2; e3 += z[j + 3] * h3;
        }
        for (; j < H; j++) {
            double h = nsl_relu(w1[2 * j] * x + w1[2 * j + 1] * v + b1[j]);
            a0 += u[j] * h;
            c0 += w[j] * h;
            e0 += z[j] * h;
        }
        out[0] = ((a0 + a1) + (a2 + a3)) + b2[0];
        out[1] = ((c0 + c1) + (c2 + c3)) + b2[1];
        out[2] = ((e0 + e1) + (e2 + e3)) + b2[2];
        return;
    }
    for (a = 0; a < A; a++) {
        double p[4] = {0.0, 0.0, 0.0, 0.0};
        const double *wa = w2 + a * H;
        for (j = 0; j + 3 < H; j += 4)
            for (int k = 0; k < 4; k++)
                p[k] += wa[j + k] * nsl_relu(w1[2 * (j + k)] * x + w1[2 * (j + k) + 1] * v + b1[j + k]);
        for (; j < H; j++)
            p[0] += wa[j] * nsl_relu(w1[2 * j] * x + w1[2 * j + 1] * v + b1[j]);
        out[a] = ((p[0] + p[1]) + (p[2] + p[3])) + b2[a];
    }
}

/* Scratch needs 5 * H doubles. */
static void nsl_hidden(const double *restrict wx, const double *restrict wv,
                       const double *restrict b1, ptrdiff_t H, double x, double v,
                       double *restrict h)
{
    for (ptrdiff_t j = 0; j < H; j++)
        h[j] = nsl_relu(wx[j] * x + wv[j] * v + b1[j]);
}

static double nsl_dot4(const double *restrict a, const double *restrict b, ptrdiff_t H)
{
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    ptrdiff_t j = 0;
    for (; j + 3 < H; j += 4) {
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    for (; j < H; j++)
        s0 += a[j] * b[j];
    return (s0 + s1) + (s2 + s3);
}

static void nsl_backward_row(const double *restrict h, const double *restrict w2a,
                             double d, double x, double v, ptrdiff_t H,
                             double *restrict gw2a, double *restrict gx,
                             double *restrict gv, double *restrict gb1)
{
    for (ptrdiff_t j = 0; j < H; j++) {
        double hj = h[j];
        double mask = hj > 0.0 ? 1.0 : 0.0;
        double dh = d * w2a[j] * mask;
        gw2a[j] += d * hj;
        gx[j] += dh * x;
        gv[j] += dh * v;
        gb1[j] += dh;
    }
}

/* Mean squared error of q(s_i, a_i) against targets and its gradient. */
static double nsl_loss_grad(const double *theta, ptrdiff_t H, ptrdiff_t A,
                            const double *states, const long *actions,
                            const double *targets, ptrdiff_t B,
                            double *grad, double *scratch)
{
    const double *w1 = theta, *b1 = theta + 2 * H, *w2 = theta + 3 * H;
    const double *b2 = w2 + A * H;
    double *gw1 = grad, *gb1 = grad + 2 * H, *gw2 = grad + 3 * H, *gb2 = gw2 + A * H;
    double *wx = scratch, *wv = scratch + H, *gx = scratch + 2 * H, *gv = scratch + 3 * H;
    double *h = scratch + 4 * H;
    double loss = 0.0;
    ptrdiff_t i, j;

    memset(grad, 0, sizeof(double) * (size_t)(3 * H + A * H + A));
    memset(gx, 0, sizeof(double) * (size_t)(2 * H));
    for (j = 0; j < H; j++) {
        wx[j] = w1[2 * j];
        wv[j] = w1[2 * j + 1];
    }
    for (i = 0; i < B; i++) {
        double x = states[2 * i], v = states[2 * i + 1];
        long a = actions[i];
        nsl_hidden(wx, wv, b1, H, x, v, h);
        double q = nsl_dot4(w2 + a * H, h, H) + b2[a];
        double err = q - targets[i];
        double d = 2.0 * err / (double)B;
        loss += err * err;
        gb2[a] += d;
        nsl_backward_row(h, w2 + a * H, d, x, v, H, gw2 + a * H, gx, gv, gb1);
    }
    for (j = 0; j < H; j++) {
        gw1[2 * j] = gx[j];
        gw1[2 * j + 1] = gv[j];
    }
    return loss / (double)B;
}

static void nsl_rmsprop(double *restrict theta, double *restrict g, double *restrict s,
                        const double *restrict grad, ptrdiff_t P, double alpha,
                        double beta_g, double beta_s, double min_sq)
{
    double cg = 1.0 - beta_g, cs = 1.0 - beta_s;
    for (ptrdiff_t i = 0; i < P; i++) {
        double gi = grad[i];
        double gn = beta_g * g[i] + cg * gi;
        double sn = beta_s * s[i] + cs * gi * gi;
        g[i] = gn;
        s[i] = sn;
        theta[i] -= alpha * gi / sqrt(sn - gn * gn + min_sq);
    }
}

#endif
