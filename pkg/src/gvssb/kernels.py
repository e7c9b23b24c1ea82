"""Hot loops: the per-group CAVI sweep, per-group moment sums, B-spline rows.

Everything here is written in the subset of numpy that numba compiles, and
is passed through :func:`gvssb._accel.jit`.  Family codes: 0 Gaussian,
1 multi-Laplacian, 2 multivariate t.
"""
import math

import numpy as np

from ._accel import jit

LOG_PI = math.log(math.pi)
LOGIT_CLIP = 700.0


@jit
def slab_precision(family, lam, nu, kappa, p):
    """``E[alpha^2]`` under ``q(alpha^2)``; the fixed precision for family 0."""
    if family == 0:
        return lam
    if family == 1:
        return lam / math.sqrt(kappa)
    return (nu + p) / (nu * lam * lam + kappa)


@jit
def slab_logit_term(family, lam, nu, kappa, p, logdet, quad):
    """Slab-dependent part of the inclusion logit (everything but ``log w/(1-w)``)."""
    if family == 0:
        return 0.5 * logdet + 0.5 * p * math.log(lam) + 0.5 * quad
    if family == 1:
        return 0.5 * (logdet + LOG_PI + p * math.log(0.5 * lam * lam)
                      - lam * math.sqrt(kappa) - 2.0 * math.lgamma(0.5 * (p + 1)) + quad)
    a = nu * lam * lam
    return (0.5 * (logdet + nu * math.log(0.5 * a) - (nu + p) * math.log(0.5 * (a + kappa))
                   + kappa * (nu + p) / (a + kappa) + quad)
            + math.lgamma(0.5 * (nu + p)) - math.lgamma(0.5 * nu))


@jit
def expit_clipped(x):
    if x > LOGIT_CLIP:
        x = LOGIT_CLIP
    elif x < -LOGIT_CLIP:
        x = -LOGIT_CLIP
    return 1.0 / (1.0 + math.exp(-x))


@jit
def cavi_sweep(order, xt, offsets, grams, sq_offsets, residual, gamma, mu, sigma,
               kappa, logdet, family, lam, nu, logit_w, inv_s2):
    """One pass of group updates in the given order; all arrays updated in place.

    For each visited group: form the partial residual, refresh ``Sigma_i`` and
    ``mu_i``, then ``gamma_i`` (using ``kappa_i`` from before the visit), then
    ``kappa_i`` for hierarchical slabs, and finally write the residual back.
    """
    for k in range(order.shape[0]):
        i = order[k]
        a = offsets[i]
        b = offsets[i + 1]
        p = b - a
        Xi = xt[a:b]
        g_old = gamma[i]
        if g_old != 0.0:
            residual += g_old * (Xi.T @ mu[a:b])
        xr = Xi @ residual
        e = slab_precision(family, lam, nu, kappa[i], p)
        P = grams[sq_offsets[i]:sq_offsets[i + 1]].reshape(p, p) * inv_s2
        for j in range(p):
            P[j, j] += e
        L = np.linalg.cholesky(P)
        ld = 0.0
        for j in range(p):
            ld -= 2.0 * math.log(L[j, j])
        S = np.linalg.inv(P)
        S = 0.5 * (S + S.T)
        m = (S @ xr) * inv_s2
        quad = inv_s2 * (m @ xr)
        x = logit_w + slab_logit_term(family, lam, nu, kappa[i], p, ld, quad)
        g_new = expit_clipped(x)
        mu[a:b] = m
        sigma[sq_offsets[i]:sq_offsets[i + 1]] = S.ravel()
        logdet[i] = ld
        gamma[i] = g_new
        if family != 0:
            tr = 0.0
            for j in range(p):
                tr += S[j, j]
            kappa[i] = m @ m + tr
        if g_new != 0.0:
            residual -= g_new * (Xi.T @ m)


@jit
def group_moments(offsets, grams, sq_offsets, mu, sigma, out):
    """Fill ``out[i] = (mu'mu, tr Sigma, mu'X'X mu, tr(X'X Sigma))`` per group."""
    G = offsets.shape[0] - 1
    for i in range(G):
        a = offsets[i]
        p = offsets[i + 1] - a
        m = mu[a:a + p]
        Gi = grams[sq_offsets[i]:sq_offsets[i + 1]].reshape(p, p)
        S = sigma[sq_offsets[i]:sq_offsets[i + 1]].reshape(p, p)
        tr = 0.0
        trgs = 0.0
        for r in range(p):
            tr += S[r, r]
            for c in range(p):
                trgs += Gi[r, c] * S[c, r]
        out[i, 0] = m @ m
        out[i, 1] = tr
        out[i, 2] = m @ (Gi @ m)
        out[i, 3] = trgs


@jit
def bspline_rows(x, t, degree, nbasis, out):
    """Cox-de Boor evaluation of all ``nbasis`` B-splines at each ``x``.

    ``t`` is the full clamped knot vector of length ``nbasis + degree + 1``;
    points must already lie within ``[t[degree], t[nbasis]]``.
    """
    k = degree
    left = np.zeros(k + 1)
    right = np.zeros(k + 1)
    N = np.zeros(k + 1)
    hi = t[nbasis]
    for idx in range(x.shape[0]):
        xi = x[idx]
        if xi >= hi:
            span = nbasis - 1
        else:
            span = np.searchsorted(t, xi, side="right") - 1
            if span < k:
                span = k
            if span > nbasis - 1:
                span = nbasis - 1
        N[0] = 1.0
        for j in range(1, k + 1):
            left[j] = xi - t[span + 1 - j]
            right[j] = t[span + j] - xi
            saved = 0.0
            for r in range(j):
                denom = right[r + 1] + left[j - r]
                temp = N[r] / denom if denom != 0.0 else 0.0
                N[r] = saved + right[r + 1] * temp
                saved = left[j - r] * temp
            N[j] = saved
        for j in range(nbasis):
            out[idx, j] = 0.0
        for j in range(k + 1):
            out[idx, span - k + j] = N[j]
