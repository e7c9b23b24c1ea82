"""Coordinate-ascent fitting of the grouped spike-and-slab variational posterior.

The mean-field family is ``q(theta_i) = gamma_i N(mu_i, Sigma_i) + (1-gamma_i) delta_0``
per group (with an extra factor ``q(alpha_i^2)`` for hierarchical slabs) and
an Inverse-Gamma factor ``q(sigma^2)`` with shape ``alpha + n/2`` and scale
``beta + v/2``.  ``sigma_tilde_sq`` is ``1 / E[1/sigma^2]``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import digamma, gammaln, xlogy

from . import kernels
from .preprocess import DEFAULT_RIDGE_GRID, ridge_init
from .slabs import (GroupStats, em_lambda_update, expected_alpha_sq, gamma_prior_term,
                    log_norm_const)
from .types import (FitConfig, FitResult, GroupedDesign, Hyperparams, SlabSpec,
                    VariationalState)

logger = logging.getLogger(__name__)

SIGMA2_FLOOR = 1e-100


@dataclass(frozen=True)
class SweepStats:
    delta_H: float
    delta_sigma: float
    elbo: float


def binary_entropy(gamma) -> np.ndarray:
    g = np.asarray(gamma, dtype=float)
    return -(xlogy(g, g) + xlogy(1.0 - g, 1.0 - g))


def bernoulli_kl(gamma, w: float) -> float:
    """``sum_i KL(Bern(gamma_i) || Bern(w))``."""
    g = np.asarray(gamma, dtype=float)
    return float(np.sum(xlogy(g, g) - g * math.log(w)
                        + xlogy(1 - g, 1 - g) - (1 - g) * math.log1p(-w)))


def _logit(w: float) -> float:
    return math.log(w) - math.log1p(-w)


def _sigma_tilde_sq(v: float, hyper: Hyperparams, n: int) -> float:
    return (v / 2 + hyper.beta_sigma) / (n / 2 + hyper.alpha_sigma)


def _v_floor(hyper: Hyperparams, n: int) -> float:
    return 2 * (n / 2 + hyper.alpha_sigma) * SIGMA2_FLOOR


def group_moments(state: VariationalState, design: GroupedDesign) -> np.ndarray:
    """``G x 4`` array of ``(mu'mu, tr Sigma, mu'X'X mu, tr(X'X Sigma))``."""
    out = np.empty((design.G, 4))
    kernels.group_moments(design.offsets, design.grams_flat, design.sq_offsets,
                          state.mu_flat, state.sigma_flat, out)
    return out


def expected_sq_residual(state: VariationalState, design: GroupedDesign, moments=None) -> float:
    """``E_q ||y - X theta||^2`` from the stored residual.

    ``||r||^2 + sum_i gamma_i (1 - gamma_i) mu_i'X_i'X_i mu_i + sum_i gamma_i tr(X_i'X_i Sigma_i)``.
    """
    if moments is None:
        moments = group_moments(state, design)
    g = state.gamma
    r = state.residual
    if design.G == 0:
        return float(r @ r)
    return float(r @ r + (g * (1 - g)) @ moments[:, 2] + g @ moments[:, 3])


def init_state(design: GroupedDesign, y, slab: SlabSpec, hyper: Hyperparams,
               config: FitConfig, mu_init=None) -> VariationalState:
    """Starting point: ``gamma = 1/G``, ridge means, ``Sigma_i = (X_i'X_i/s0 + I)^{-1}``."""
    y = np.asarray(y, dtype=float)
    n, G = design.n, design.G
    if config.sigma_update == "fixed":
        s0 = float(config.sigma2_fixed)
    else:
        s0 = max(float(np.var(y, ddof=1)), SIGMA2_FLOOR)
    v = max(2 * (s0 * (n / 2 + hyper.alpha_sigma) - hyper.beta_sigma), _v_floor(hyper, n))
    s2 = _sigma_tilde_sq(v, hyper, n) if config.sigma_update != "fixed" else s0

    if mu_init is not None:
        mu = np.array(mu_init, dtype=float)
        if mu.shape != (design.p,):
            raise ValueError(f"mu_init must have length {design.p}")
    elif config.init == "zeros" or G == 0:
        mu = np.zeros(design.p)
    else:
        grid = config.ridge_grid if config.ridge_grid is not None else DEFAULT_RIDGE_GRID
        mu = ridge_init(design, y, folds=config.ridge_folds, grid=grid, seed=config.rng_seed)

    gamma = np.full(G, 1.0 / G) if G else np.zeros(0)
    sigma = np.empty(int(design.sq_offsets[-1]))
    logdet = np.empty(G)
    kappa = np.empty(G)
    for i in range(G):
        a, b = design.offsets[i], design.offsets[i + 1]
        P = design.grams[i] / s2 + np.eye(b - a)
        S = np.linalg.inv(P)
        S = 0.5 * (S + S.T)
        sigma[design.sq_offsets[i]:design.sq_offsets[i + 1]] = S.ravel()
        logdet[i] = -np.linalg.slogdet(P)[1]
        kappa[i] = mu[a:b] @ mu[a:b] + np.trace(S)
    state = VariationalState(gamma, mu, sigma, kappa, logdet, v, s2, y.copy(),
                             design.offsets, design.sq_offsets)
    if G:
        state.residual = y - design.matrix @ state.theta_hat()
    return state


def _update_group(i, state, design, hyper, slab, on_step):
    a, b = design.offsets[i], design.offsets[i + 1]
    p = int(b - a)
    Xi = design.blocks[i]
    cur = slab.with_lambda(hyper.lam)
    inv_s2 = 1.0 / state.sigma_tilde_sq
    g_old = state.gamma[i]
    r_i = state.residual + g_old * (Xi @ state.mu_flat[a:b])

    e = expected_alpha_sq(cur, state.kappa[i], p)
    P = design.grams[i] * inv_s2 + e * np.eye(p)
    factor = cho_factor(P, lower=True)
    S = cho_solve(factor, np.eye(p))
    S = 0.5 * (S + S.T)
    ld = -2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    xr = Xi.T @ r_i
    m = (S @ xr) * inv_s2
    state.mu_flat[a:b] = m
    state.sigma_flat[design.sq_offsets[i]:design.sq_offsets[i + 1]] = S.ravel()
    state.logdet[i] = ld
    state.residual = r_i - g_old * (Xi @ m)
    if on_step is not None:
        on_step("mu_sigma", i)

    quad = inv_s2 * float(m @ xr)
    x = _logit(hyper.w) + gamma_prior_term(cur, state.kappa[i], p, ld, quad)
    g_new = float(kernels.expit_clipped(x))
    state.gamma[i] = g_new
    state.residual = r_i - g_new * (Xi @ m)
    if on_step is not None:
        on_step("gamma", i)

    if cur.hierarchical:
        state.kappa[i] = float(m @ m + np.trace(S))
        if on_step is not None:
            on_step("kappa", i)
    return state


def update_group_gaussian(i: int, state: VariationalState, design: GroupedDesign, y,
                          hyper: Hyperparams, on_step=None) -> VariationalState:
    """Refresh ``Sigma_i, mu_i, gamma_i`` of group ``i`` under the Gaussian slab.

    ``hyper.lam`` is the slab precision.  ``on_step(name, i)`` is called after
    each coordinate (``"mu_sigma"``, ``"gamma"``) if given.
    """
    return _update_group(i, state, design, hyper, SlabSpec.gaussian(hyper.lam), on_step)


def update_group_hierarchical(i: int, state: VariationalState, design: GroupedDesign, y,
                              hyper: Hyperparams, slab: SlabSpec,
                              on_step=None) -> VariationalState:
    """Refresh ``Sigma_i, mu_i, gamma_i`` then ``kappa_i`` for a scale-mixture slab."""
    if not slab.hierarchical:
        raise ValueError("update_group_hierarchical needs a multi-Laplacian or t slab")
    return _update_group(i, state, design, hyper, slab, on_step)


def update_v_sigma(state: VariationalState, design: GroupedDesign, y,
                   hyper: Hyperparams) -> VariationalState:
    """Set ``v = E||y - X theta||^2`` and the matching ``sigma_tilde_sq``."""
    v = max(expected_sq_residual(state, design), _v_floor(hyper, design.n))
    state.v = v
    state.sigma_tilde_sq = _sigma_tilde_sq(v, hyper, design.n)
    return state


def _slab_terms(state, design, moments, slab: SlabSpec) -> np.ndarray:
    p = design.sizes.astype(float)
    mm, tr = moments[:, 0], moments[:, 1]
    base = 0.5 * p + 0.5 * state.logdet
    if not slab.hierarchical:
        rho = slab.lam
        return base + 0.5 * p * math.log(rho) - 0.5 * rho * (mm + tr)
    out = np.empty(design.G)
    for i in range(design.G):
        k = state.kappa[i]
        e = expected_alpha_sq(slab, k, int(p[i]))
        out[i] = 0.5 * e * (k - mm[i] - tr[i]) + log_norm_const(slab, k, int(p[i]))
    return base + out


def elbo(state: VariationalState, design: GroupedDesign, y, hyper: Hyperparams,
         slab: SlabSpec) -> float:
    """Evidence lower bound of the current variational state.

    Expected Gaussian log-likelihood, minus the KL terms for the inclusion
    indicators, the slab (and mixing) factors, and ``q(sigma^2)``.  With
    ``alpha = beta = 0`` the improper ``1/sigma^2`` prior is used unnormalized.
    """
    n = design.n
    cur = slab.with_lambda(hyper.lam)
    a = hyper.alpha_sigma + n / 2
    b = hyper.beta_sigma + state.v / 2
    e_inv = a / b
    e_log = math.log(b) - digamma(a)
    moments = group_moments(state, design) if design.G else np.zeros((0, 4))
    V = expected_sq_residual(state, design, moments)
    total = -0.5 * n * math.log(2 * math.pi) - 0.5 * n * e_log - 0.5 * e_inv * V

    alpha, beta = hyper.alpha_sigma, hyper.beta_sigma
    log_prior_norm = alpha * math.log(beta) - gammaln(alpha) if alpha > 0 and beta > 0 else 0.0
    total += log_prior_norm - (alpha + 1) * e_log - beta * e_inv
    total += a + math.log(b) + gammaln(a) - (1 + a) * digamma(a)

    if design.G:
        total -= bernoulli_kl(state.gamma, hyper.w)
        total += float(state.gamma @ _slab_terms(state, design, moments, cur))
    return float(total)


def update_hyperparameters(state: VariationalState, slab: SlabSpec,
                           hyper: Hyperparams) -> Hyperparams:
    """Empirical-Bayes step: ``w = mean(gamma)`` (clamped away from 0 and 1), then ``lam``."""
    G = state.G
    lo, hi = 1.0 / (10 * G), 1.0 - 1.0 / (10 * G)
    hyper.w = float(min(max(state.gamma.mean(), lo), hi))
    sizes = np.diff(state.offsets)
    if slab.hierarchical:
        stats = GroupStats(sizes, kappa=state.kappa)
    else:
        mm_tr = np.array([m @ m + np.trace(S) for m, S in zip(state.mu, state.sigma_mat)])
        stats = GroupStats(sizes, second_moment=mm_tr)
    hyper.lam = em_lambda_update(slab.with_lambda(hyper.lam), state.gamma, stats)
    return hyper


def run_sweep(state: VariationalState, design: GroupedDesign, slab: SlabSpec,
              hyper: Hyperparams, order=None, kernel=None) -> VariationalState:
    """All group updates in ``order`` through the compiled (or numpy) kernel."""
    if order is None:
        order = np.arange(design.G)
    kernel = kernels.cavi_sweep if kernel is None else kernel
    kernel(np.asarray(order, dtype=np.int64), design.xt, design.offsets, design.grams_flat,
           design.sq_offsets, state.residual, state.gamma, state.mu_flat, state.sigma_flat,
           state.kappa, state.logdet, slab.code, float(hyper.lam),
           float(slab.nu or 0.0), _logit(hyper.w), 1.0 / state.sigma_tilde_sq)
    return state


def priority_order(state: VariationalState) -> np.ndarray:
    """Groups by decreasing ``||mu_i||``; ties go to the lower index."""
    norms = np.sqrt(np.add.reduceat(state.mu_flat ** 2, state.offsets[:-1])) \
        if state.G else np.zeros(0)
    return np.argsort(-norms, kind="stable")


def _check_finite(state, design, sweep):
    if np.all(np.isfinite(state.residual)) and np.isfinite(state.sigma_tilde_sq):
        bad = ~(np.isfinite(state.gamma) & np.isfinite(state.kappa) & np.isfinite(state.logdet))
        mu_bad = ~np.isfinite(np.add.reduceat(state.mu_flat, state.offsets[:-1]))
        bad |= mu_bad
        if not bad.any():
            return
        i = int(np.flatnonzero(bad)[0])
        raise FloatingPointError(f"non-finite variational parameters in group "
                                 f"{design.group_names[i]!r} at sweep {sweep}")
    raise FloatingPointError(f"non-finite residual or noise scale at sweep {sweep}")


def fit(design: GroupedDesign, y, slab: SlabSpec, hyper: Hyperparams | None = None,
        config: FitConfig | None = None, mu_init=None) -> FitResult:
    """Run CAVI (with optional empirical-Bayes steps) to convergence.

    ``design`` and ``y`` are expected on the standardized scale (see
    :func:`gvssb.preprocess.standardize`).  Each sweep visits groups by
    decreasing ``||mu_i||``; the noise factor is refreshed only when the
    largest change in binary entropy of ``gamma`` is at most ``eps_h`` (unless
    ``config.sigma_update`` says otherwise).  Stops when both the entropy change
    and the change in ``sigma_tilde`` fall below their tolerances.
    """
    config = config or FitConfig()
    y = np.asarray(y, dtype=float)
    if y.shape != (design.n,):
        raise ValueError(f"y has shape {y.shape}, expected ({design.n},)")
    if design.G == 0:
        raise ValueError("design has no groups")
    hyper = replace(hyper) if hyper is not None else Hyperparams(lam=slab.lam, w=1.0 / design.G)
    state = init_state(design, y, slab, hyper, config, mu_init)

    elbo_trace, hyper_trace, sweeps = [], [], []
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        order = priority_order(state)
        gamma_old = state.gamma.copy()
        try:
            run_sweep(state, design, slab, hyper, order)
        except np.linalg.LinAlgError as exc:
            raise FloatingPointError(f"Cholesky failed during sweep {it}: {exc}") from exc
        _check_finite(state, design, it)
        if config.em_enabled:
            update_hyperparameters(state, slab, hyper)
            hyper_trace.append((hyper.lam, hyper.w))
        d_h = float(np.max(np.abs(binary_entropy(state.gamma) - binary_entropy(gamma_old))))
        s_old = math.sqrt(state.sigma_tilde_sq)
        if config.sigma_update == "always" or (config.sigma_update == "gated" and d_h <= config.eps_h):
            update_v_sigma(state, design, y, hyper)
        d_s = abs(math.sqrt(state.sigma_tilde_sq) - s_old)
        elbo_trace.append(elbo(state, design, y, hyper, slab))
        sweeps.append(SweepStats(d_h, d_s, elbo_trace[-1]))
        logger.debug("sweep %d: dH=%.3g dsigma=%.3g elbo=%.6g", it, d_h, d_s, elbo_trace[-1])
        if d_h < config.eps_h and d_s < config.eps_sigma:
            converged = True
            break

    n = design.n
    a = hyper.alpha_sigma + n / 2
    b = hyper.beta_sigma + state.v / 2
    sigma_hat = b / (a - 1) if a > 1 else state.sigma_tilde_sq
    if config.sigma_update == "fixed":
        sigma_hat = float(config.sigma2_fixed)
    selected = tuple(int(i) for i in np.flatnonzero(state.gamma > config.selection_threshold))
    return FitResult(state=state, selected=selected, sigma_hat_sq=float(sigma_hat),
                     elbo_trace=tuple(elbo_trace), hyper_trace=tuple(hyper_trace),
                     iterations=it, converged=converged,
                     slab=slab.with_lambda(hyper.lam), hyper=hyper, sweep_trace=tuple(sweeps))
