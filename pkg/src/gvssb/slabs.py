"""Slab-specific quantities.

For the hierarchical slabs the prior is written as
``theta | alpha^2 ~ N(0, alpha^-2 I)`` with a one-dimensional mixing density
on ``alpha^2``:

* multi-Laplacian ``exp(-lam ||theta||)``: ``alpha^2 ~ InvGamma((p+1)/2, lam^2/2)``,
  so ``q(alpha^2)`` is inverse Gaussian (GIG with index -1/2, ``a = kappa``,
  ``b = lam^2``);
* multivariate t with ``nu`` degrees of freedom and scale ``lam``:
  ``alpha^2 ~ Gamma(nu/2, rate = nu lam^2 / 2)``, so ``q(alpha^2)`` is
  ``Gamma((nu+p)/2, rate = (nu lam^2 + kappa)/2)``.

The Gaussian slab is ``N(0, I / lam)``, i.e. ``lam`` is a precision.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .types import GAUSSIAN, LAPLACIAN, SlabSpec


@dataclass(frozen=True)
class SlabMoments:
    e_alpha_sq: float
    log_C: float
    gamma_prior_term: float


@dataclass(frozen=True)
class GroupStats:
    """Per-group sufficient statistics for the slab hyperparameter update.

    ``second_moment`` is ``tr(Sigma_i + mu_i mu_i')``; ``kappa`` is only used
    by the hierarchical families.
    """

    p: np.ndarray
    second_moment: np.ndarray | None = None
    kappa: np.ndarray | None = None


def _nu(slab):
    return slab.nu if slab.nu is not None else 0.0


def expected_alpha_sq(slab: SlabSpec, kappa: float, p_i: int) -> float:
    """Mean of ``alpha_i^2`` under ``q(alpha_i^2)``; the fixed precision for Gaussian."""
    if slab.family == LAPLACIAN and not kappa > 0:
        raise ValueError("kappa must be positive for the multi-Laplacian slab")
    if slab.family != GAUSSIAN and kappa < 0:
        raise ValueError("kappa must be nonnegative")
    return float(kernels.slab_precision(slab.code, slab.lam, _nu(slab), float(kappa), int(p_i)))


def expected_inv_alpha_sq(slab: SlabSpec, kappa: float, p_i: int) -> float:
    """Mean of ``1/alpha_i^2`` under ``q(alpha_i^2)``."""
    lam = slab.lam
    if slab.family == LAPLACIAN:
        return math.sqrt(kappa) / lam + 1.0 / lam ** 2
    if slab.family == GAUSSIAN:
        return 1.0 / lam
    shape = 0.5 * (slab.nu + p_i)
    if shape <= 1:
        return math.inf
    return 0.5 * (slab.nu * lam ** 2 + kappa) / (shape - 1.0)


def log_norm_const(slab: SlabSpec, kappa: float, p_i: int) -> float:
    """``log C_i`` with ``C_i = int (a)^{p/2} exp(-a kappa/2) mixing(a) da``."""
    if slab.family == GAUSSIAN:
        raise ValueError("the Gaussian slab has no augmentation, so no normalizing constant")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    lam, p = slab.lam, p_i
    if slab.family == LAPLACIAN:
        return (0.5 * p * math.log(0.5 * lam ** 2) + 0.5 * math.log(math.pi)
                - lam * math.sqrt(kappa) - math.lgamma(0.5 * (p + 1)))
    nu = slab.nu
    a = nu * lam ** 2
    return (0.5 * nu * math.log(0.5 * a) - math.lgamma(0.5 * nu)
            + math.lgamma(0.5 * (nu + p)) - 0.5 * (nu + p) * math.log(0.5 * (a + kappa)))


def gamma_prior_term(slab: SlabSpec, kappa: float, p_i: int, logdet_sigma: float,
                     quad_form: float) -> float:
    """Inclusion logit minus ``log(w/(1-w))``.

    ``quad_form`` is ``mu_i' Sigma_i^{-1} mu_i`` and ``kappa`` the value used
    to build ``Sigma_i`` (ignored by the Gaussian slab).
    """
    vals = (kappa, logdet_sigma, quad_form)
    if not all(np.isfinite(v) for v in vals):
        raise ValueError("gamma_prior_term needs finite inputs")
    return float(kernels.slab_logit_term(slab.code, slab.lam, _nu(slab), float(kappa),
                                         int(p_i), float(logdet_sigma), float(quad_form)))


def slab_moments(slab: SlabSpec, kappa: float, p_i: int, logdet_sigma: float,
                 quad_form: float) -> SlabMoments:
    log_c = log_norm_const(slab, kappa, p_i) if slab.hierarchical else 0.0
    return SlabMoments(expected_alpha_sq(slab, kappa, p_i), log_c,
                       gamma_prior_term(slab, kappa, p_i, logdet_sigma, quad_form))


def gaussian_expected_log_h(mu, sigma_mat, slab: SlabSpec) -> float:
    """``E log N(theta; 0, I/lam)`` for ``theta ~ N(mu, Sigma)``, constants included."""
    if slab.family != GAUSSIAN:
        raise ValueError("gaussian_expected_log_h is only defined for the Gaussian slab")
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    S = np.atleast_2d(np.asarray(sigma_mat, dtype=float))
    p = mu.shape[0]
    rho = slab.lam
    return float(-0.5 * p * math.log(2 * math.pi / rho) - 0.5 * rho * (mu @ mu + np.trace(S)))


def em_lambda_update(slab: SlabSpec, gamma, stats: GroupStats) -> float:
    """Slab hyperparameter maximizing the gamma-weighted expected log prior.

    Gaussian: closed form in the precision.  Hierarchical: the closed-form
    maximizer with ``q(alpha^2)`` held at the current ``lam`` (one
    fixed-point step; iterating it converges to the stationary point of
    ``sum_i gamma_i log C_i``).
    """
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(stats.p, dtype=float)
    wsum = gamma.sum()
    if not wsum > 0:
        warnings.warn("all inclusion probabilities are zero; slab hyperparameter left unchanged",
                      RuntimeWarning, stacklevel=2)
        return slab.lam
    lam = slab.lam
    if slab.family == GAUSSIAN:
        return float((gamma @ p) / (gamma @ np.asarray(stats.second_moment, dtype=float)))
    kappa = np.asarray(stats.kappa, dtype=float)
    if slab.family == LAPLACIAN:
        denom = gamma @ (np.sqrt(kappa) / lam + 1.0 / lam ** 2)
        return float(math.sqrt((gamma @ (p + 1.0)) / denom))
    nu = slab.nu
    denom = gamma @ ((nu + p) / (nu * lam ** 2 + kappa))
    return float(math.sqrt(wsum / denom))
