import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvssb.slabs import (GroupStats, em_lambda_update, expected_alpha_sq, expected_inv_alpha_sq,
                         gamma_prior_term, gaussian_expected_log_h, log_norm_const, slab_moments)
from gvssb.types import SlabSpec

from oracles import golden_argmax, mixing_posterior_moments


def test_laplacian_precision_table_value():
    assert expected_alpha_sq(SlabSpec.laplacian(2.0), 4.0, 3) == pytest.approx(1.0, abs=1e-15)


def test_cauchy_precision_table_value():
    assert expected_alpha_sq(SlabSpec.cauchy(1.0), 3.0, 1) == pytest.approx(0.5, abs=1e-15)


def test_gaussian_precision_ignores_kappa():
    s = SlabSpec.gaussian(2.5)
    assert expected_alpha_sq(s, 1.0, 2) == expected_alpha_sq(s, 100.0, 2) == 2.5


def test_laplacian_zero_kappa_rejected():
    with pytest.raises(ValueError, match="kappa"):
        expected_alpha_sq(SlabSpec.laplacian(), 0.0, 2)


@pytest.mark.parametrize("kappa", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("p", [1, 3, 5])
@pytest.mark.parametrize("slab", ["laplacian", "t1", "t3"])
def test_moments_match_quadrature(kappa, lam, p, slab):
    spec = SlabSpec.laplacian(lam) if slab == "laplacian" else SlabSpec.student_t(float(slab[1:]), lam)
    family = "laplacian" if slab == "laplacian" else "t"
    log_c, e_a, e_inv, _ = mixing_posterior_moments(family, kappa, lam, p, spec.nu)
    assert expected_alpha_sq(spec, kappa, p) == pytest.approx(e_a, rel=1e-6)
    assert log_norm_const(spec, kappa, p) == pytest.approx(log_c, abs=1e-6)
    if np.isfinite(expected_inv_alpha_sq(spec, kappa, p)):
        assert expected_inv_alpha_sq(spec, kappa, p) == pytest.approx(e_inv, rel=1e-6)


def test_laplacian_log_c_unit_case():
    log_c, *_ = mixing_posterior_moments("laplacian", 1.0, 1.0, 1)
    assert log_norm_const(SlabSpec.laplacian(1.0), 1.0, 1) == pytest.approx(log_c, abs=1e-8)


def test_student_t_log_c_at_zero_kappa():
    nu, p, lam = 2.0, 2, 1.3
    a = nu * lam ** 2
    reduced = (math.lgamma((nu + p) / 2) - math.lgamma(nu / 2)
               + (nu / 2) * math.log(a / 2) - ((nu + p) / 2) * math.log(a / 2))
    got = log_norm_const(SlabSpec.student_t(nu, lam), 0.0, p)
    assert got == pytest.approx(reduced, abs=1e-12)
    log_c, *_ = mixing_posterior_moments("t", 0.0, lam, p, nu)
    assert got == pytest.approx(log_c, abs=1e-8)


@pytest.mark.parametrize("spec", [SlabSpec.laplacian(0.7), SlabSpec.cauchy(1.5),
                                  SlabSpec.student_t(4.0, 0.5)])
def test_log_c_decreasing_in_kappa(spec):
    vals = [log_norm_const(spec, k, 3) for k in np.linspace(0.05, 20, 60)]
    assert np.all(np.diff(vals) < 0)


def test_gaussian_has_no_normalizer():
    with pytest.raises(ValueError, match="no augmentation"):
        log_norm_const(SlabSpec.gaussian(), 1.0, 2)


def test_null_signal_gaussian_term_is_zero():
    assert gamma_prior_term(SlabSpec.gaussian(1.0), 0.0, 3, 0.0, 0.0) == 0.0


def test_nonfinite_input_rejected():
    with pytest.raises(ValueError):
        gamma_prior_term(SlabSpec.laplacian(), 1.0, 2, np.nan, 0.0)


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("slab", ["laplacian", "t"])
def test_table_form_equals_general_assembly(seed, slab):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 6))
    kappa, lam = rng.uniform(0.1, 8), rng.uniform(0.3, 3)
    nu = rng.uniform(0.5, 6) if slab == "t" else None
    spec = SlabSpec.laplacian(lam) if slab == "laplacian" else SlabSpec.student_t(nu, lam)
    logdet, quad = rng.uniform(-6, 1), rng.uniform(0, 20)
    log_c, e_a, *_ = mixing_posterior_moments(slab, kappa, lam, p, nu)
    general = 0.5 * (kappa * e_a + logdet + quad) + log_c
    assert gamma_prior_term(spec, kappa, p, logdet, quad) == pytest.approx(general, abs=1e-8)


def test_heavy_tail_limit_approaches_gaussian():
    lam, p, kappa, logdet, quad = 0.8, 3, 2.0, -1.2, 4.0
    target = gamma_prior_term(SlabSpec.gaussian(1 / lam ** 2), kappa, p, logdet, quad)
    errs = [abs(gamma_prior_term(SlabSpec.student_t(nu, lam), kappa, p, logdet, quad) - target)
            for nu in (1e2, 1e3, 1e4, 1e5)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-3


def test_slab_moments_bundle():
    m = slab_moments(SlabSpec.laplacian(2.0), 4.0, 2, -1.0, 3.0)
    assert m.e_alpha_sq == pytest.approx(1.0)
    assert m.log_C == pytest.approx(log_norm_const(SlabSpec.laplacian(2.0), 4.0, 2))
    assert slab_moments(SlabSpec.gaussian(), 1.0, 2, 0.0, 0.0).log_C == 0.0


def test_gaussian_expected_log_density_values():
    tau2 = 0.7
    s = SlabSpec.gaussian(1 / tau2)
    assert gaussian_expected_log_h(np.zeros(2), tau2 * np.eye(2), s) == pytest.approx(
        -math.log(2 * math.pi * tau2) - 1.0, abs=1e-12)
    x = np.array([1.0, 0.0])
    point = -math.log(2 * math.pi * tau2) - 0.5 * (x @ x) / tau2
    assert gaussian_expected_log_h(x, 1e-12 * np.eye(2), s) == pytest.approx(point, abs=1e-6)


def test_gaussian_quadratic_part_halves_with_doubled_variance():
    mu, S = np.array([1.0, -2.0]), np.diag([0.3, 0.2])

    def quad_part(tau2):
        const = -math.log(2 * math.pi * tau2)
        return gaussian_expected_log_h(mu, S, SlabSpec.gaussian(1 / tau2)) - const

    assert quad_part(2.0) == pytest.approx(0.5 * quad_part(1.0), rel=1e-12)
    with pytest.raises(ValueError):
        gaussian_expected_log_h(mu, S, SlabSpec.laplacian())


def test_gaussian_em_closed_form():
    got = em_lambda_update(SlabSpec.gaussian(), [1.0], GroupStats(np.array([2]),
                                                                   second_moment=np.array([3.0])))
    assert got == pytest.approx(2 / 3, abs=1e-15)


def _frozen_state(seed, G=6):
    rng = np.random.default_rng(seed)
    return (rng.uniform(0.05, 1.0, G), rng.integers(1, 6, G), rng.uniform(0.2, 9.0, G))


@pytest.mark.parametrize("family", ["laplacian", "t"])
@pytest.mark.parametrize("seed", range(3))
def test_iterated_em_matches_golden_section(family, seed):
    gamma, p, kappa = _frozen_state(seed)
    nu = 2.5 if family == "t" else None
    make = (lambda lam: SlabSpec.laplacian(lam)) if family == "laplacian" else \
        (lambda lam: SlabSpec.student_t(nu, lam))
    lam = 1.0
    for _ in range(5000):
        new = em_lambda_update(make(lam), gamma, GroupStats(p, kappa=kappa))
        if abs(new - lam) < 1e-14 * lam:
            break
        lam = new

    def objective(lam_):
        return sum(g * mixing_posterior_moments(family, k, lam_, int(pi), nu)[0]
                   for g, pi, k in zip(gamma, p, kappa))

    best = golden_argmax(objective, 0.5 * lam, 1.5 * lam)
    assert lam == pytest.approx(best, abs=1e-6)


@pytest.mark.parametrize("family", ["laplacian", "t"])
def test_single_em_step_maximizes_expected_log_mixing(family):
    from oracles import log_mixing_density
    gamma, p, kappa = _frozen_state(7)
    nu = 3.0 if family == "t" else None
    lam_old = 0.9
    spec = SlabSpec.laplacian(lam_old) if family == "laplacian" else SlabSpec.student_t(nu, lam_old)
    moments = [mixing_posterior_moments(family, k, lam_old, int(pi), nu)
               for pi, k in zip(p, kappa)]

    def objective(lam):
        # the mixing log-density is affine in (a, 1/a, log a), so plug in quadrature moments
        total = 0.0
        for g, pi, (_, e_a, e_inv, e_log) in zip(gamma, p, moments):
            if family == "laplacian":
                shape, scale = 0.5 * (pi + 1), 0.5 * lam ** 2
                total += g * (shape * math.log(scale) - math.lgamma(shape)
                              - (shape + 1) * e_log - scale * e_inv)
            else:
                shape, rate = 0.5 * nu, 0.5 * nu * lam ** 2
                total += g * (shape * math.log(rate) - math.lgamma(shape)
                              + (shape - 1) * e_log - rate * e_a)
        return total

    assert log_mixing_density(family, 1.3, 0.9, nu, 2) == pytest.approx(
        log_mixing_density(family, 1.3, 0.9, nu, 2))
    one_step = em_lambda_update(spec, gamma, GroupStats(p, kappa=kappa))
    assert one_step == pytest.approx(golden_argmax(objective, 0.5, 2.0), abs=1e-6)


def test_student_t_zero_kappa_hand_value():
    nu, lam_old, p = 3.0, 1.4, 2
    got = em_lambda_update(SlabSpec.student_t(nu, lam_old), [1.0],
                           GroupStats(np.array([p]), kappa=np.array([0.0])))
    assert got ** 2 == pytest.approx(lam_old ** 2 * nu / (nu + p), rel=1e-14)


def test_all_zero_gamma_warns_and_keeps_lambda():
    with pytest.warns(RuntimeWarning, match="unchanged"):
        got = em_lambda_update(SlabSpec.laplacian(1.7), np.zeros(3),
                               GroupStats(np.array([1, 2, 3]), kappa=np.ones(3)))
    assert got == 1.7


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1e-2, 1e2), st.integers(1, 20))
def test_laplacian_jensen_bound(kappa, lam, p):
    s = SlabSpec.laplacian(lam)
    assert expected_alpha_sq(s, kappa, p) * expected_inv_alpha_sq(s, kappa, p) >= 1.0 - 1e-12
