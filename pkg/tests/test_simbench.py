import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvssb.simbench import (PRESETS, CoefLaw, SimScenario, additive_components, aggregate_rows,
                            estimation_metrics, gen_additive, gen_linear, run_replications,
                            selection_metrics)


def _offdiag_mean(C, mask):
    return C[mask].mean()


def test_block_correlations_match_targets():
    sc = SimScenario(n=10_000, G=4, p_i=5, k=2, seed=3)
    X, *_ = gen_linear(sc)
    C = np.corrcoef(X, rowvar=False)
    labels = np.repeat(np.arange(4), 5)
    same = (labels[:, None] == labels[None, :]) & ~np.eye(20, dtype=bool)
    diff = labels[:, None] != labels[None, :]
    assert abs(_offdiag_mean(C, same) - 0.6) < 0.02
    assert abs(_offdiag_mean(C, diff) - 0.2) < 0.02
    assert np.max(np.abs(C[same] - 0.6)) < 0.05


def test_cholesky_path_for_other_structures():
    sc = SimScenario(n=20_000, G=3, p_i=2, k=1, within_rho=0.3, between_rho=0.5, seed=1)
    X, *_ = gen_linear(sc)
    C = np.corrcoef(X, rowvar=False)
    assert abs(C[0, 1] - 0.3) < 0.03 and abs(C[0, 2] - 0.5) < 0.03


def test_non_pd_covariance_rejected():
    with pytest.raises(ValueError, match="positive definite"):
        gen_linear(SimScenario(G=3, p_i=5, k=1, within_rho=-0.5, between_rho=0.0))


def test_snr_holds_exactly():
    X, y, theta, support, s2 = gen_linear(SimScenario(snr=1.7, seed=2))
    assert np.var(X @ theta, ddof=1) / s2 == pytest.approx(1.7, abs=1e-9)
    assert len(support) == 10 and len(set(support)) == 10
    nz = {j // 5 for j in np.flatnonzero(theta)}
    assert nz == set(support)
    assert np.all(np.abs(theta) <= 0.5)


def test_generation_is_deterministic():
    a = gen_linear(SimScenario(seed=11))
    b = gen_linear(SimScenario(seed=11))
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)
    c = gen_linear(SimScenario(seed=12))
    assert not np.array_equal(a[0], c[0])


def test_fixed_noise_scenario():
    *_, s2 = gen_linear(SimScenario(snr=None, noise_sd=1.0))
    assert s2 == 1.0


@pytest.mark.parametrize("kind, mean, var", [("gaussian", 0.0, 1.0), ("laplace", 0.0, 2.0),
                                             ("mixture", 0.0, 1.25), ("t", 0.0, 3.0)])
def test_coefficient_laws(kind, mean, var):
    x = CoefLaw(kind).draw(np.random.default_rng(0), 400_000)
    assert abs(x.mean() - mean) < 0.02
    assert x.var() == pytest.approx(var, rel=0.05 if kind != "t" else 0.15)


def test_scenario_validation():
    with pytest.raises(ValueError):
        SimScenario(k=300)
    with pytest.raises(ValueError):
        SimScenario(snr=-1)
    with pytest.raises(ValueError):
        CoefLaw("cauchy")


def test_compound_uniform_correlation():
    X, *_ = gen_additive(2, n=10_000, p=5, t=1.0, seed=0)
    assert abs(np.corrcoef(X[:, 0], X[:, 1])[0, 1] - 0.5) < 0.02


def test_independent_ar_covariates():
    # sd of each estimate is about 0.01 at this n, so only the four signal covariates are checked
    X, *_ = gen_additive(1, n=10_000, p=4, rho=0.0, seed=0)
    C = np.corrcoef(X, rowvar=False)
    assert np.max(np.abs(C[~np.eye(4, dtype=bool)])) < 0.02


def test_ar_covariance():
    X, *_ = gen_additive(1, n=20_000, p=4, rho=0.5, seed=1)
    C = np.corrcoef(X, rowvar=False)
    assert abs(C[0, 1] - 0.5) < 0.02 and abs(C[0, 2] - 0.25) < 0.02


def test_component_values():
    x = np.array([[0.0, 0.0, 0.0, 1.0]])
    np.testing.assert_allclose(additive_components(1, x)[0], [0.0, -1.0, 1.0, 3.0])
    x2 = np.array([[0.5, 0.5, 0.25, 0.0]])
    f = additive_components(2, x2)[0]
    np.testing.assert_allclose(f, [2.5, 0.0, 4.0, 6 * (0.2 + 0.4)], atol=1e-12)


def test_additive_truth_and_errors():
    X, y, truth, s2 = gen_additive(2, n=50, p=10, snr=0.5, seed=3)
    assert truth == frozenset({0, 1, 2, 3})
    f = additive_components(2, X).sum(axis=1)
    assert np.var(f, ddof=1) / s2 == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError, match="unknown additive example"):
        gen_additive(3)


def test_perfect_selection():
    m = selection_metrics({1, 5, 9, 20, 33}, {1, 5, 9, 20, 33}, 200)
    assert m.precision == m.recall == m.mcc == 1.0


def test_mcc_hand_value():
    # TP=2 FP=1 FN=3 TN=4 over G=10
    m = selection_metrics({0, 1, 2}, {0, 1, 3, 4, 5}, 10)
    c = m.counts
    assert (c.tp, c.fp, c.fn, c.tn) == (2, 1, 3, 4)
    assert m.mcc == pytest.approx((8 - 3) / math.sqrt(3 * 5 * 5 * 7), abs=1e-15)
    assert m.mcc == pytest.approx(0.2182, abs=1e-4)


def test_empty_selection_conventions():
    m = selection_metrics(set(), {1, 2}, 10)
    assert (m.precision, m.recall, m.mcc) == (0.0, 0.0, 0.0)


@settings(max_examples=80, deadline=None)
@given(st.sets(st.integers(0, 19)), st.sets(st.integers(0, 19)))
def test_mcc_range_and_identity(sel, tru):
    m = selection_metrics(sel, tru, 20)
    assert -1 - 1e-12 <= m.mcc <= 1 + 1e-12
    c = m.counts
    assert c.tp + c.fp + c.tn + c.fn == 20
    if 0 < len(tru) < 20:
        assert (abs(m.mcc - 1) < 1e-12) == (sel == tru)


def _fake_fit(theta, s2):
    return SimpleNamespace(theta_hat=lambda: np.asarray(theta, dtype=float), sigma_hat_sq=s2)


def test_exact_recovery_hits_log_floor():
    theta = np.array([0.0, 1.0, -2.0])
    m = estimation_metrics(_fake_fit(theta, 2.0), theta, 2.0)
    assert m.log_mse == -745.0
    assert m.sigma_rel_err == 0.0


def test_estimation_values_and_prediction():
    theta = np.array([1.0, 0.0, 0.0, 0.0])
    m = estimation_metrics(_fake_fit(np.zeros(4), 3.0), theta, 2.0,
                           test_data=(np.eye(4), np.array([1.0, 0.0, 0.0, 0.0])))
    assert m.log_mse == pytest.approx(math.log(0.25))
    assert m.sigma_rel_err == pytest.approx(0.5)
    assert m.pred_err == pytest.approx(0.25)


def test_mse_permutation_equivariant():
    rng = np.random.default_rng(0)
    est, true = rng.standard_normal(12), rng.standard_normal(12)
    perm = rng.permutation(12)
    a = estimation_metrics(_fake_fit(est, 1.0), true, 1.0).log_mse
    b = estimation_metrics(_fake_fit(est[perm], 1.0), true[perm], 1.0).log_mse
    assert a == pytest.approx(b, abs=1e-14)


def test_replications_deterministic_and_parallel_safe():
    kw = dict(n=60, G=15, k=3)
    a = run_replications("supp-table2", 2, seed=7, **kw)
    b = run_replications("supp-table2", 2, seed=7, **kw)
    c = run_replications("supp-table2", 2, seed=7, jobs=2, **kw)
    assert a == b == c
    assert a[0]["mcc"] != a[1]["mcc"] or a[0]["log_mse"] != a[1]["log_mse"]


def test_aggregate_rows():
    rows = [{"rep": 0, "seed": 1, "mcc": 0.5, "slab": "g"}, {"rep": 1, "seed": 1, "mcc": 0.7, "slab": "g"}]
    mean, se = aggregate_rows(rows)
    assert mean["rep"] == "mean" and mean["mcc"] == pytest.approx(0.6)
    assert se["mcc"] == pytest.approx(0.1)
    assert mean["slab"] == "g"


def test_presets_and_bad_overrides():
    assert PRESETS["supp-table2"]["scenario"].k == 10
    assert PRESETS["supp-table3"]["scenario"].k == 5
    with pytest.raises(ValueError):
        run_replications("supp-table2", 1, d=5)
    with pytest.raises(ValueError):
        run_replications("supp-table2", 0)
