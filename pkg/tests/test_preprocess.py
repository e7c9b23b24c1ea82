import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvssb.preprocess import (DEFAULT_RIDGE_GRID, ridge_cv_errors, ridge_init, ridge_path,
                              standardize)
from gvssb.types import make_grouped_design


def test_three_point_column_hand_value():
    d, yc, info = standardize(make_grouped_design(np.array([[1.0], [2.0], [3.0]]), ["a"]),
                              np.array([1.0, 2.0, 6.0]))
    s = np.sqrt(1.5)
    np.testing.assert_allclose(d.blocks[0][:, 0], [-s, 0.0, s], rtol=1e-12)
    assert yc.mean() == pytest.approx(0.0, abs=1e-15)
    assert info.y_mean == pytest.approx(3.0)


def test_constant_column_named_in_error():
    X = np.column_stack([np.arange(4.0), np.full(4, 5.0)])
    with pytest.raises(ValueError, match="constant column 'b'"):
        standardize(make_grouped_design(X, ["g", "g"], column_names=["a", "b"]), np.arange(4.0))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 30), st.integers(1, 8))
def test_standardized_columns(seed, n, p):
    rng = np.random.default_rng(seed)
    X = rng.normal(3.0, 5.0, (n, p))
    d, yc, info = standardize(make_grouped_design(X, np.arange(p) % 3), rng.standard_normal(n))
    M = d.matrix
    assert np.all(np.abs(M.mean(axis=0)) < 1e-10)
    np.testing.assert_allclose(np.linalg.norm(M, axis=0), np.sqrt(n), rtol=1e-10)
    assert abs(yc.mean()) < 1e-10
    raw = X[:, d.column_order]
    np.testing.assert_allclose(info.transform(raw), M, atol=1e-10)
    np.testing.assert_allclose(info.inverse(M), raw, atol=1e-10)


def test_standardize_is_idempotent():
    rng = np.random.default_rng(2)
    d, yc, _ = standardize(make_grouped_design(rng.standard_normal((20, 4)), [0, 0, 1, 1]),
                           rng.standard_normal(20))
    d2, yc2, _ = standardize(d, yc)
    np.testing.assert_allclose(d2.matrix, d.matrix, atol=1e-12)
    np.testing.assert_allclose(yc2, yc, atol=1e-12)


def test_destandardized_coefficients_reproduce_predictions():
    rng = np.random.default_rng(4)
    X = rng.normal(1.0, 3.0, (30, 5))
    y = rng.standard_normal(30)
    d, _, info = standardize(make_grouped_design(X, [0, 0, 1, 1, 2]), y)
    theta = rng.standard_normal(5)
    coef, b0 = info.destandardize_coef(theta)
    np.testing.assert_allclose(b0 + X[:, d.column_order] @ coef, info.y_mean + d.matrix @ theta,
                               atol=1e-10)


def _ridge_design(n=40, p=6, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = X @ rng.standard_normal(p) + rng.standard_normal(n)
    return make_grouped_design(X, np.arange(p)), y


def test_huge_penalty_shrinks_to_zero():
    d, y = _ridge_design()
    ols = np.linalg.lstsq(d.matrix, y, rcond=None)[0]
    mu = ridge_init(d, y, grid=[1e12])
    assert np.linalg.norm(mu) < 1e-6 * np.linalg.norm(ols)


def test_orthogonal_design_closed_form():
    n, p = 40, 4
    Q, _ = np.linalg.qr(np.random.default_rng(5).standard_normal((n, p)))
    X = Q * np.sqrt(n)
    y = np.random.default_rng(6).standard_normal(n)
    d = make_grouped_design(X, [0, 0, 1, 1])
    mu, lam = ridge_init(d, y, grid=DEFAULT_RIDGE_GRID, return_penalty=True)
    np.testing.assert_allclose(mu, X.T @ y / (n + lam), atol=1e-10)
    assert lam in DEFAULT_RIDGE_GRID


def test_chosen_penalty_minimizes_cv_error():
    d, y = _ridge_design(seed=3)
    grid = np.logspace(-3, 3, 13)
    mu, lam = ridge_init(d, y, folds=5, grid=grid, seed=9, return_penalty=True)
    err = ridge_cv_errors(d.matrix, y, 5, grid, 9)
    assert lam == grid[int(np.argmin(err))]
    np.testing.assert_allclose(mu, np.linalg.solve(d.matrix.T @ d.matrix + lam * np.eye(6),
                                                   d.matrix.T @ y), atol=1e-10)


def test_ridge_path_wide_matrix_matches_normal_equations():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((10, 30))
    y = rng.standard_normal(10)
    got = ridge_path(X, y, [0.5])[0]
    np.testing.assert_allclose(got, np.linalg.solve(X.T @ X + 0.5 * np.eye(30), X.T @ y),
                               atol=1e-10)


def test_ridge_deterministic_and_permutation_equivariant():
    d, y = _ridge_design(seed=11)
    a = ridge_init(d, y, seed=4)
    np.testing.assert_array_equal(a, ridge_init(d, y, seed=4))
    perm = np.array([3, 1, 5, 0, 2, 4])
    d2 = make_grouped_design(d.matrix[:, perm], np.arange(6))
    np.testing.assert_allclose(ridge_init(d2, y, seed=4), a[perm], atol=1e-10)


def test_ridge_errors():
    d, y = _ridge_design(n=8)
    with pytest.raises(ValueError, match="smaller than"):
        ridge_init(d, y, folds=10)
    with pytest.raises(ValueError):
        ridge_init(d, y, folds=1)
    with pytest.raises(ValueError):
        ridge_init(d, y, folds=2, grid=[])
