"""Centering/scaling convention and the ridge starting point for the means."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import GroupedDesign

DEFAULT_RIDGE_GRID = tuple(np.logspace(-4, 4, 50))


@dataclass(frozen=True)
class StandardizationInfo:
    """Affine map from raw columns (in block order) to standardized columns.

    A standardized column is ``(x - col_means[j]) / col_scales[j]`` where the
    scale is ``||x - mean|| / sqrt(n)``, giving ``||column|| = sqrt(n)``.
    """

    y_mean: float
    col_means: np.ndarray
    col_scales: np.ndarray

    def transform(self, matrix) -> np.ndarray:
        """Standardize an ``m x p`` matrix whose columns are in block order."""
        M = np.asarray(matrix, dtype=float)
        if M.ndim != 2 or M.shape[1] != self.col_means.shape[0]:
            raise ValueError(f"expected {self.col_means.shape[0]} columns, got shape {M.shape}")
        return (M - self.col_means) / self.col_scales

    def inverse(self, matrix) -> np.ndarray:
        return np.asarray(matrix, dtype=float) * self.col_scales + self.col_means

    def destandardize_coef(self, theta_std) -> tuple[np.ndarray, float]:
        """Coefficients and intercept on the raw scale for standardized ``theta_std``."""
        coef = np.asarray(theta_std, dtype=float) / self.col_scales
        intercept = self.y_mean - float(self.col_means @ coef)
        return coef, intercept


def standardize(raw_design: GroupedDesign, y) -> tuple[GroupedDesign, np.ndarray, StandardizationInfo]:
    """Center the response and center/rescale every column to norm ``sqrt(n)``."""
    y = np.asarray(y, dtype=float).ravel()
    n = raw_design.n
    if y.shape[0] != n:
        raise ValueError(f"y has {y.shape[0]} entries, design has {n} rows")
    X = raw_design.matrix
    means = X.mean(axis=0)
    Xc = X - means
    scales = np.sqrt((Xc ** 2).sum(axis=0) / n)
    ref = np.maximum(np.abs(X).max(axis=0), 1.0) if X.size else np.ones(0)
    const = np.flatnonzero(scales <= 1e-12 * ref)
    if const.size:
        j = int(const[0])
        raise ValueError(f"constant column {raw_design.column_names[j]!r}; "
                         "drop it before fitting")
    Z = Xc / scales
    blocks = [Z[:, raw_design.offsets[i]:raw_design.offsets[i + 1]] for i in range(raw_design.G)]
    design = raw_design.with_blocks(blocks)
    y_mean = float(y.mean())
    return design, y - y_mean, StandardizationInfo(y_mean, means, scales)


def _fold_slices(n: int, folds: int, seed: int) -> list:
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def ridge_path(X, y, grid) -> np.ndarray:
    """Ridge solutions ``(X'X + lam I)^{-1} X'y`` for every ``lam`` in ``grid``.

    Uses the thin SVD, which covers both the ``p <= n`` and ``p > n`` cases.
    Returns an array of shape ``(len(grid), p)``.
    """
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    uty = U.T @ y
    grid = np.asarray(grid, dtype=float)
    shrink = s[None, :] / (s[None, :] ** 2 + grid[:, None])
    return (shrink * uty[None, :]) @ Vt


def ridge_cv_errors(X, y, folds: int, grid, seed: int) -> np.ndarray:
    """Mean held-out squared error for each grid value."""
    n = X.shape[0]
    err = np.zeros(len(grid))
    for test in _fold_slices(n, folds, seed):
        train = np.setdiff1d(np.arange(n), test, assume_unique=True)
        coefs = ridge_path(X[train], y[train], grid)
        pred = coefs @ X[test].T
        err += ((pred - y[test][None, :]) ** 2).sum(axis=1)
    return err / n


def ridge_init(design: GroupedDesign, y, folds: int = 10, grid=DEFAULT_RIDGE_GRID,
               seed: int = 0, return_penalty: bool = False):
    """Ridge estimate at the penalty with the smallest ``folds``-fold CV error.

    Fold membership is a seeded random permutation cut into contiguous
    slices, so the result is deterministic given ``seed``.
    """
    y = np.asarray(y, dtype=float)
    n = design.n
    if folds < 2:
        raise ValueError("folds must be at least 2")
    if n < folds:
        raise ValueError(f"n = {n} is smaller than the number of folds ({folds})")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("grid must be a nonempty list of positive penalties")
    X = design.matrix
    err = ridge_cv_errors(X, y, folds, grid, seed)
    best = float(grid[int(np.argmin(err))])
    mu0 = ridge_path(X, y, [best])[0]
    if return_penalty:
        return mu0, best
    return mu0
