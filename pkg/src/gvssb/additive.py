"""B-spline front end for sparse additive regression.

Each covariate ``x_j`` is expanded into ``d`` B-spline columns, which become
one group.  Columns are centered on the training data (so every fitted
component sums to zero there) and rescaled to norm ``sqrt(n)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cavi, kernels
from .preprocess import StandardizationInfo, _fold_slices, standardize
from .types import FitConfig, FitResult, GroupedDesign, Hyperparams, SlabSpec


@dataclass(frozen=True)
class BasisInfo:
    """Everything needed to rebuild the training expansion on new rows.

    ``knots[j]`` holds the interior knots of covariate ``j``, ``boundary[j]``
    its training ``(min, max)``; ``centering_offsets`` and ``col_scales`` are
    ``p x d`` arrays applied to the raw basis.
    """

    d: int
    degree: int
    knots: tuple
    boundary: np.ndarray
    centering_offsets: np.ndarray
    col_scales: np.ndarray
    covariate_names: tuple

    @property
    def n_covariates(self) -> int:
        return len(self.knots)

    def transform(self, X) -> np.ndarray:
        """``m x (p d)`` expanded, centered and scaled matrix for raw covariates ``X``."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_covariates:
            raise ValueError(f"expected {self.n_covariates} covariate columns, got shape {X.shape}")
        out = np.empty((X.shape[0], self.n_covariates * self.d))
        for j in range(self.n_covariates):
            B = bspline_basis(X[:, j], self.d, self.degree, self.knots[j], self.boundary[j])
            out[:, j * self.d:(j + 1) * self.d] = (B - self.centering_offsets[j]) / self.col_scales[j]
        return out

    def to_dict(self) -> dict:
        return {"d": self.d, "degree": self.degree,
                "knots": [list(map(float, k)) for k in self.knots],
                "boundary": self.boundary.tolist(),
                "centering_offsets": self.centering_offsets.tolist(),
                "col_scales": self.col_scales.tolist(),
                "covariate_names": list(self.covariate_names)}

    @classmethod
    def from_dict(cls, doc: dict) -> "BasisInfo":
        return cls(int(doc["d"]), int(doc["degree"]),
                   tuple(np.asarray(k, dtype=float) for k in doc["knots"]),
                   np.asarray(doc["boundary"], dtype=float),
                   np.asarray(doc["centering_offsets"], dtype=float),
                   np.asarray(doc["col_scales"], dtype=float),
                   tuple(doc["covariate_names"]))


def default_degree(d: int) -> int:
    return min(3, d - 1)


def clamped_knot_vector(interior, degree: int, lo: float, hi: float) -> np.ndarray:
    interior = np.asarray(interior, dtype=float)
    return np.concatenate([np.full(degree + 1, lo), interior, np.full(degree + 1, hi)])


def bspline_basis(x, d: int, degree: int, knots, boundary=None) -> np.ndarray:
    """Raw (uncentered) ``n x d`` B-spline basis of ``x``.

    Parameters
    ----------
    x : array_like
        Evaluation points.  Points outside ``boundary`` are clamped to it.
    d : int
        Number of basis functions.
    degree : int
        Spline degree; lowered to ``d - 1`` when ``d`` is too small for it.
    knots : array_like
        Interior knots, ``d - degree - 1`` of them.
    boundary : (float, float), optional
        Outer knots; defaults to the range of ``x``.

    Returns
    -------
    ndarray
        Rows sum to one.
    """
    x = np.asarray(x, dtype=float).ravel()
    if np.isnan(x).any():
        raise ValueError("x contains NaN")
    if d < 2:
        raise ValueError("d must be at least 2")
    if degree < 1:
        raise ValueError("degree must be at least 1")
    degree = min(degree, d - 1)
    knots = np.sort(np.asarray(knots, dtype=float).ravel())
    if knots.size != d - degree - 1:
        raise ValueError(f"need {d - degree - 1} interior knots for d={d}, degree={degree}; "
                         f"got {knots.size}")
    if boundary is None:
        lo, hi = float(x.min()), float(x.max())
    else:
        lo, hi = float(boundary[0]), float(boundary[1])
    if not hi > lo:
        raise ValueError("boundary must have positive width")
    if knots.size and (knots[0] < lo or knots[-1] > hi):
        raise ValueError("interior knots must lie inside the boundary")
    t = clamped_knot_vector(knots, degree, lo, hi)
    out = np.empty((x.shape[0], d))
    kernels.bspline_rows(np.clip(x, lo, hi), t, degree, d, out)
    return out


def quantile_knots(x, d: int, degree: int) -> np.ndarray:
    m = d - degree - 1
    if m <= 0:
        return np.zeros(0)
    return np.quantile(x, np.linspace(0.0, 1.0, m + 2)[1:-1])


def expand_additive(X, d: int, degree: int | None = None,
                    covariate_names=None) -> tuple[GroupedDesign, BasisInfo]:
    """Expand every covariate into a centered, scaled group of ``d`` spline columns."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D array")
    n, p = X.shape
    if d < 2:
        raise ValueError("d must be at least 2")
    if n <= d:
        raise ValueError(f"need more rows than basis functions (n={n}, d={d})")
    if np.isnan(X).any():
        raise ValueError("X contains NaN")
    names = tuple(covariate_names) if covariate_names is not None else \
        tuple(f"x{j + 1}" for j in range(p))
    if len(names) != p:
        raise ValueError("covariate_names has the wrong length")
    degree = default_degree(d) if degree is None else min(int(degree), d - 1)

    blocks, knots, bounds, offsets, scales = [], [], [], [], []
    for j in range(p):
        x = X[:, j]
        if np.unique(x).size < d:
            raise ValueError(f"covariate {names[j]!r} has fewer than d={d} distinct values")
        lo, hi = float(x.min()), float(x.max())
        kn = quantile_knots(x, d, degree)
        B = bspline_basis(x, d, degree, kn, (lo, hi))
        off = B.mean(axis=0)
        Bc = B - off
        sc = np.sqrt((Bc ** 2).sum(axis=0) / n)
        if np.any(sc <= 1e-12):
            raise ValueError(f"covariate {names[j]!r} gives a basis column with no variation; "
                             "try a smaller d")
        blocks.append(Bc / sc)
        knots.append(kn)
        bounds.append((lo, hi))
        offsets.append(off)
        scales.append(sc)

    col_names = [f"{nm}.b{k + 1}" for nm in names for k in range(d)]
    design = GroupedDesign(blocks, list(names), column_names=col_names)
    info = BasisInfo(d, degree, tuple(knots), np.asarray(bounds), np.asarray(offsets),
                     np.asarray(scales), names)
    return design, info


def fit_additive(X, y, d: int, slab: SlabSpec, hyper: Hyperparams | None = None,
                 config: FitConfig | None = None, degree: int | None = None,
                 covariate_names=None) -> tuple[FitResult, BasisInfo, StandardizationInfo]:
    design, info = expand_additive(X, d, degree, covariate_names)
    std_design, yc, std = standardize(design, y)
    return cavi.fit(std_design, yc, slab, hyper, config), info, std


def predict_additive(fit, info: BasisInfo, std: StandardizationInfo, X_new) -> np.ndarray:
    """Plug-in prediction ``y_mean + sum_j gamma_j B_j(X_new) mu_j``.

    ``fit`` is a :class:`FitResult` or the standardized ``gamma * mu`` vector itself.
    """
    theta = fit.theta_hat() if isinstance(fit, FitResult) else np.asarray(fit, dtype=float)
    Z = std.transform(info.transform(X_new))
    return std.y_mean + Z @ theta


def kfold_prediction_error(X, y, d: int, slab: SlabSpec, folds: int = 10, seed: int = 0,
                           config: FitConfig | None = None, degree: int | None = None) -> float:
    """Mean squared held-out error of the additive fit over ``folds`` seeded folds."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    sq = 0.0
    for test in _fold_slices(n, folds, seed):
        train = np.setdiff1d(np.arange(n), test, assume_unique=True)
        res, info, std = fit_additive(X[train], y[train], d, slab, config=config, degree=degree)
        sq += float(((predict_additive(res, info, std, X[test]) - y[test]) ** 2).sum())
    return sq / n


def select_slab(X, y, d: int, slabs, folds: int = 10, seed: int = 0,
                config: FitConfig | None = None) -> tuple[SlabSpec, dict]:
    """Slab with the smallest k-fold prediction error, plus all the errors."""
    errors = {}
    for s in slabs:
        key = s.family if s.nu is None else f"{s.family}(nu={s.nu:g})"
        errors[key] = kfold_prediction_error(X, y, d, s, folds, seed, config)
    best = min(range(len(slabs)), key=lambda k: list(errors.values())[k])
    return slabs[best], errors
