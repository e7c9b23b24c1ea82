"""Shared data model: grouped designs, slab choices, variational state, fit results."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Hashable, Sequence

import numpy as np

GAUSSIAN = "gaussian"
LAPLACIAN = "laplacian"
STUDENT_T = "t"
FAMILIES = (GAUSSIAN, LAPLACIAN, STUDENT_T)
FAMILY_CODES = {GAUSSIAN: 0, LAPLACIAN: 1, STUDENT_T: 2}


@dataclass(eq=False)
class GroupedDesign:
    """Dense design matrix partitioned into column blocks.

    Blocks are kept both as a list of ``n x p_i`` matrices and as a packed
    transposed copy ``xt`` (``p x n``, C-contiguous) so the CAVI kernels can
    address group ``i`` as ``xt[offsets[i]:offsets[i+1]]`` without copies.
    """

    blocks: list
    group_names: list
    column_names: list | None = None
    column_order: np.ndarray | None = None
    grams: list | None = None

    def __post_init__(self):
        self.blocks = [np.ascontiguousarray(b, dtype=float) for b in self.blocks]
        for b in self.blocks:
            if b.ndim != 2 or b.shape[1] < 1:
                raise ValueError("every block must be a 2-D matrix with at least one column")
        if len(self.group_names) != len(self.blocks):
            raise ValueError("group_names and blocks differ in length")
        if self.blocks:
            n = self.blocks[0].shape[0]
            if any(b.shape[0] != n for b in self.blocks):
                raise ValueError("all blocks must have the same number of rows")
        if self.grams is None:
            self.grams = [b.T @ b for b in self.blocks]
        sizes = np.array([b.shape[1] for b in self.blocks], dtype=np.int64)
        self.sizes = sizes
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.sq_offsets = np.concatenate([[0], np.cumsum(sizes ** 2)]).astype(np.int64)
        n = self.n
        if self.blocks:
            self.xt = np.ascontiguousarray(np.hstack(self.blocks).T)
            self.grams_flat = np.concatenate([g.ravel() for g in self.grams])
        else:
            self.xt = np.zeros((0, n))
            self.grams_flat = np.zeros(0)
        if self.column_names is None:
            self.column_names = [f"{g}[{k}]" for g, b in zip(self.group_names, self.blocks)
                                 for k in range(b.shape[1])]
        if self.column_order is None:
            self.column_order = np.arange(self.p)
        self._n = n

    @property
    def n(self) -> int:
        if self.blocks:
            return self.blocks[0].shape[0]
        return getattr(self, "_n", 0)

    @property
    def G(self) -> int:
        return len(self.blocks)

    @property
    def p(self) -> int:
        return int(self.sizes.sum())

    @property
    def matrix(self) -> np.ndarray:
        """Full ``n x p`` matrix with columns in block order."""
        return self.xt.T

    def op_norm_sq(self) -> np.ndarray:
        """Largest eigenvalue of each block Gram matrix."""
        return np.array([np.linalg.eigvalsh(g)[-1] for g in self.grams])

    def with_blocks(self, blocks) -> "GroupedDesign":
        return GroupedDesign(list(blocks), list(self.group_names),
                             column_names=list(self.column_names),
                             column_order=self.column_order.copy())

    @classmethod
    def empty(cls, n: int) -> "GroupedDesign":
        d = cls([], [])
        d._n = n
        d.xt = np.zeros((0, n))
        return d


def make_grouped_design(matrix, group_labels: Sequence[Hashable],
                        column_names: Sequence[str] | None = None) -> GroupedDesign:
    """Partition the columns of ``matrix`` into groups.

    Groups are ordered by first appearance of their label; inside a group the
    original column order is kept.  No centering or scaling happens here.
    """
    try:
        X = np.asarray(matrix, dtype=float)
    except ValueError as exc:
        raise ValueError(f"ragged or non-numeric matrix: {exc}") from None
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    n, p = X.shape
    if n < 2:
        raise ValueError(f"need at least 2 rows, got {n}")
    labels = list(group_labels)
    if not labels:
        raise ValueError("group_labels is empty")
    if len(labels) != p:
        raise ValueError(f"{len(labels)} group labels for {p} columns")
    if column_names is None:
        column_names = [f"x{j + 1}" for j in range(p)]
    elif len(column_names) != p:
        raise ValueError(f"{len(column_names)} column names for {p} columns")

    members: dict = {}
    for j, g in enumerate(labels):
        if g is None or (isinstance(g, str) and not g.strip()):
            raise ValueError(f"column {j} has an empty group label")
        members.setdefault(g, []).append(j)
    names = list(members)
    order = np.array([j for g in names for j in members[g]], dtype=np.int64)
    blocks = [X[:, members[g]] for g in names]
    return GroupedDesign(blocks, [str(g) for g in names],
                         column_names=[column_names[j] for j in order],
                         column_order=order)


@dataclass(frozen=True)
class SlabSpec:
    """Slab family and its hyperparameters.

    ``lam`` is the slab precision for the Gaussian family, the inverse scale
    of the multi-Laplacian, and the scale of the multivariate t.  Cauchy is
    stored as ``StudentT(nu=1)``.
    """

    family: str
    lam: float = 1.0
    nu: float | None = None

    def __post_init__(self):
        fam = self.family.lower()
        if fam in ("student_t", "studentt", "student-t"):
            fam = STUDENT_T
        if fam == "cauchy":
            fam = STUDENT_T
            if self.nu not in (None, 1, 1.0):
                raise ValueError("the Cauchy slab has nu = 1")
            object.__setattr__(self, "nu", 1.0)
        if fam not in FAMILIES:
            raise ValueError(f"unknown slab family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if fam == STUDENT_T:
            if self.nu is None or not self.nu > 0:
                raise ValueError("the t slab needs nu > 0")
            object.__setattr__(self, "nu", float(self.nu))
        else:
            object.__setattr__(self, "nu", None)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def hierarchical(self) -> bool:
        return self.family != GAUSSIAN

    @property
    def code(self) -> int:
        return FAMILY_CODES[self.family]

    def with_lambda(self, lam: float) -> "SlabSpec":
        return replace(self, lam=float(lam))

    @classmethod
    def gaussian(cls, lam=1.0):
        return cls(GAUSSIAN, lam)

    @classmethod
    def laplacian(cls, lam=1.0):
        return cls(LAPLACIAN, lam)

    @classmethod
    def student_t(cls, nu, lam=1.0):
        return cls(STUDENT_T, lam, nu)

    @classmethod
    def cauchy(cls, lam=1.0):
        return cls(STUDENT_T, lam, 1.0)


@dataclass
class Hyperparams:
    """Tunable prior settings: slab ``lam``, inclusion probability ``w``, and
    the Inverse-Gamma(shape, scale) prior on the noise variance (0, 0 gives
    the improper ``1/sigma^2`` prior)."""

    lam: float = 1.0
    w: float = 0.5
    alpha_sigma: float = 0.0
    beta_sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.w < 1.0:
            raise ValueError(f"w must lie in (0, 1), got {self.w}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.alpha_sigma < 0 or self.beta_sigma < 0:
            raise ValueError("alpha_sigma and beta_sigma must be nonnegative")


@dataclass
class VariationalState:
    """Mean-field parameters, stored packed.

    ``mu_flat`` holds the concatenated group means and ``sigma_flat`` the
    row-major concatenation of the group covariance matrices; ``mu`` and
    ``sigma_mat`` give per-group views into them.  ``logdet`` caches
    ``log|Sigma_i|``.
    """

    gamma: np.ndarray
    mu_flat: np.ndarray
    sigma_flat: np.ndarray
    kappa: np.ndarray
    logdet: np.ndarray
    v: float
    sigma_tilde_sq: float
    residual: np.ndarray
    offsets: np.ndarray = field(repr=False)
    sq_offsets: np.ndarray = field(repr=False)

    @property
    def G(self) -> int:
        return len(self.gamma)

    @property
    def mu(self) -> list:
        o = self.offsets
        return [self.mu_flat[o[i]:o[i + 1]] for i in range(self.G)]

    @property
    def sigma_mat(self) -> list:
        o, s = self.offsets, self.sq_offsets
        return [self.sigma_flat[s[i]:s[i + 1]].reshape(o[i + 1] - o[i], o[i + 1] - o[i])
                for i in range(self.G)]

    def theta_hat(self) -> np.ndarray:
        """Posterior mean of the coefficients, ``gamma_i * mu_i`` per group."""
        sizes = np.diff(self.offsets)
        return self.mu_flat * np.repeat(self.gamma, sizes)

    def copy(self) -> "VariationalState":
        return VariationalState(self.gamma.copy(), self.mu_flat.copy(), self.sigma_flat.copy(),
                                self.kappa.copy(), self.logdet.copy(), float(self.v),
                                float(self.sigma_tilde_sq), self.residual.copy(),
                                self.offsets, self.sq_offsets)


@dataclass
class FitConfig:
    """Stopping rule and run options.

    ``sigma_update`` is ``"gated"`` (refresh the noise factor only once the
    entropy change is below ``eps_h``), ``"always"``, or ``"fixed"`` (keep
    ``sigma2_fixed``; used for conjugate checks).  ``init`` is ``"ridge"`` or
    ``"zeros"``.
    """

    eps_h: float = 1e-3
    eps_sigma: float = 1e-3
    max_iter: int = 500
    em_enabled: bool = True
    selection_threshold: float = 0.5
    rng_seed: int = 0
    init: str = "ridge"
    ridge_folds: int = 10
    ridge_grid: tuple | None = None
    sigma_update: str = "gated"
    sigma2_fixed: float | None = None

    def __post_init__(self):
        if not (self.eps_h > 0 and self.eps_sigma > 0):
            raise ValueError("eps_h and eps_sigma must be positive")
        if not 0 < self.selection_threshold < 1:
            raise ValueError("selection_threshold must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if self.sigma_update not in ("gated", "always", "fixed"):
            raise ValueError(f"unknown sigma_update mode {self.sigma_update!r}")
        if self.sigma_update == "fixed" and not (self.sigma2_fixed and self.sigma2_fixed > 0):
            raise ValueError("sigma_update='fixed' needs a positive sigma2_fixed")
        if self.init not in ("ridge", "zeros"):
            raise ValueError(f"unknown init policy {self.init!r}")


@dataclass(frozen=True)
class FitResult:
    state: VariationalState
    selected: tuple
    sigma_hat_sq: float
    elbo_trace: tuple
    hyper_trace: tuple
    iterations: int
    converged: bool
    slab: SlabSpec
    hyper: Hyperparams
    sweep_trace: tuple = ()

    @property
    def gamma(self) -> np.ndarray:
        return self.state.gamma

    def theta_hat(self) -> np.ndarray:
        return self.state.theta_hat()


@dataclass(frozen=True)
class StateDiagnostics:
    max_residual_drift: float
    min_sigma_eig: float
    gamma_violations: tuple
    sigma_tilde_mismatch: float

    @property
    def ok(self) -> bool:
        return (not self.gamma_violations and self.min_sigma_eig > 0
                and self.max_residual_drift < 1e-8)


def validate_state(state: VariationalState, design: GroupedDesign, y,
                   hyper: Hyperparams | None = None) -> StateDiagnostics:
    """Consistency report for a variational state.

    Reports the sup-norm drift between the stored residual and a fresh
    ``y - sum_j gamma_j X_j mu_j``, the smallest eigenvalue over all
    ``Sigma_i``, the indices with ``gamma`` outside ``[0, 1]``, and (when
    ``hyper`` is given) how far ``sigma_tilde_sq`` is from ``(v/2+beta)/(n/2+alpha)``.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (design.n,):
        raise ValueError(f"y has shape {y.shape}, expected ({design.n},)")
    if state.G != design.G or state.mu_flat.shape[0] != design.p:
        raise ValueError("state and design dimensions disagree")
    if state.residual.shape != (design.n,):
        raise ValueError("residual length does not match n")
    fitted = design.matrix @ state.theta_hat() if design.G else np.zeros(design.n)
    drift = float(np.max(np.abs(state.residual - (y - fitted)))) if design.n else 0.0
    min_eig = min((float(np.linalg.eigvalsh(S)[0]) for S in state.sigma_mat), default=np.inf)
    bad = tuple(int(i) for i in np.flatnonzero((state.gamma < 0) | (state.gamma > 1)))
    mismatch = 0.0
    if hyper is not None:
        target = (state.v / 2 + hyper.beta_sigma) / (design.n / 2 + hyper.alpha_sigma)
        mismatch = abs(state.sigma_tilde_sq - target)
    return StateDiagnostics(drift, min_eig, bad, mismatch)
