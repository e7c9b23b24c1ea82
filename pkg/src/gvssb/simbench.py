"""Simulation scenarios and evaluation metrics for grouped and additive regression."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import cavi
from .additive import fit_additive, predict_additive
from .preprocess import StandardizationInfo, standardize
from .types import FitConfig, FitResult, SlabSpec, make_grouped_design

LOG_FLOOR = -745.0


@dataclass(frozen=True)
class CoefLaw:
    """Distribution of the nonzero coefficients.

    ``kind`` is one of ``uniform`` (on ``[low, high]``), ``laplace``,
    ``gaussian``, ``mixture`` (``0.5 N(-1, 0.25) + 0.5 N(1, 0.25)``) or
    ``t`` (with ``df`` degrees of freedom).  ``scale`` multiplies the unit
    laws.
    """

    kind: str = "uniform"
    low: float = -0.5
    high: float = 0.5
    scale: float = 1.0
    df: float = 3.0

    def __post_init__(self):
        if self.kind not in ("uniform", "laplace", "gaussian", "mixture", "t"):
            raise ValueError(f"unknown coefficient law {self.kind!r}")
        if self.kind == "uniform" and not self.high > self.low:
            raise ValueError("uniform law needs high > low")
        if self.scale <= 0 or self.df <= 0:
            raise ValueError("scale and df must be positive")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size)
        if self.kind == "laplace":
            return self.scale * rng.laplace(0.0, 1.0, size)
        if self.kind == "gaussian":
            return self.scale * rng.standard_normal(size)
        if self.kind == "mixture":
            sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
            return self.scale * (sign + 0.5 * rng.standard_normal(size))
        return self.scale * rng.standard_t(self.df, size)


@dataclass(frozen=True)
class SimScenario:
    """Grouped linear-regression scenario.

    Features are ``N(0, Sigma)`` with unit variances, correlation
    ``within_rho`` inside a group and ``between_rho`` across groups.  The
    noise variance is ``Var(X theta*) / snr`` (sample variance), or
    ``noise_sd**2`` when ``snr`` is None.
    """

    n: int = 200
    G: int = 200
    p_i: int = 5
    k: int = 10
    within_rho: float = 0.6
    between_rho: float = 0.2
    snr: float | None = 2.5
    coef_law: CoefLaw = field(default_factory=CoefLaw)
    seed: int = 0
    noise_sd: float | None = None

    def __post_init__(self):
        if min(self.n, self.G, self.p_i) < 1 or self.n < 2:
            raise ValueError("n, G and p_i must be positive (n >= 2)")
        if not 0 <= self.k <= self.G:
            raise ValueError(f"k must lie in [0, G], got {self.k}")
        if self.snr is None and self.noise_sd is None:
            raise ValueError("give either snr or noise_sd")
        if self.snr is not None and not self.snr > 0:
            raise ValueError("snr must be positive")
        if self.noise_sd is not None and not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")
        if not (-1 < self.within_rho < 1 and -1 < self.between_rho < 1):
            raise ValueError("correlations must lie in (-1, 1)")

    @property
    def p(self) -> int:
        return self.G * self.p_i

    def covariance(self) -> np.ndarray:
        labels = np.repeat(np.arange(self.G), self.p_i)
        same = labels[:, None] == labels[None, :]
        S = np.where(same, self.within_rho, self.between_rho)
        np.fill_diagonal(S, 1.0)
        return S


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass(frozen=True)
class SelectionMetrics:
    precision: float
    recall: float
    mcc: float
    counts: ConfusionCounts


@dataclass(frozen=True)
class EstimationMetrics:
    log_mse: float
    sigma_rel_err: float
    pred_err: float | None = None


def _features(sc: SimScenario, rng: np.random.Generator) -> np.ndarray:
    n, G, p_i = sc.n, sc.G, sc.p_i
    a, b = sc.within_rho, sc.between_rho
    if 0 <= b <= a < 1:
        # shared factor + group factor + idiosyncratic noise gives the exact covariance
        z0 = rng.standard_normal((n, 1))
        zg = np.repeat(rng.standard_normal((n, G)), p_i, axis=1)
        eps = rng.standard_normal((n, G * p_i))
        return math.sqrt(b) * z0 + math.sqrt(a - b) * zg + math.sqrt(1 - a) * eps
    try:
        L = np.linalg.cholesky(sc.covariance())
    except np.linalg.LinAlgError as exc:
        raise ValueError("feature covariance is not positive definite") from exc
    return rng.standard_normal((n, G * p_i)) @ L.T


def gen_linear(sc: SimScenario, rng: np.random.Generator | None = None):
    """Draw ``(X, y, theta*, support, sigma2*)``; support indices are 0-based."""
    rng = np.random.default_rng(sc.seed) if rng is None else rng
    X = _features(sc, rng)
    support = np.sort(rng.choice(sc.G, size=sc.k, replace=False))
    theta = np.zeros(sc.p)
    for g in support:
        theta[g * sc.p_i:(g + 1) * sc.p_i] = sc.coef_law.draw(rng, sc.p_i)
    signal = X @ theta
    if sc.snr is not None:
        sigma2 = float(np.var(signal, ddof=1)) / sc.snr
    else:
        sigma2 = float(sc.noise_sd) ** 2
    y = signal + math.sqrt(sigma2) * rng.standard_normal(sc.n)
    return X, y, theta, tuple(int(g) for g in support), sigma2


def additive_components(example: int, X) -> np.ndarray:
    """``n x 4`` matrix of the true component functions at the first four covariates."""
    x = np.asarray(X, dtype=float)[:, :4]
    if example == 1:
        return np.column_stack([5 * np.sin(x[:, 0]), 2 * (x[:, 1] ** 2 - 0.5),
                                np.exp(x[:, 2]), 3 * x[:, 3]])
    if example == 2:
        s3, s4 = np.sin(2 * np.pi * x[:, 2]), 2 * np.pi * x[:, 3]
        f4 = 6 * (0.1 * np.sin(s4) + 0.2 * np.cos(s4) + 0.3 * np.sin(s4) ** 2
                  + 0.4 * np.cos(s4) ** 3 + 0.5 * np.sin(s4) ** 3)
        return np.column_stack([5 * x[:, 0], 3 * (2 * x[:, 1] - 1) ** 2,
                                4 * s3 / (2 - s3), f4])
    raise ValueError(f"unknown additive example {example!r}; use 1 or 2")


def gen_additive(example: int, n: int = 200, p: int = 600, rho: float = 0.5, t: float = 0.5,
                 snr: float | None = None, noise_sd: float | None = None, seed: int = 0,
                 rng: np.random.Generator | None = None):
    """Draw ``(X, y, truth, sigma2*)`` from one of the two additive examples.

    Example 1: AR(``rho``) Gaussian covariates, unit noise unless ``snr`` or
    ``noise_sd`` says otherwise.  Example 2: ``X_ij = (W_ij + t U_i)/(1 + t)``
    with uniform ``W`` and ``U``; ``snr`` defaults to 0.5.  ``truth`` is the
    0-based set ``{0, 1, 2, 3}``.
    """
    if example not in (1, 2):
        raise ValueError(f"unknown additive example {example!r}; use 1 or 2")
    if p < 4:
        raise ValueError("need at least 4 covariates")
    rng = np.random.default_rng(seed) if rng is None else rng
    if example == 1:
        if not -1 < rho < 1:
            raise ValueError("rho must lie in (-1, 1)")
        # AR(1) columns: x_j = rho x_{j-1} + sqrt(1 - rho^2) e_j
        E = rng.standard_normal((n, p))
        X = np.empty((n, p))
        X[:, 0] = E[:, 0]
        c = math.sqrt(1 - rho ** 2)
        for j in range(1, p):
            X[:, j] = rho * X[:, j - 1] + c * E[:, j]
    else:
        if t < 0:
            raise ValueError("t must be nonnegative")
        W = rng.random((n, p))
        U = rng.random((n, 1))
        X = (W + t * U) / (1 + t)
        if snr is None and noise_sd is None:
            snr = 0.5
    f = additive_components(example, X).sum(axis=1)
    if snr is not None:
        sigma2 = float(np.var(f, ddof=1)) / snr
    else:
        sigma2 = float(noise_sd) ** 2 if noise_sd is not None else 1.0
    y = f + math.sqrt(sigma2) * rng.standard_normal(n)
    return X, y, frozenset(range(4)), sigma2


def confusion_counts(selected, truth, G: int) -> ConfusionCounts:
    sel, tru = set(int(i) for i in selected), set(int(i) for i in truth)
    for s in (sel, tru):
        if s and (min(s) < 0 or max(s) >= G):
            raise ValueError(f"group indices must lie in [0, {G})")
    tp = len(sel & tru)
    fp = len(sel - tru)
    fn = len(tru - sel)
    return ConfusionCounts(tp, fp, G - tp - fp - fn, fn)


def mcc_from_counts(c: ConfusionCounts) -> float:
    denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if denom == 0:
        return 0.0
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom)


def selection_metrics(selected, truth, G: int) -> SelectionMetrics:
    """Precision, recall and Matthews correlation over groups (0 on empty denominators)."""
    c = confusion_counts(selected, truth, G)
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    return SelectionMetrics(precision, recall, mcc_from_counts(c), c)


def estimation_metrics(fit: FitResult, theta_star, sigma2_star: float,
                       std: StandardizationInfo | None = None, test_data=None) -> EstimationMetrics:
    """Log MSE of ``gamma * mu`` (mapped back to the raw scale when ``std`` is
    given), relative noise-variance error, and held-out squared error for
    ``test_data = (X_test, y_test)`` on the raw scale."""
    theta_star = np.asarray(theta_star, dtype=float)
    theta = fit.theta_hat()
    intercept = 0.0
    if std is not None:
        theta, intercept = std.destandardize_coef(theta)
    if theta.shape != theta_star.shape:
        raise ValueError("theta_star has the wrong length")
    mse = float(np.sum((theta - theta_star) ** 2) / theta.shape[0])
    log_mse = max(math.log(mse), LOG_FLOOR) if mse > 0 else LOG_FLOOR
    rel = abs(fit.sigma_hat_sq / sigma2_star - 1.0)
    pred = None
    if test_data is not None:
        Xt, yt = test_data
        pred = float(np.mean((intercept + np.asarray(Xt) @ theta - np.asarray(yt)) ** 2))
    return EstimationMetrics(log_mse, rel, pred)


PRESETS = {
    "supp-table2": dict(kind="linear", scenario=SimScenario(k=10, snr=2.5)),
    "supp-table3": dict(kind="linear", scenario=SimScenario(k=5, snr=1.5)),
    "linear-example1": dict(kind="linear", scenario=SimScenario(G=600, k=5, snr=None,
                                                                noise_sd=1.0)),
    "linear-example2": dict(kind="linear", scenario=SimScenario(
        n=800, G=400, k=5, snr=0.3, coef_law=CoefLaw("gaussian"))),
    "additive-example1": dict(kind="additive", example=1, n=200, p=600, d=5, rho=0.5,
                              t=0.5, snr=None, n_test=500),
    "additive-example2": dict(kind="additive", example=2, n=200, p=600, d=5, rho=0.5,
                              t=0.5, snr=0.5, n_test=500),
}


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, rep]))


def run_linear_replication(sc: SimScenario, rep: int, slab: SlabSpec,
                           config: FitConfig | None = None) -> dict:
    X, y, theta, support, sigma2 = gen_linear(sc, replication_rng(sc.seed, rep))
    design, yc, std = standardize(make_grouped_design(X, np.repeat(np.arange(sc.G), sc.p_i)), y)
    res = cavi.fit(design, yc, slab, config=config or FitConfig(rng_seed=sc.seed))
    sel = selection_metrics(res.selected, support, sc.G)
    est = estimation_metrics(res, theta, sigma2, std)
    return {"rep": rep, "seed": sc.seed, "n": sc.n, "G": sc.G, "p_i": sc.p_i, "k": sc.k,
            "within_rho": sc.within_rho, "between_rho": sc.between_rho,
            "snr": sc.snr if sc.snr is not None else "", "coef_law": sc.coef_law.kind,
            "slab": slab.family if slab.nu is None else f"t{slab.nu:g}",
            "precision": sel.precision, "recall": sel.recall, "mcc": sel.mcc,
            "log_mse": est.log_mse, "sigma_rel_err": est.sigma_rel_err,
            "iterations": res.iterations, "converged": int(res.converged)}


def run_additive_replication(params: dict, seed: int, rep: int, slab: SlabSpec,
                             config: FitConfig | None = None) -> dict:
    n, n_test = params["n"], params.get("n_test", 500)
    X, y, truth, sigma2 = gen_additive(params["example"], n + n_test, params["p"],
                                       rho=params.get("rho", 0.5), t=params.get("t", 0.5),
                                       snr=params.get("snr"), rng=replication_rng(seed, rep))
    Xtr, ytr, Xte, yte = X[:n], y[:n], X[n:], y[n:]
    res, info, std = fit_additive(Xtr, ytr, params["d"], slab, config=config or FitConfig(rng_seed=seed))
    sel = selection_metrics(res.selected, truth, params["p"])
    pred = float(np.mean((predict_additive(res, info, std, Xte) - yte) ** 2))
    null = float(np.mean((ytr.mean() - yte) ** 2))
    return {"rep": rep, "seed": seed, "example": params["example"], "n": n, "p": params["p"],
            "d": params["d"], "t": params.get("t", ""), "rho": params.get("rho", ""),
            "snr": params.get("snr") if params.get("snr") is not None else "",
            "slab": slab.family if slab.nu is None else f"t{slab.nu:g}",
            "precision": sel.precision, "recall": sel.recall, "mcc": sel.mcc,
            "pred_err": pred, "null_err": null, "sigma_rel_err": abs(res.sigma_hat_sq / sigma2 - 1),
            "iterations": res.iterations, "converged": int(res.converged)}


def _run_one(args):
    kind, payload, rep, slab, config = args
    if kind == "linear":
        return run_linear_replication(payload, rep, slab, config)
    params, seed = payload
    return run_additive_replication(params, seed, rep, slab, config)


def run_replications(preset: str | dict, reps: int, seed: int = 0, slab: SlabSpec | None = None,
                     jobs: int = 1, config: FitConfig | None = None, **overrides) -> list[dict]:
    """One metrics row per replication; replication ``r`` draws from ``SeedSequence([seed, r])``.

    ``overrides`` replace scenario fields (e.g. ``snr=1.0``).
    """
    spec = dict(PRESETS[preset]) if isinstance(preset, str) else dict(preset)
    slab = slab or SlabSpec.gaussian()
    if reps < 1:
        raise ValueError("reps must be positive")
    if spec["kind"] == "linear":
        bad = set(overrides) - set(SimScenario.__dataclass_fields__)
        if bad:
            raise ValueError(f"not a linear-scenario field: {', '.join(sorted(bad))}")
        payload = replace(spec["scenario"], seed=seed, **overrides)
    else:
        bad = set(overrides) - {"n", "p", "d", "t", "rho", "snr", "n_test", "example"}
        if bad:
            raise ValueError(f"not an additive-scenario field: {', '.join(sorted(bad))}")
        spec.update(overrides)
        payload = (spec, seed)
    tasks = [(spec["kind"], payload, r, slab, config) for r in range(reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, tasks))
    return [_run_one(t) for t in tasks]


NUMERIC_SKIP = {"rep", "seed"}


def aggregate_rows(rows: list[dict]) -> list[dict]:
    """``mean`` and ``se`` rows over the numeric metric columns."""
    if not rows:
        return []
    mean_row, se_row = {"rep": "mean"}, {"rep": "se"}
    for key, val in rows[0].items():
        if key in NUMERIC_SKIP:
            continue
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            vals = np.array([r[key] for r in rows], dtype=float)
            mean_row[key] = float(vals.mean())
            se_row[key] = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        else:
            mean_row[key] = se_row[key] = val
    return [mean_row, se_row]


def write_rows_csv(rows: list[dict], fh) -> None:
    fields = list(rows[0].keys())
    writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def scenario_dict(sc: SimScenario) -> dict:
    d = asdict(sc)
    d["coef_law"] = asdict(sc.coef_law)
    return d
