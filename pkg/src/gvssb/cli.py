"""Command-line front end.

Exit codes: 0 on a converged fit (or any successful non-fit command),
2 when the fit hit ``--max-iter`` without converging (the report is still
written), 1 on bad input.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import cavi
from .additive import BasisInfo, expand_additive, predict_additive
from .preprocess import StandardizationInfo, standardize
from .simbench import PRESETS, aggregate_rows, run_replications, write_rows_csv
from .types import FitConfig, Hyperparams, SlabSpec, make_grouped_design

logger = logging.getLogger("gvssb")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


class InputError(ValueError):
    pass


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Header plus float matrix from a CSV file."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise InputError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    width = len(header)
    data = np.empty((len(rows) - 1, width))
    for k, r in enumerate(rows[1:], start=2):
        if len(r) != width:
            raise InputError(f"{path}: line {k} has {len(r)} fields, expected {width}")
        try:
            data[k - 2] = [float(v) for v in r]
        except ValueError as exc:
            raise InputError(f"{path}: line {k}: {exc}") from None
    if not np.all(np.isfinite(data)):
        raise InputError(f"{path}: non-finite values")
    return header, data


def read_response(path) -> np.ndarray:
    header, data = read_table(path)
    if data.shape[1] != 1:
        raise InputError(f"{path}: response file must have exactly one column")
    return data[:, 0]


def read_groups(path, columns: list[str]) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    mapping = {}
    for k, r in enumerate(rows[1:], start=2):
        if len(r) != 2:
            raise InputError(f"{path}: line {k} must have two fields (column, group)")
        mapping[r[0].strip()] = r[1].strip()
    missing = [c for c in columns if c not in mapping]
    if missing:
        raise InputError(f"{path}: no group given for column(s) {', '.join(missing)}")
    return [mapping[c] for c in columns]


def slab_from_args(args) -> SlabSpec:
    name = args.slab
    if name == "t":
        if args.nu is None:
            raise InputError("--slab t needs --nu")
        return SlabSpec.student_t(args.nu, lam=args.lambda0)
    if name == "cauchy":
        return SlabSpec.cauchy(lam=args.lambda0)
    if name == "gaussian":
        return SlabSpec.gaussian(lam=args.lambda0)
    if name == "laplacian":
        return SlabSpec.laplacian(lam=args.lambda0)
    raise InputError(f"unknown slab {name!r}")


def config_from_args(args) -> FitConfig:
    return FitConfig(eps_h=args.eps_h, eps_sigma=args.eps_sigma, max_iter=args.max_iter,
                     em_enabled=args.em, selection_threshold=args.threshold, rng_seed=args.seed)


def _fit_design(design, y, args):
    slab = slab_from_args(args)
    config = config_from_args(args)
    std_design, yc, std = standardize(design, y)
    w0 = args.w0 if args.w0 is not None else 1.0 / std_design.G
    hyper = Hyperparams(lam=args.lambda0, w=w0)
    res = cavi.fit(std_design, yc, slab, hyper, config)
    return res, std_design, std, slab, config, hyper


def build_report(res, design, std: StandardizationInfo, slab: SlabSpec, config: FitConfig,
                 w0: float, wall_ms: float) -> dict:
    """JSON-ready fit report with coefficients on the raw covariate scale."""
    names = design.group_names
    o = design.offsets
    mu_raw = res.state.mu_flat / std.col_scales
    coef, intercept = std.destandardize_coef(res.theta_hat())
    return {
        "gamma": {str(g): float(res.gamma[i]) for i, g in enumerate(names)},
        "mu": {str(g): mu_raw[o[i]:o[i + 1]].tolist() for i, g in enumerate(names)},
        "coef": {str(g): coef[o[i]:o[i + 1]].tolist() for i, g in enumerate(names)},
        "columns": {str(g): list(design.column_names[o[i]:o[i + 1]]) for i, g in enumerate(names)},
        "intercept": float(intercept),
        "sigma2_hat": float(res.sigma_hat_sq),
        "selected": [str(names[i]) for i in res.selected],
        "elbo_trace": [float(v) for v in res.elbo_trace],
        "hyper": {"lambda": float(res.hyper.lam), "w": float(res.hyper.w)},
        "iterations": int(res.iterations),
        "converged": bool(res.converged),
        "config": {"slab": slab.family, "nu": slab.nu, "lambda0": slab.lam, "w0": w0,
                   "em": config.em_enabled, "eps_h": config.eps_h,
                   "eps_sigma": config.eps_sigma, "max_iter": config.max_iter,
                   "threshold": config.selection_threshold, "seed": config.rng_seed},
        "wall_time_ms": wall_ms,
    }


def _write_json(doc, path):
    text = json.dumps(doc, indent=2)
    if path in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    columns, X = read_table(args.x)
    y = read_response(args.y)
    if X.shape[0] != y.shape[0]:
        raise InputError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    labels = read_groups(args.groups, columns) if args.groups else list(columns)
    design = make_grouped_design(X, labels, column_names=columns)
    res, std_design, std, slab, config, hyper = _fit_design(design, y, args)
    wall = (time.perf_counter() - t0) * 1e3
    w0 = args.w0 if args.w0 is not None else 1.0 / design.G
    _write_json(build_report(res, std_design, std, slab, config, w0, wall), args.out)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _sidecar_path(args) -> Path:
    if args.sidecar:
        return Path(args.sidecar)
    if args.out in (None, "-"):
        raise InputError("--sidecar is required when the report goes to stdout")
    return Path(str(args.out) + ".basis.json")


def cmd_additive_fit(args) -> int:
    t0 = time.perf_counter()
    if args.d < 2:
        raise InputError("--d must be at least 2")
    columns, X = read_table(args.x)
    y = read_response(args.y)
    if X.shape[0] != y.shape[0]:
        raise InputError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    design, info = expand_additive(X, args.d, args.degree, covariate_names=columns)
    res, std_design, std, slab, config, hyper = _fit_design(design, y, args)
    wall = (time.perf_counter() - t0) * 1e3
    w0 = args.w0 if args.w0 is not None else 1.0 / design.G
    report = build_report(res, std_design, std, slab, config, w0, wall)
    report["config"].update({"d": args.d, "degree": info.degree})
    sidecar = {"basis": info.to_dict(),
               "standardization": {"y_mean": std.y_mean, "col_means": std.col_means.tolist(),
                                   "col_scales": std.col_scales.tolist()},
               "theta_std": res.theta_hat().tolist()}
    side = _sidecar_path(args)
    side.write_text(json.dumps(sidecar) + "\n", encoding="utf-8")
    report["sidecar"] = str(side)
    _write_json(report, args.out)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def load_sidecar(path) -> tuple[BasisInfo, StandardizationInfo, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"sidecar not found: {path}; rerun additive-fit or pass --sidecar")
    doc = json.loads(path.read_text(encoding="utf-8"))
    s = doc["standardization"]
    std = StandardizationInfo(float(s["y_mean"]), np.asarray(s["col_means"], dtype=float),
                              np.asarray(s["col_scales"], dtype=float))
    return BasisInfo.from_dict(doc["basis"]), std, np.asarray(doc["theta_std"], dtype=float)


def cmd_predict(args) -> int:
    if args.sidecar is None:
        if args.fit is None:
            raise InputError("give --sidecar (or --fit with a report that names its sidecar)")
        report = json.loads(Path(args.fit).read_text(encoding="utf-8"))
        if "sidecar" not in report:
            raise InputError(f"{args.fit} has no sidecar entry; pass --sidecar")
        args.sidecar = report["sidecar"]
    info, std, theta = load_sidecar(args.sidecar)
    columns, X = read_table(args.x)
    if list(columns) != list(info.covariate_names):
        raise InputError("columns of --x do not match the training covariates "
                         f"({', '.join(info.covariate_names[:5])}...)")
    yhat = predict_additive(theta, info, std, X)
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="", encoding="utf-8")
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["yhat"])
        for v in yhat:
            w.writerow([repr(float(v))])
    finally:
        if out is not sys.stdout:
            out.close()
    if args.truth:
        y = read_response(args.truth)
        if y.shape[0] != yhat.shape[0]:
            raise InputError("--truth has a different number of rows than --x")
        print(f"mean squared prediction error: {float(np.mean((yhat - y) ** 2))!r}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.preset not in PRESETS:
        raise InputError(f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
    overrides = {}
    for key in ("snr", "n", "G", "p_i", "k", "within_rho", "between_rho", "d", "t", "rho", "p"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if args.reps < 1:
        raise InputError("--reps must be positive")
    slab = slab_from_args(args)
    config = FitConfig(eps_h=args.eps_h, eps_sigma=args.eps_sigma, max_iter=args.max_iter,
                       em_enabled=args.em, selection_threshold=args.threshold, rng_seed=args.seed)
    rows = run_replications(args.preset, args.reps, seed=args.seed, slab=slab, jobs=args.jobs,
                            config=config, **overrides)
    rows = rows + aggregate_rows(rows)
    if args.out in (None, "-"):
        write_rows_csv(rows, sys.stdout)
    else:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            write_rows_csv(rows, fh)
    return EXIT_OK


def _add_fit_flags(p):
    p.add_argument("--slab", default="gaussian", help="gaussian, laplacian, t or cauchy")
    p.add_argument("--nu", type=float, default=None, help="degrees of freedom for --slab t")
    p.add_argument("--lambda0", type=float, default=1.0, help="initial slab hyperparameter")
    p.add_argument("--w0", type=float, default=None, help="initial inclusion probability (1/G)")
    p.add_argument("--em", action=argparse.BooleanOptionalAction, default=True,
                   help="empirical-Bayes updates of lambda and w")
    p.add_argument("--eps-h", type=float, default=1e-3,
                   help="entropy change that unlocks the noise update")
    p.add_argument("--eps-sigma", type=float, default=1e-3,
                   help="change in the noise scale that counts as converged")
    p.add_argument("--max-iter", type=int, default=500, help="maximum number of sweeps")
    p.add_argument("--threshold", type=float, default=0.5,
                   help="inclusion probability needed to select a group")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gvssb",
                                     description="Grouped variational spike-and-slab regression")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a grouped linear model")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--groups", default=None, help="CSV mapping column name to group name")
    p.add_argument("--out", default="-")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("additive-fit", help="fit a sparse additive model on B-spline groups")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--d", type=int, default=5, help="B-spline functions per covariate")
    p.add_argument("--degree", type=int, default=None, help="spline degree (min(3, d-1))")
    p.add_argument("--out", default="-")
    p.add_argument("--sidecar", default=None, help="basis file (default: <out>.basis.json)")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_additive_fit)

    p = sub.add_parser("predict", help="predict from an additive fit")
    p.add_argument("--x", required=True)
    p.add_argument("--fit", default=None)
    p.add_argument("--sidecar", default=None)
    p.add_argument("--truth", default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="run seeded replications of a preset scenario")
    p.add_argument("--preset", required=True, choices=sorted(PRESETS))
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="-")
    p.add_argument("--snr", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--G", type=int, default=None)
    p.add_argument("--p-i", dest="p_i", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--within-rho", type=float, default=None)
    p.add_argument("--between-rho", type=float, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--p", type=int, default=None)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, FloatingPointError, json.JSONDecodeError) as exc:
        print(f"gvssb: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
