"""Compare the numba-compiled kernels with their pure numpy fallback.

Run ``python benchmarks/bench_kernels.py``.  Kernel timings are taken in
process through both versions of each kernel; full-fit timings use fresh
subprocesses with and without ``GVSSB_DISABLE_NUMBA`` so the fallback is
exercised exactly as users would select it.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from gvssb import _accel, cavi, kernels
from gvssb.additive import clamped_knot_vector, quantile_knots
from gvssb.preprocess import standardize
from gvssb.simbench import SimScenario, gen_linear
from gvssb.types import FitConfig, Hyperparams, SlabSpec, make_grouped_design

FIT_SNIPPET = """
import time
import numpy as np
from gvssb import cavi
from gvssb.preprocess import standardize
from gvssb.simbench import SimScenario, gen_linear
from gvssb.types import SlabSpec, make_grouped_design
sc = SimScenario(n={n}, G={G}, p_i=5, k=10, seed=0)
X, y, *_ = gen_linear(sc)
design, yc, _ = standardize(make_grouped_design(X, np.repeat(np.arange(sc.G), 5)), y)
cavi.fit(design, yc, SlabSpec.{slab}())  # warm-up (compilation or cache load)
t0 = time.perf_counter()
for _ in range({repeat}):
    cavi.fit(design, yc, SlabSpec.{slab}())
print((time.perf_counter() - t0) / {repeat})
"""


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_sweep(n, G, slab, repeat):
    sc = SimScenario(n=n, G=G, p_i=5, k=10, seed=0)
    X, y, *_ = gen_linear(sc)
    design, yc, _ = standardize(make_grouped_design(X, np.repeat(np.arange(G), 5)), y)
    hyper = Hyperparams(lam=slab.lam, w=1 / G)
    state = cavi.init_state(design, yc, slab, hyper, FitConfig())
    order = cavi.priority_order(state)
    out = {}
    for label, kern in (("numba", _accel.compiled_version(kernels.cavi_sweep)),
                        ("numpy", _accel.python_version(kernels.cavi_sweep))):
        if kern is None:
            continue
        work = state.copy()
        cavi.run_sweep(work, design, slab, hyper, order, kernel=kern)
        out[label] = best_of(lambda: cavi.run_sweep(state.copy(), design, slab, hyper, order,
                                                    kernel=kern), repeat)
    return out


def bench_bspline(n, d, repeat):
    x = np.random.default_rng(0).uniform(size=n)
    degree = min(3, d - 1)
    t = clamped_knot_vector(quantile_knots(x, d, degree), degree, 0.0, 1.0)
    buf = np.empty((n, d))
    out = {}
    for label, kern in (("numba", _accel.compiled_version(kernels.bspline_rows)),
                        ("numpy", _accel.python_version(kernels.bspline_rows))):
        if kern is None:
            continue
        kern(x, t, degree, d, buf)
        out[label] = best_of(lambda: kern(x, t, degree, d, buf), repeat)
    return out


def bench_fit(n, G, slab, repeat):
    out = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, GVSSB_DISABLE_NUMBA=flag)
        code = FIT_SNIPPET.format(n=n, G=G, slab=slab, repeat=repeat)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        out[label] = float(res.stdout.strip().splitlines()[-1])
    return out


def show(name, timings):
    line = f"{name:<42}" + "".join(f"{k:>7} {v * 1e3:10.2f} ms" for k, v in timings.items())
    if len(timings) == 2:
        line += f"   speedup x{timings['numpy'] / timings['numba']:.1f}"
    print(line)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--G", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-fit", action="store_true", help="kernel timings only")
    args = ap.parse_args(argv)
    for slab in (SlabSpec.gaussian(), SlabSpec.laplacian(), SlabSpec.cauchy()):
        show(f"cavi_sweep {slab.family}{'' if slab.nu is None else f'(nu={slab.nu:g})'} n={args.n} G={args.G}",
             bench_sweep(args.n, args.G, slab, args.repeat))
    show("bspline_rows n=20000 d=5", bench_bspline(20_000, 5, args.repeat))
    if not args.skip_fit:
        for slab in ("gaussian", "laplacian"):
            show(f"fit {slab} n={args.n} G={args.G}",
                 bench_fit(args.n, args.G, slab, max(1, args.repeat // 2)))


if __name__ == "__main__":
    main()
