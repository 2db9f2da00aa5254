"""Timing comparison of the compiled kernels against the NumPy fallback.

Run from the repository root after building the extension::

    python benchmarks/bench_kernels.py --repeat 5 --csv bench_kernels.csv

Each case is timed on both backends with identical inputs; the table shows
the best-of-``repeat`` wall time per call and the speed-up.  The end-to-end
case runs a full copula fit in a subprocess per backend, since the backend is
fixed when the package is imported.
"""
import argparse
import csv
import os
import subprocess
import sys
import timeit

import numpy as np

from copula_prior import kernels
from copula_prior.sigma import estimate_sigma

SOLVE_SNIPPET = """
import time, numpy as np
from copula_prior import experiments as E
from copula_prior.data import standardize
from copula_prior.copula import PriorSpec
from copula_prior.sigma import estimate_sigma
from copula_prior.solver import Problem, solve
tr, _, _ = E.generate(E.design('ex4'), 11)
std, _ = standardize(tr)
prior = PriorSpec('{family}', {lam}, sigma=estimate_sigma(std.X))
pb = Problem(std.X, std.y, prior)
t = time.perf_counter()
for _ in range({reps}):
    solve(pb)
print((time.perf_counter() - t) / {reps})
"""


def _cases(rng, p):
    w = rng.standard_normal(p)
    X = rng.standard_normal((200, p))
    prec = estimate_sigma(X).precision
    z = np.abs(rng.standard_normal(2 * p))
    y = X @ rng.standard_normal(p)
    u = rng.uniform(1e-12, 1 - 1e-12, p)
    objs = {mod.__name__: _al(mod, X, y, kernels.FAM_T, prec) for mod in kernels.backends().values()}
    return {
        "qmap_gauss": lambda k: k.qmap_gauss(w, 2.0),
        "qmap_t": lambda k: k.qmap_t(w, 2.0, 10.0),
        "gauss_smooth": lambda k: k.gauss_smooth(w, 2.0, prec),
        "t_smooth": lambda k: k.t_smooth(w, 2.0, 10.0, prec),
        "al_objective_t": lambda k: objs[k.__name__](z),
        "ndtri": lambda k: k.ndtri(u),
    }


def _al(k, X, y, fam, prec):
    obj = k.ALObjective(X, y, kernels.LOSS_SQUARED, fam, prec, 2.0, 1.0, 10.0)
    obj.mu, obj.rho = 1.0, 10.0
    return obj


def time_kernels(p, repeat, number):
    rng = np.random.default_rng(0)
    impls = kernels.backends()
    rows = []
    for name, fn in _cases(rng, p).items():
        times = {}
        for label, mod in impls.items():
            times[label] = min(timeit.repeat(lambda: fn(mod), repeat=repeat, number=number)) / number
        rows.append({"case": name, "p": p, **{f"{b}_s": t for b, t in times.items()}})
    return rows


def time_solve(family, lam, reps):
    out = {}
    for label, env in (("cython", {}), ("python", {"COPULA_PRIOR_PURE_PYTHON": "1"})):
        if label == "cython" and "cython" not in kernels.backends():
            continue
        code = SOLVE_SNIPPET.format(family=family, lam=lam, reps=reps)
        res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                             env={**os.environ, **env}, check=True)
        out[f"{label}_s"] = float(res.stdout.strip())
    return {"case": f"solve_{family}", "p": 40, **out}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=200)
    ap.add_argument("--dims", type=int, nargs="+", default=[10, 100])
    ap.add_argument("--solve-reps", type=int, default=3)
    ap.add_argument("--csv", default=None)
    args = ap.parse_args(argv)

    rows = []
    for p in args.dims:
        rows.extend(time_kernels(p, args.repeat, args.number))
    for fam, lam in (("gauss-copula", 300.0), ("t-copula", 300.0)):
        rows.append(time_solve(fam, lam, args.solve_reps))

    print(f"{'case':<18}{'p':>5}{'cython (s)':>14}{'python (s)':>14}{'speed-up':>10}")
    for r in rows:
        cy, py = r.get("cython_s", float("nan")), r["python_s"]
        r["speedup"] = py / cy if cy == cy else float("nan")
        print(f"{r['case']:<18}{r['p']:>5}{cy:>14.3e}{py:>14.3e}{r['speedup']:>10.1f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["case", "p", "cython_s", "python_s", "speedup"])
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
