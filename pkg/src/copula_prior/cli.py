"""Command-line interface.

Every command writes a JSON result file (plus CSVs for tabular output) into
``--out``.  Apart from the ``timing`` entry, two runs with the same arguments
and seed produce byte-identical JSON.

Time-series data are handled as plain regression: the features must already
be stationary.  No unit-root test is run here, so check stationarity before
calling ``fit`` or ``cv`` on lagged series.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .copula import Family, PriorSpec, contour_grid, write_contour_csv
from .data import REGRESSION, TASKS, load_csv, write_csv
from .errors import CopulaPriorError, DataError, InvalidParameterError, UsageError
from .experiments import (METHODS, block_pairs, check_assumptions, design, generate, grouping_audit,
                          run_benchmark)
from .resample import ResampleConfig, resample_fit
from .sigma import DEFAULT_C, CorrelationMatrix
from .solver import SolverOptions, fit, prepare, solution_path, write_trace_jsonl
from .tuning import DEFAULT_COUNT, DEFAULT_RATIO, cross_validate, make_lambda_grid

log = logging.getLogger("copula_prior")

COMMANDS = ("fit", "cv", "path", "simulate", "bench", "contour", "resample-fit", "verify-theory")
SEED_ENV = "COPULA_PRIOR_SEED"
SELECT_THRESHOLD = 1e-6


def default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InvalidParameterError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


@dataclass
class RunConfig:
    command: str
    out: Path = Path(".")
    data: Path | None = None
    target: str = "y"
    task: str = REGRESSION
    family: str = "gauss-copula"
    lam: float | None = None
    alpha: float = 0.5
    nu: float = 10.0
    c: float = DEFAULT_C
    k: int = 10
    seed: int = 0
    grid_count: int = DEFAULT_COUNT
    grid_ratio: float = DEFAULT_RATIO
    solver: SolverOptions = field(default_factory=SolverOptions)
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.command in ("fit", "cv", "path", "resample-fit"):
            if self.data is None:
                raise UsageError(f"{self.command} needs --data")
            if not self.data.is_file():
                raise DataError(f"input file {str(self.data)!r} does not exist")
        if self.task not in TASKS:
            raise UsageError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.lam is not None and not self.lam > 0:
            raise InvalidParameterError(f"lambda must be positive, got {self.lam}")
        if self.k < 2:
            raise InvalidParameterError("--k must be at least 2")
        if self.grid_count < 1 or not 0 < self.grid_ratio < 1:
            raise InvalidParameterError("--grid-count must be >= 1 and --grid-ratio in (0, 1)")
        self.out.mkdir(parents=True, exist_ok=True)
        if not os.access(self.out, os.W_OK):
            raise UsageError(f"output directory {str(self.out)!r} is not writable")

    def prior(self, lam=None):
        lam = lam if lam is not None else (self.lam if self.lam is not None else 1.0)
        fam = Family.parse(self.family)
        alpha = self.alpha if fam is Family.ELASTIC_NET else 1.0
        return PriorSpec(fam, lam, alpha=alpha, nu=self.nu)

    def describe(self):
        return {"command": self.command, "data": str(self.data) if self.data else None,
                "target": self.target, "task": self.task, "family": Family.parse(self.family).value,
                "lambda": self.lam, "alpha": self.alpha, "nu": self.nu, "c": self.c, "k": self.k,
                "seed": self.seed, "grid_count": self.grid_count, "grid_ratio": self.grid_ratio,
                "solver": {"tol_grad": self.solver.tol_grad, "tol_constraint": self.solver.tol_constraint,
                           "max_outer": self.solver.max_outer, "max_inner": self.solver.max_inner,
                           "restarts": self.solver.restarts, "seed": self.solver.seed},
                **{k: v for k, v in sorted(self.extra.items()) if k != "trace"}}


# -- serialization ---------------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_plain(payload), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def fit_summary(res, names):
    sel = res.selected(SELECT_THRESHOLD)
    coef = res.coef_original if res.coef_original is not None else res.omega_hat
    return {
        "coefficients": dict(zip(names, coef)),
        "coefficients_standardized": dict(zip(names, res.omega_hat)),
        "intercept": res.intercept_original if res.intercept_original is not None else res.intercept,
        "selected_features": [names[j] for j in sel],
        "n_selected": int(sel.size),
        "lambda": res.lam,
        "objective": res.objective,
        "converged": bool(res.converged),
        "iterations": res.iterations,
        "restarts_used": res.restarts_used,
        "constraint_residual": res.constraint_residual,
        "projected_gradient": res.projected_gradient,
    }


def _metrics(res, data):
    pred = res.predict(data.X)
    if data.task == REGRESSION:
        return {"train_mse": float(np.mean((data.y - pred) ** 2))}
    return {"train_misclassification": float(np.mean((pred >= 0.5) != (data.y == 1)))}


# -- commands ----------------------------------------------------------------------------

def _load(cfg):
    return load_csv(cfg.data, cfg.target, cfg.task, cfg.extra.get("features"))


def cmd_fit(cfg):
    data = _load(cfg)
    if cfg.lam is None:
        raise UsageError("fit needs --lambda (use the cv command to choose one)")
    res = fit(data, cfg.prior(), cfg.solver, cfg.c)
    return {"fit": fit_summary(res, data.names), "metrics": _metrics(res, data),
            "n": data.n, "p": data.p}, {}


def _grid_for(cfg, data):
    problem, _ = prepare(data, cfg.prior(), cfg.c)
    return make_lambda_grid(problem, cfg.grid_count, cfg.grid_ratio)


def cmd_cv(cfg):
    data = _load(cfg)
    grid = _grid_for(cfg, data)
    report = cross_validate(data, cfg.prior(), grid, cfg.k, cfg.seed, cfg.solver, cfg.c)
    res = fit(data, cfg.prior(report.lambda_min), cfg.solver, cfg.c)
    payload = {"cv": report.to_dict(), "fit": fit_summary(res, data.names),
               "metrics": _metrics(res, data), "tuned": {"lambda_min": report.lambda_min,
                                                         "lambda_1se": report.lambda_1se},
               "n": data.n, "p": data.p}
    return payload, {"cv_curve.csv": report.to_csv}


def _path_csv(path, names, record):
    import csv

    def _write(fname):
        with open(fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "n_selected", "converged"] + list(names))
            for lam, f in zip(path.lambdas, path.fits):
                coef, _ = record.coef_to_original(f.omega_hat, f.intercept)
                w.writerow([repr(float(lam)), int(f.selected(SELECT_THRESHOLD).size), bool(f.converged)]
                           + [repr(float(v)) for v in coef])
    return _write


def cmd_path(cfg):
    data = _load(cfg)
    problem, rec = prepare(data, cfg.prior(), cfg.c)
    grid = make_lambda_grid(problem, cfg.grid_count, cfg.grid_ratio)
    path = solution_path(problem, grid, cfg.solver)
    payload = {"lambdas": path.lambdas, "lipschitz": path.lipschitz,
               "n_selected": [int(f.selected(SELECT_THRESHOLD).size) for f in path.fits],
               "converged": [bool(f.converged) for f in path.fits],
               "n": data.n, "p": data.p, "features": data.names}
    return payload, {"path.csv": _path_csv(path, data.names, rec)}


def cmd_simulate(cfg):
    sim = design(cfg.extra.get("design", "ex1"))
    train, valid, test = generate(sim, cfg.seed)
    files = {f"{sim.id}_{name}.csv": (lambda d: (lambda p: write_csv(d, p)))(d)
             for name, d in (("train", train), ("valid", valid), ("test", test))}
    payload = {"design": sim.id, "beta": sim.beta, "sigma_noise": sim.sigma_noise,
               "sizes": {"train": train.n, "valid": valid.n, "test": test.n}, "p": sim.p,
               "target": "y", "files": sorted(files)}
    return payload, files


def cmd_bench(cfg):
    designs = cfg.extra.get("designs") or ["ex1"]
    methods = cfg.extra.get("methods") or [m.value for m in METHODS]

    def progress(d, rep):
        log.info("%s replication %d done", d, rep + 1)

    rec = run_benchmark(designs, methods, cfg.extra.get("reps", 100), cfg.seed, cfg.solver,
                        cfg.grid_count, cfg.grid_ratio, nu=cfg.nu, progress=progress)
    payload = rec.summary_dict()
    payload["methods"] = [Family.parse(m).value for m in methods]
    payload["designs"] = list(designs)
    payload["replication_seeds"] = sorted({r["seed"] for r in rec.rows})
    return payload, {"bench.csv": rec.to_csv}, {"benchmark_seconds": rec.runtime}


def cmd_contour(cfg):
    prior = cfg.prior()
    if prior.family.is_copula:
        prior = prior.with_sigma(CorrelationMatrix.equicorrelation(2, cfg.extra.get("rho", 0.5)))
    grid = contour_grid(prior, cfg.extra.get("extent", 3.0), cfg.extra.get("resolution", 101))
    payload = {"family": prior.family.value, "lambda": prior.lam, "nu": prior.nu,
               "rho": cfg.extra.get("rho", 0.5), "extent": cfg.extra.get("extent", 3.0),
               "resolution": cfg.extra.get("resolution", 101), "points": int(grid.shape[0]),
               "max_log_density": float(grid[:, 2].max())}
    return payload, {"contour.csv": lambda p: write_contour_csv(grid, p)}


def cmd_resample(cfg):
    data = _load(cfg)
    m = cfg.extra.get("m") or data.n
    config = ResampleConfig(m, cfg.extra.get("M", 1), cfg.seed, not cfg.extra.get("without_replacement"))
    tune = cfg.lam is None
    res = resample_fit(data, cfg.prior(), config, cfg.solver, tune=tune, cv_k=cfg.k, c=cfg.c)
    f = res.fit
    sel = np.flatnonzero(np.abs(f.omega_hat) > SELECT_THRESHOLD)
    payload = {"coefficients": dict(zip(data.names, f.coef_original)),
               "coefficients_standardized": dict(zip(data.names, f.omega_hat)),
               "intercept": f.intercept_original,
               "selected_features": [data.names[j] for j in sel], "n_selected": int(sel.size),
               "lambda": res.lam, "lambda_tuned": res.lam_tuned, "m": config.m, "M": config.M,
               "with_replacement": config.with_replacement, "retries": res.retries,
               "all_converged": bool(f.converged), "metrics": _metrics(f, data),
               "n": data.n, "p": data.p}
    files = {}
    if cfg.extra.get("dump_solutions"):
        files["resample_solutions.csv"] = lambda p: res.to_csv(p, data.names)
    return payload, files


def cmd_verify(cfg):
    sim = design(cfg.extra.get("design", "ex4"))
    runs = cfg.extra.get("runs", 1)
    seeds = [cfg.seed + i for i in range(runs)]
    audit = grouping_audit(seeds, sim, lam=cfg.lam, options=cfg.solver, c=cfg.c,
                           grid_count=cfg.grid_count, grid_ratio=cfg.grid_ratio)
    lam_check = cfg.lam if cfg.lam is not None else float(np.median([r["lambda"] for r in audit["runs"]]))
    assumptions = check_assumptions(PriorSpec(Family.GAUSS, lam_check), seed=cfg.seed)
    payload = {"design": sim.id, "seeds": seeds, "pairs_per_run": len(block_pairs(sim.n_blocks, sim.block_size)),
               "grouping": audit, "assumptions": assumptions}
    return payload, {}


HANDLERS = {"fit": cmd_fit, "cv": cmd_cv, "path": cmd_path, "simulate": cmd_simulate,
            "bench": cmd_bench, "contour": cmd_contour, "resample-fit": cmd_resample,
            "verify-theory": cmd_verify}


def run(cfg: RunConfig):
    """Execute one command and write its artefacts.  Returns the result payload."""
    cfg.validate()
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    trace_path = cfg.extra.get("trace")
    if trace_path:
        cfg.solver = replace(cfg.solver, trace=write_trace_jsonl(trace_path))
    try:
        out = HANDLERS[cfg.command](cfg)
    finally:
        if trace_path:
            cfg.solver.trace.close()
    payload, files = out[0], out[1]
    timing = {"started_at": started, "wall_seconds": round(time.perf_counter() - t0, 6)}
    if len(out) > 2:
        timing.update(out[2])
    payload = {"config": cfg.describe(), "result": payload, "timing": timing,
               "version": __version__, "seeds": {"run": cfg.seed, "solver": cfg.solver.seed}}
    # all artefacts are written together once the computation has succeeded
    for name, writer in files.items():
        writer(cfg.out / name)
    write_json(cfg.out / f"{cfg.command.replace('-', '_')}.json", payload)
    return payload


# -- argument parsing --------------------------------------------------------------------

def _csv_list(text):
    return [s.strip() for s in text.split(",") if s.strip()]


def build_parser():
    seed = default_seed()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (created if missing)")
    common.add_argument("--seed", type=int, default=seed,
                        help=f"random seed (default: ${SEED_ENV} or 0)")
    common.add_argument("-v", "--verbose", action="store_true")

    prior = argparse.ArgumentParser(add_help=False)
    prior.add_argument("--family", default="gauss-copula",
                       help="lasso, elastic-net, gauss-copula or t-copula")
    prior.add_argument("--lambda", dest="lam", type=float, default=None)
    prior.add_argument("--alpha", type=float, default=0.5, help="elastic-net mixing (1 = lasso)")
    prior.add_argument("--nu", type=float, default=10.0, help="t-copula degrees of freedom")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--c", type=float, default=DEFAULT_C, help="shrinkage constant for the precision estimate")
    solver.add_argument("--tol", type=float, default=1e-6, help="gradient and constraint tolerance")
    solver.add_argument("--max-outer", type=int, default=200)
    solver.add_argument("--max-inner", type=int, default=500)
    solver.add_argument("--restarts", type=int, default=3)
    solver.add_argument("--trace", type=Path, default=None, help="append per-iteration JSON lines here")
    solver.add_argument("--grid-count", type=int, default=DEFAULT_COUNT)
    solver.add_argument("--grid-ratio", type=float, default=DEFAULT_RATIO)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", type=Path, required=True, help="CSV file with a header row")
    data.add_argument("--target", default="y")
    data.add_argument("--task", choices=TASKS, default=REGRESSION)
    data.add_argument("--features", type=_csv_list, default=None, help="comma-separated feature columns")

    p = argparse.ArgumentParser(prog="copula-prior", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("fit", parents=[common, prior, solver, data], help="fit at a fixed lambda")
    s = sub.add_parser("cv", parents=[common, prior, solver, data], help="k-fold CV over a lambda grid")
    s.add_argument("--k", type=int, default=10)
    sub.add_parser("path", parents=[common, prior, solver, data], help="warm-started solution path")

    s = sub.add_parser("simulate", parents=[common], help="write train/valid/test CSVs for a design")
    s.add_argument("--design", default="ex1")

    s = sub.add_parser("bench", parents=[common, solver], help="Monte-Carlo benchmark of the priors")
    s.add_argument("--design", type=_csv_list, default=["ex1"], help="comma-separated: ex1,ex2,ex3,ex4")
    s.add_argument("--reps", type=int, default=100)
    s.add_argument("--methods", type=_csv_list, default=None)
    s.add_argument("--nu", type=float, default=10.0)

    s = sub.add_parser("contour", parents=[common, prior], help="2-D log prior density grid")
    s.add_argument("--rho", type=float, default=0.5)
    s.add_argument("--extent", type=float, default=3.0)
    s.add_argument("--resolution", type=int, default=101)

    s = sub.add_parser("resample-fit", parents=[common, prior, solver, data],
                       help="median of fits on M subsamples of size m")
    s.add_argument("--m", type=int, default=None, help="subsample size (default n)")
    s.add_argument("--M", type=int, default=1, help="number of subsamples")
    s.add_argument("--k", type=int, default=10, help="CV folds when lambda is tuned")
    s.add_argument("--without-replacement", action="store_true")
    s.add_argument("--dump-solutions", action="store_true", help="also write every replicate's coefficients")

    s = sub.add_parser("verify-theory", parents=[common, solver],
                       help="grouping-bound audit and q-map shape checks on simulated data")
    s.add_argument("--design", default="ex4")
    s.add_argument("--runs", type=int, default=1)
    s.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="fixed lambda (default: tuned on the validation split)")
    return p


def config_from_args(ns):
    g = vars(ns)
    solver = SolverOptions(tol_grad=g.get("tol", 1e-6), tol_constraint=g.get("tol", 1e-6),
                           max_outer=g.get("max_outer", 200), max_inner=g.get("max_inner", 500),
                           restarts=g.get("restarts", 3), seed=ns.seed)
    extra = {}
    keys = {"design": "design", "reps": "reps", "methods": "methods", "rho": "rho", "extent": "extent",
            "resolution": "resolution", "m": "m", "M": "M", "without_replacement": "without_replacement",
            "dump_solutions": "dump_solutions", "runs": "runs", "features": "features", "trace": "trace"}
    for arg, key in keys.items():
        if arg in g and g[arg] is not None:
            extra[key] = g[arg]
    if ns.command == "bench":
        extra["designs"] = extra.pop("design")
    return RunConfig(command=ns.command, out=ns.out, data=g.get("data"), target=g.get("target", "y"),
                     task=g.get("task", REGRESSION), family=g.get("family", "gauss-copula"),
                     lam=g.get("lam"), alpha=g.get("alpha", 0.5), nu=g.get("nu", 10.0),
                     c=g.get("c", DEFAULT_C), k=g.get("k", 10), seed=ns.seed,
                     grid_count=g.get("grid_count", DEFAULT_COUNT), grid_ratio=g.get("grid_ratio", DEFAULT_RATIO),
                     solver=solver, extra=extra)


def _error(exc, code):
    json.dump({"error": type(exc).__name__, "message": str(exc), "exit_code": code}, sys.stderr)
    sys.stderr.write("\n")
    return code


def main(argv=None):
    try:
        parser = build_parser()
    except CopulaPriorError as exc:
        return _error(exc, exc.exit_code)
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(ns)
        payload = run(cfg)
    except CopulaPriorError as exc:
        return _error(exc, exc.exit_code)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        return _error(exc, DataError.exit_code)
    except ValueError as exc:
        return _error(exc, UsageError.exit_code)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        return _error(exc, 4)
    print(json.dumps({"command": cfg.command, "output": str(cfg.out / f"{cfg.command.replace('-', '_')}.json"),
                      "wall_seconds": payload["timing"]["wall_seconds"]}))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
