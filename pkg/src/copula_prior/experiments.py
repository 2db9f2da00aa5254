"""Simulation designs, the Monte-Carlo benchmark and numerical theory checks."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .copula import Family, PriorSpec, q_map
from .data import Dataset, standardize
from .errors import CopulaPriorError, InvalidParameterError
from .sigma import DEFAULT_C, estimate_sigma
from .solver import SQUARED_ERROR, Problem, solve
from .tuning import DEFAULT_COUNT, DEFAULT_RATIO, make_lambda_grid, validation_tune

METHODS = (Family.GAUSS, Family.T, Family.ELASTIC_NET, Family.LASSO)


@dataclass(frozen=True)
class SimDesign:
    """One of the four simulation designs.

    ``rho`` is the constant pairwise correlation (designs 1-3).  Design 4
    uses latent factors: ``block_size`` columns per factor for ``n_blocks``
    factors plus independent noise columns, with within-block noise variance
    ``block_noise_var``.
    """

    id: str
    beta: tuple
    sigma_noise: float
    n_train: int
    n_valid: int
    n_test: int
    rho: float = 0.95
    n_blocks: int = 0
    block_size: int = 5
    block_noise_var: float = 0.16

    @property
    def p(self):
        return len(self.beta)

    def sample_X(self, rng, n):
        p = self.p
        if self.n_blocks == 0:
            common = rng.standard_normal((n, 1))
            return np.sqrt(self.rho) * common + np.sqrt(1.0 - self.rho) * rng.standard_normal((n, p))
        X = rng.standard_normal((n, p))
        z = rng.standard_normal((n, self.n_blocks))
        width = self.n_blocks * self.block_size
        eps = rng.standard_normal((n, width)) * np.sqrt(self.block_noise_var)
        X[:, :width] = np.repeat(z, self.block_size, axis=1) + eps
        return X


def design(name, **overrides):
    """Build a named design: ``ex1`` .. ``ex4``; keyword overrides allowed."""
    key = str(name).lower().replace("example", "ex").replace("_", "")
    base = {
        "ex1": dict(id="ex1", beta=(3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0), sigma_noise=3.0,
                    n_train=20, n_valid=20, n_test=200),
        "ex2": dict(id="ex2", beta=(0.85,) * 8, sigma_noise=3.0, n_train=20, n_valid=20, n_test=200),
        "ex3": dict(id="ex3", beta=(0.0,) * 10 + (2.0,) * 10 + (0.0,) * 10 + (2.0,) * 10,
                    sigma_noise=15.0, n_train=100, n_valid=100, n_test=400),
        "ex4": dict(id="ex4", beta=(3.0,) * 15 + (0.0,) * 25, sigma_noise=15.0,
                    n_train=100, n_valid=100, n_test=400, n_blocks=3, block_size=5, block_noise_var=0.16),
    }
    if key not in base:
        raise InvalidParameterError(f"unknown design {name!r}; choose ex1, ex2, ex3 or ex4")
    params = dict(base[key])
    params.update(overrides)
    return SimDesign(**params)


def generate(sim, seed):
    """Draw (train, validation, test) datasets for a design; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    beta = np.asarray(sim.beta, dtype=np.float64)
    names = [f"x{j + 1}" for j in range(sim.p)]
    out = []
    for n in (sim.n_train, sim.n_valid, sim.n_test):
        X = sim.sample_X(rng, n)
        y = X @ beta + sim.sigma_noise * rng.standard_normal(n)
        out.append(Dataset(X, y, list(names)))
    return tuple(out)


def replication_seed(seed, rep):
    return int(np.random.SeedSequence([int(seed), int(rep)]).generate_state(1)[0])


def bootstrap_se_median(values, B=1000, seed=0):
    """Bootstrap standard error of the sample median."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return float("nan")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, v.size, size=(B, v.size))
    meds = np.median(v[idx], axis=1)
    if B < 2 or np.ptp(meds) == 0.0:
        return 0.0
    return float(meds.std(ddof=1))


def make_prior(method, nu=10.0):
    fam = Family.parse(method)
    return PriorSpec(fam, 1.0, alpha=0.5 if fam is Family.ELASTIC_NET else 1.0, nu=nu)


def fit_replication(train, valid, test, method, options=None, grid_count=DEFAULT_COUNT,
                    grid_ratio=DEFAULT_RATIO, c=DEFAULT_C, nu=10.0):
    """Tune on the validation split, fit on the training split, score on test.

    Standardisation and the dependence matrix come from the training split
    only.  Returns a dict with the test RMSE and the tuned parameters.
    """
    std_train, rec = standardize(train)
    prior = make_prior(method, nu)
    if prior.family.is_copula:
        prior = prior.with_sigma(estimate_sigma(std_train.X, c))
    problem = Problem(std_train.X, std_train.y, prior, SQUARED_ERROR)
    grid = make_lambda_grid(problem, grid_count, grid_ratio)
    tuned = validation_tune(problem, rec.transform(valid), grid, options=options)
    fit = tuned.fit
    pred = rec.transform_X(test.X) @ fit.omega_hat + rec.y_mean
    rmse = float(np.sqrt(np.mean((test.y - pred) ** 2)))
    return {"rmse": rmse, "lambda": tuned.lam, "alpha": tuned.alpha, "nu": tuned.nu,
            "n_selected": int(np.sum(np.abs(fit.omega_hat) > 1e-6)), "converged": bool(fit.converged),
            "omega": fit.omega_hat}


@dataclass
class ExperimentRecord:
    rows: list
    summary: dict
    seed: int
    replications: int
    runtime: float = 0.0
    excluded: list = field(default_factory=list)

    def rmse(self, design_id, method):
        m = Family.parse(method).value
        return np.array([r["rmse"] for r in self.rows
                         if r["design"] == design_id and r["method"] == m and r["error"] is None])

    def median(self, design_id, method):
        return self.summary[design_id][Family.parse(method).value]["median"]

    def to_csv(self, path):
        cols = ["design", "method", "replication", "seed", "rmse", "lambda", "alpha", "nu",
                "n_selected", "converged", "seconds", "error"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow([r.get(c) for c in cols])

    def summary_dict(self):
        return {"seed": self.seed, "replications": self.replications, "metric": "rmse",
                "bootstrap_B": 1000, "table": self.summary, "excluded": self.excluded}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary_dict(), fh, indent=2, sort_keys=True)


def run_benchmark(designs, methods=METHODS, replications=100, seed=0, options=None,
                  grid_count=DEFAULT_COUNT, grid_ratio=DEFAULT_RATIO, B=1000, nu=10.0,
                  progress=None):
    """Monte-Carlo comparison of prior families on simulated designs.

    Each replication draws fresh data from its own seed, tunes every method on
    the validation split and records the test RMSE.  A failing method is
    recorded with its error and excluded from the summary.
    """
    if replications < 1:
        raise InvalidParameterError("replications must be >= 1")
    sims = [d if isinstance(d, SimDesign) else design(d) for d in designs]
    methods = [Family.parse(m) for m in methods]
    rows, excluded = [], []
    t_start = time.perf_counter()
    for sim in sims:
        for rep in range(replications):
            rseed = replication_seed(seed, rep)
            train, valid, test = generate(sim, rseed)
            for m in methods:
                t0 = time.perf_counter()
                row = {"design": sim.id, "method": m.value, "replication": rep, "seed": rseed, "error": None}
                try:
                    out = fit_replication(train, valid, test, m, options, grid_count, grid_ratio, nu=nu)
                    out.pop("omega")
                    row.update(out)
                except CopulaPriorError as exc:
                    row.update(rmse=float("nan"), error=f"{type(exc).__name__}: {exc}")
                    excluded.append({"design": sim.id, "method": m.value, "replication": rep,
                                     "error": row["error"]})
                row["seconds"] = round(time.perf_counter() - t0, 6)
                rows.append(row)
            if progress is not None:
                progress(sim.id, rep)
    summary = {}
    for sim in sims:
        summary[sim.id] = {}
        for k, m in enumerate(methods):
            vals = np.array([r["rmse"] for r in rows
                             if r["design"] == sim.id and r["method"] == m.value and r["error"] is None])
            summary[sim.id][m.value] = {
                "median": float(np.median(vals)) if vals.size else float("nan"),
                "se": bootstrap_se_median(vals, B, replication_seed(seed, 10_000 + k)),
                "n": int(vals.size),
            }
    return ExperimentRecord(rows, summary, seed, replications, time.perf_counter() - t_start, excluded)


# -- theory checks ---------------------------------------------------------------------

def grouping_bound(fit_omega, problem, k, l, constant=np.sqrt(np.pi / 2)):
    """Both sides of the grouping inequality for the pair (k, l).

    ``D = |q_k - q_l| dq_k/dw_k`` is compared with
    ``|y| sqrt(2(1 - r_lk)) / |r*_kl| + constant * lam * |q_rest| * |dr*| / |r*_kl|``
    where ``r`` are correlations, ``r*`` partial correlations and ``q_rest``
    collects the scores of all other coefficients.
    """
    spec = problem.prior
    sigma = spec.sigma
    q, dq = q_map(fit_omega, spec)
    d_lambda = abs(q[k] - q[l]) * dq[k]
    rest = [j for j in range(problem.p) if j not in (k, l)]
    pk = sigma.partials[k, l]
    r_lk = sigma.values[l, k]
    y_norm = float(np.linalg.norm(problem.y))
    first = y_norm * np.sqrt(max(2.0 * (1.0 - r_lk), 0.0)) / abs(pk)
    dpart = sigma.partials[rest, l] - sigma.partials[rest, k]
    second = constant * spec.lam * float(np.linalg.norm(q[rest])) * float(np.linalg.norm(dpart)) / abs(pk)
    return d_lambda, first + second, first, second


def check_grouping_theorem(fit, problem, pairs, constants=None):
    """Evaluate the grouping bound on each requested pair.

    Pairs are reordered so that ``w_k >= w_l``; pairs without two strictly
    positive coefficients (after flipping a common negative sign) are skipped
    with a note.  The bound is reported for the sqrt(pi/2) constant (the
    derivative of the Gauss q-map at zero, per unit lambda) and the pi/2
    variant.
    """
    if problem.prior.family is not Family.GAUSS:
        raise InvalidParameterError("the grouping bound is stated for the Gauss copula prior")
    constants = constants or {"sqrt_pi_over_2": np.sqrt(np.pi / 2), "pi_over_2": np.pi / 2}
    w = np.asarray(getattr(fit, "omega_hat", fit), dtype=np.float64)
    report = []
    for k, l in pairs:
        wk, wl = w[k], w[l]
        if wk < 0 and wl < 0:
            wk, wl = -wk, -wl
            omega = -w
        else:
            omega = w
        if not (wk > 0 and wl > 0):
            report.append({"pair": (int(k), int(l)), "skipped": True,
                           "note": "coefficients are not both nonzero with a common sign"})
            continue
        if wk < wl:
            k, l = l, k
        entry = {"pair": (int(k), int(l)), "skipped": False}
        for name, const in constants.items():
            d, bound, first, second = grouping_bound(omega, problem, k, l, const)
            entry[name] = {"D_lambda": float(d), "bound": float(bound), "first_term": float(first),
                           "second_term": float(second), "holds": bool(d <= bound)}
        entry["D_lambda"] = entry[next(iter(constants))]["D_lambda"]
        entry["bound"] = entry[next(iter(constants))]["bound"]
        entry["holds"] = entry[next(iter(constants))]["holds"]
        report.append(entry)
    return report


def assumption2_sides(spec, wk, wl):
    """Left and right sides of the same-sign inequality used in the grouping lemma."""
    (qk, ql, qs), (dk, dl, _) = q_map(np.array([wk, wl, wk + wl]), spec)
    denom = dl - dk
    lhs = qs * (qk * dl - ql * dk) / denom
    rhs = (qk ** 2 * dl - ql ** 2 * dk) / denom
    return float(lhs), float(rhs)


def check_assumptions(spec, grid=None, n_pairs=10_000, seed=0, tol=1e-8):
    """Numerical scan of the q-map shape assumptions for the Gauss copula.

    Concavity of q on (0, 30/lam] and convexity on the mirrored negative axis
    are tested by second differences on ``grid`` (default 10^4 points).  The
    pairwise inequality is sampled on ``n_pairs`` random same-sign pairs and its
    violation fraction reported (no pass/fail threshold is implied).
    """
    if spec.family is not Family.GAUSS:
        raise InvalidParameterError("assumption checks are defined for the Gauss copula prior")
    lam = spec.lam
    if grid is None:
        grid = np.linspace(30.0 / lam / 10_000, 30.0 / lam, 10_000)
    grid = np.asarray(grid, dtype=np.float64)
    q_pos, _ = q_map(grid, spec)
    q_neg, _ = q_map(-grid, spec)
    d2_pos = q_pos[2:] - 2.0 * q_pos[1:-1] + q_pos[:-2]
    d2_neg = q_neg[2:] - 2.0 * q_neg[1:-1] + q_neg[:-2]
    rng = np.random.default_rng(seed)
    span = 30.0 / lam
    violations = 0
    evaluated = 0
    for _ in range(n_pairs):
        a, b = rng.uniform(0.0, span / 2, size=2)
        if a == b:
            continue
        lhs, rhs = assumption2_sides(spec, a, b)
        if not (np.isfinite(lhs) and np.isfinite(rhs)):
            continue
        evaluated += 1
        violations += int(not lhs < rhs)
    return {
        "lambda": lam,
        "concavity_violations": int(np.sum(d2_pos > tol)),
        "convexity_violations": int(np.sum(d2_neg < -tol)),
        "grid_points": int(grid.size),
        "assumption2_pairs": evaluated,
        "assumption2_violations": violations,
        "assumption2_violation_fraction": violations / evaluated if evaluated else float("nan"),
        "dq_at_zero": float(q_map(np.array([0.0]), spec).dq_domega[0]),
        "dq_at_zero_expected": float(lam * np.sqrt(np.pi / 2)),
    }


def block_pairs(n_blocks=3, block_size=5):
    pairs = []
    for b in range(n_blocks):
        cols = range(b * block_size, (b + 1) * block_size)
        pairs.extend((k, l) for i, k in enumerate(cols) for l in list(cols)[i + 1:])
    return pairs


def within_block_spread(omega, n_blocks=3, block_size=5):
    w = np.asarray(omega)
    return max(float(np.ptp(w[b * block_size:(b + 1) * block_size])) for b in range(n_blocks))


def normal_median_se_oracle(n):
    """Asymptotic standard error of the sample median of n standard normals."""
    return float(np.sqrt(np.pi / 2) / np.sqrt(n))


def q_concavity_profile(lam, upper=None, points=10_000):
    upper = upper or 30.0 / lam
    grid = np.linspace(upper / points, upper, points)
    return grid, q_map(grid, PriorSpec(Family.GAUSS, lam)).q


def grouping_audit(seeds, sim=None, lam=None, options=None, c=DEFAULT_C, grid_count=DEFAULT_COUNT,
                   grid_ratio=DEFAULT_RATIO):
    """Run the grouping bound over block pairs for several simulated data sets.

    For each seed a Gauss copula fit is made on the training split (lambda
    tuned on the validation split unless ``lam`` is given) and every
    within-block pair is checked.  Returns per-run summaries and the pooled
    fraction of eligible pairs on which each constant's bound holds.
    """
    sim = sim if isinstance(sim, SimDesign) else design(sim or "ex4")
    if sim.n_blocks == 0:
        raise InvalidParameterError(f"design {sim.id} has no feature blocks to audit")
    pairs = block_pairs(sim.n_blocks, sim.block_size)
    runs, pooled = [], {}
    for seed in seeds:
        train, valid, _ = generate(sim, seed)
        std, rec = standardize(train)
        prior = PriorSpec(Family.GAUSS, 1.0 if lam is None else lam, sigma=estimate_sigma(std.X, c))
        problem = Problem(std.X, std.y, prior, SQUARED_ERROR)
        if lam is None:
            tuned = validation_tune(problem, rec.transform(valid),
                                    make_lambda_grid(problem, grid_count, grid_ratio), options=options)
            fit, lam_s = tuned.fit, tuned.lam
        else:
            fit, lam_s = solve(problem, options), lam
        report = check_grouping_theorem(fit, problem.with_prior(prior.with_lambda(lam_s)), pairs)
        eligible = [r for r in report if not r["skipped"]]
        counts = {}
        for name in ("sqrt_pi_over_2", "pi_over_2"):
            held = sum(r[name]["holds"] for r in eligible)
            counts[name] = held
            tot = pooled.setdefault(name, [0, 0])
            tot[0] += held
            tot[1] += len(eligible)
        runs.append({"seed": int(seed), "lambda": float(lam_s), "eligible_pairs": len(eligible),
                     "holds": counts, "converged": bool(fit.converged),
                     "violations": [{"pair": r["pair"], "D_lambda": r["D_lambda"], "bound": r["bound"]}
                                    for r in eligible if not r["holds"]]})
    fractions = {k: (v[0] / v[1] if v[1] else float("nan")) for k, v in pooled.items()}
    return {"runs": runs, "eligible_pairs": next(iter(pooled.values()))[1] if pooled else 0,
            "holds_fraction": fractions}
