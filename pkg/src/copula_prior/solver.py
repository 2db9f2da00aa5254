"""Posterior-mode fitting with split variables and an augmented Lagrangian.

Each coefficient is written ``w = w_plus - w_minus`` with both parts
nonnegative, so ``|w| = w_plus + w_minus`` and the penalised objective is
smooth on the nonnegative orthant.  The complementarity constraint
``sum(w_plus * w_minus) = 0`` is enforced by an augmented Lagrangian whose
bound-constrained subproblems are solved by a limited-memory projected
quasi-Newton method (compiled core, or scipy's L-BFGS-B in the fallback).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import expit

from . import kernels
from .copula import Family, PriorSpec, smooth_penalty
from .data import CLASSIFICATION, Dataset, StandardizationRecord, standardize
from .errors import DataError, InvalidParameterError, SolverDivergedError
from .sigma import DEFAULT_C, estimate_sigma

SQUARED_ERROR = "squared-error"
LOGISTIC = "logistic"
# inner solves aim this much tighter than the outer stationarity test
INNER_GTOL_FACTOR = 1e-1


@dataclass(eq=False)
class Problem:
    """A standardised penalised-regression problem.

    ``X`` has mean-0 / variance-1 columns; ``y`` is centred for the squared
    error loss and 0/1 for the logistic loss (which gets an unpenalised
    intercept).
    """

    X: np.ndarray
    y: np.ndarray
    prior: PriorSpec
    loss: str = SQUARED_ERROR
    check: bool = True

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64).reshape(-1)
        if self.loss not in (SQUARED_ERROR, LOGISTIC):
            raise InvalidParameterError(f"unknown loss {self.loss!r}")
        n, p = self.X.shape
        if self.y.shape[0] != n:
            raise DataError(f"{n} rows in X but {self.y.shape[0]} responses")
        if self.prior.family.is_copula:
            self.prior.require_sigma(p)
        if not self.check:
            return
        if self.loss == SQUARED_ERROR and abs(self.y.mean()) > 1e-10 * (1.0 + np.abs(self.y).max()):
            raise DataError("regression response must be centred")
        if self.loss == LOGISTIC and np.any((self.y != 0) & (self.y != 1)):
            raise DataError("logistic response must be 0/1")
        if np.max(np.abs(self.X.mean(axis=0)), initial=0.0) > 1e-8 or \
                np.max(np.abs(self.X.var(axis=0) - 1.0), initial=0.0) > 1e-8:
            raise DataError("feature columns must be standardised (mean 0, variance 1)")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def has_intercept(self):
        return self.loss == LOGISTIC

    def with_prior(self, prior):
        return replace(self, prior=prior, check=False)

    def is_convex(self):
        fam = self.prior.family
        if fam in (Family.LASSO, Family.ELASTIC_NET):
            return True
        return fam is Family.GAUSS and self.prior.sigma.is_identity()


@dataclass
class SolverOptions:
    tol_grad: float = 1e-6
    tol_constraint: float = 1e-6
    max_outer: int = 200
    max_inner: int = 500
    restarts: int = 3
    seed: int = 0
    rho_init: float = 10.0
    rho_growth: float = 10.0
    rho_max: float = 1e8
    init_value: float = 1e-3
    trace: Callable[[dict], None] | None = None


@dataclass
class SplitState:
    omega_plus: np.ndarray
    omega_minus: np.ndarray
    mu: float = 0.0
    rho: float = 10.0
    intercept: float = 0.0

    @property
    def omega(self):
        return self.omega_plus - self.omega_minus

    @property
    def complementarity(self):
        return float(self.omega_plus @ self.omega_minus)

    @classmethod
    def from_omega(cls, omega, offset=0.0, intercept=0.0):
        w = np.asarray(omega, dtype=np.float64)
        return cls(np.maximum(w, 0.0) + offset, np.maximum(-w, 0.0) + offset, intercept=intercept)


@dataclass
class FitResult:
    omega_hat: np.ndarray
    intercept: float
    objective: float
    constraint_residual: float
    projected_gradient: float
    iterations: int
    converged: bool
    restarts_used: int
    lam: float
    state: SplitState | None = field(default=None, repr=False)
    history: list = field(default_factory=list, repr=False)
    coef_original: np.ndarray | None = None
    intercept_original: float | None = None
    record: StandardizationRecord | None = field(default=None, repr=False)
    prior: PriorSpec | None = field(default=None, repr=False)

    def selected(self, threshold=1e-6):
        return np.flatnonzero(np.abs(self.omega_hat) > threshold)

    def predict(self, X_raw):
        """Predictions on the raw feature scale (probabilities for logistic fits)."""
        if self.coef_original is None:
            raise InvalidParameterError("fit has no original-scale coefficients; fit it through fit()")
        eta = np.asarray(X_raw, dtype=np.float64) @ self.coef_original + self.intercept_original
        if self.record is not None and self.record.task == CLASSIFICATION:
            return expit(eta)
        return eta


# -- objective and gradient ---------------------------------------------------------

def _loss_and_grad(problem, omega, intercept):
    X, y = problem.X, problem.y
    if problem.loss == SQUARED_ERROR:
        r = y - X @ omega
        return float(r @ r), -2.0 * (X.T @ r), 0.0
    eta = X @ omega + intercept
    val = float(np.sum(np.logaddexp(0.0, eta) - y * eta))
    resid = expit(eta) - y
    return val, X.T @ resid, float(resid.sum())


def loss_value(problem, omega, intercept=0.0):
    return _loss_and_grad(problem, np.asarray(omega, dtype=np.float64), intercept)[0]


def objective(state, problem):
    """Loss plus penalty at a split state (the l1 part as ``sum(w+ + w-)``)."""
    w = state.omega
    loss, _, _ = _loss_and_grad(problem, w, state.intercept)
    smooth, _ = smooth_penalty(w, problem.prior)
    l1 = problem.prior.l1_weight * float(np.sum(state.omega_plus + state.omega_minus))
    return loss + smooth + l1


def gradient(state, problem):
    """Gradients of :func:`objective` with respect to ``w_plus`` and ``w_minus``."""
    w = state.omega
    _, g_loss, _ = _loss_and_grad(problem, w, state.intercept)
    _, g_pen = smooth_penalty(w, problem.prior)
    g = g_loss + g_pen
    lw = problem.prior.l1_weight
    return g + lw, -g + lw


_FAMILY_CODES = {Family.LASSO: kernels.FAM_LASSO, Family.ELASTIC_NET: kernels.FAM_ENET,
                 Family.GAUSS: kernels.FAM_GAUSS, Family.T: kernels.FAM_T}


def make_objective(problem):
    """Compiled (or NumPy) augmented-Lagrangian objective for ``problem``."""
    prior = problem.prior
    sigma = prior.sigma if prior.family.is_copula else None
    loss = kernels.LOSS_LOGISTIC if problem.has_intercept else kernels.LOSS_SQUARED
    return kernels.ALObjective(problem.X, problem.y, loss, _FAMILY_CODES[prior.family],
                               None if sigma is None else sigma.precision, float(prior.lam),
                               float(prior.alpha), float(prior.nu),
                               identity=sigma is None or sigma.is_identity())


def _unpack(z, p, has_intercept):
    return z[:p], z[p:2 * p], (float(z[2 * p]) if has_intercept else 0.0)


def _projected_grad_norm(z, grad, n_bounded):
    g = grad.copy()
    at_bound = (z[:n_bounded] <= 0.0) & (g[:n_bounded] > 0.0)
    g[:n_bounded][at_bound] = 0.0
    return float(np.max(np.abs(g), initial=0.0))


def _initial_vector(problem, omega_plus, omega_minus, intercept):
    parts = [omega_plus, omega_minus]
    if problem.has_intercept:
        parts.append([intercept])
    return np.concatenate(parts).astype(np.float64)


def _default_intercept(problem):
    if not problem.has_intercept:
        return 0.0
    m = float(np.clip(problem.y.mean(), 1e-6, 1 - 1e-6))
    return math.log(m / (1.0 - m))


def _al_solve(problem, z0, opts, start_index=0):
    ev = make_objective(problem)
    p = problem.p
    n_bounded = 2 * p
    z = np.maximum(z0, 0.0) if not problem.has_intercept else np.concatenate(
        [np.maximum(z0[:n_bounded], 0.0), z0[n_bounded:]])
    ev.mu, ev.rho = 0.0, opts.rho_init
    c_prev = math.inf
    f_prev = math.inf
    history = []
    converged = False
    outer = 0
    f = pg = c = math.nan
    for outer in range(1, opts.max_outer + 1):
        f0, _ = ev.base(z)
        if not math.isfinite(f0):
            raise SolverDivergedError("non-finite objective at start of subproblem", trace=history)
        gtol = INNER_GTOL_FACTOR * opts.tol_grad * (1.0 + abs(f0))
        z_new, _, nit, _, _ = kernels.minimize_bound(ev, z, n_bounded, opts.max_inner, gtol, 1e-15)
        f, g = ev.base(z_new)
        if not math.isfinite(f):
            raise SolverDivergedError("objective became non-finite", trace=history)
        wp, wm, _ = _unpack(z_new, p, problem.has_intercept)
        c = float(wp @ wm)
        g[:p] += ev.mu * wm
        g[p:2 * p] += ev.mu * wp
        pg = _projected_grad_norm(z_new, g, n_bounded)
        # no measurable progress while feasible: the subproblem cannot move
        # (typically an optimum sitting on a nonsmooth point of the penalty)
        stalled = abs(f_prev - f) <= 1e-13 * (1.0 + abs(f)) and \
            float(np.max(np.abs(z_new - z), initial=0.0)) <= 1e-10 * (1.0 + float(np.max(np.abs(z))))
        f_prev = f
        z = z_new
        rec = {"start": start_index, "outer": outer, "objective": f, "constraint": c,
               "projected_grad": pg, "mu": ev.mu, "rho": ev.rho, "inner_iterations": int(nit)}
        history.append(rec)
        if opts.trace is not None:
            opts.trace(rec)
        if c <= opts.tol_constraint and pg <= opts.tol_grad * (1.0 + abs(f)):
            converged = True
            break
        if stalled and c <= opts.tol_constraint:
            break
        ev.mu += ev.rho * c
        if c > 0.25 * c_prev:
            ev.rho = min(ev.rho * opts.rho_growth, opts.rho_max)
        c_prev = c
    wp, wm, b = _unpack(z, p, problem.has_intercept)
    state = SplitState(wp.copy(), wm.copy(), ev.mu, ev.rho, b)
    return state, f, c, pg, outer, converged, history


def _better(a, b):
    """True if candidate ``a`` should replace incumbent ``b`` (tuples from _al_solve)."""
    if b is None:
        return True
    feas_a = a[2] <= 1e-6
    feas_b = b[2] <= 1e-6
    if feas_a != feas_b:
        return feas_a
    return a[1] < b[1]


def solve(problem, options=None, start=None):
    """Minimise loss + penalty for ``problem``.

    Parameters
    ----------
    problem : Problem
    options : SolverOptions, optional
    start : SplitState, optional
        Warm start; defaults to ``w+ = w- = init_value``.

    Returns
    -------
    FitResult
        Non-convergence within the iteration caps is reported through
        ``converged=False`` rather than raised.
    """
    opts = options or SolverOptions()
    p = problem.p
    if start is None:
        b0 = _default_intercept(problem)
        z0 = _initial_vector(problem, np.full(p, opts.init_value), np.full(p, opts.init_value), b0)
    else:
        z0 = _initial_vector(problem, start.omega_plus, start.omega_minus, start.intercept)
    best = _al_solve(problem, z0, opts, 0)
    history = list(best[6])
    used = 0
    if opts.restarts > 0 and not problem.is_convex():
        rng = np.random.default_rng(opts.seed)
        w_first = best[0].omega
        spread = max(1.0, float(np.max(np.abs(w_first), initial=0.0)))
        for r in range(opts.restarts):
            draw = rng.standard_normal(p) * spread
            zr = _initial_vector(problem, np.maximum(draw, 0.0) + opts.init_value,
                                 np.maximum(-draw, 0.0) + opts.init_value, best[0].intercept)
            cand = _al_solve(problem, zr, opts, r + 1)
            history.extend(cand[6])
            used += 1
            if _better(cand, best):
                best = cand
    state, f, c, pg, outer, converged, _ = best
    return FitResult(
        omega_hat=state.omega, intercept=state.intercept, objective=f, constraint_residual=c,
        projected_gradient=pg, iterations=outer, converged=converged, restarts_used=used,
        lam=problem.prior.lam, state=state, history=history, prior=problem.prior)


@dataclass
class SolutionPath:
    lambdas: np.ndarray
    fits: list
    lipschitz: float

    def __iter__(self):
        return iter(self.fits)

    def __len__(self):
        return len(self.fits)

    def __getitem__(self, i):
        return self.fits[i]

    @property
    def coefs(self):
        return np.array([f.omega_hat for f in self.fits])


def solution_path(problem, lambda_grid, options=None):
    """Fit a strictly decreasing sequence of lambdas with warm starts.

    ``lipschitz`` records ``max ||w_k - w_{k-1}||_inf / |lam_k - lam_{k-1}|``.
    """
    grid = np.asarray(lambda_grid, dtype=np.float64).reshape(-1)
    if grid.size == 0:
        raise InvalidParameterError("empty lambda grid")
    if np.any(np.diff(grid) >= 0):
        raise InvalidParameterError("lambda grid must be strictly decreasing")
    opts = options or SolverOptions()
    fits = []
    start = None
    for lam in grid:
        fit = solve(problem.with_prior(problem.prior.with_lambda(lam)), opts, start)
        fits.append(fit)
        start = SplitState(fit.state.omega_plus, fit.state.omega_minus, intercept=fit.intercept)
    lip = 0.0
    for k in range(1, len(fits)):
        step = float(np.max(np.abs(fits[k].omega_hat - fits[k - 1].omega_hat), initial=0.0))
        lip = max(lip, step / (grid[k - 1] - grid[k]))
    return SolutionPath(grid, fits, lip)


# -- dataset-level helpers -------------------------------------------------------------

def loss_for(task):
    return LOGISTIC if task == CLASSIFICATION else SQUARED_ERROR


def prepare(data, prior, c=DEFAULT_C):
    """Standardise ``data``, estimate the dependence matrix if the prior
    needs one, and return ``(problem, record)``."""
    std, rec = standardize(data)
    if prior.family.is_copula and prior.sigma is None:
        prior = prior.with_sigma(estimate_sigma(std.X, c, std.names))
    return Problem(std.X, std.y, prior, loss_for(data.task)), rec


def attach_original(fit, record):
    fit.record = record
    fit.coef_original, fit.intercept_original = record.coef_to_original(fit.omega_hat, fit.intercept)
    return fit


def fit(data: Dataset, prior: PriorSpec, options=None, c=DEFAULT_C):
    """Standardise, estimate the dependence matrix, solve and back-transform."""
    problem, rec = prepare(data, prior, c)
    return attach_original(solve(problem, options), rec)


def write_trace_jsonl(path):
    """Return a trace callback appending one JSON object per outer iteration."""
    fh = open(path, "a")

    def _trace(rec):
        fh.write(json.dumps(rec) + "\n")
        fh.flush()

    _trace.close = fh.close
    return _trace
