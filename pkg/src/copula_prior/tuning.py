"""Hyperparameter selection: lambda grids, k-fold CV and validation-set tuning."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .copula import Family, PriorSpec
from .data import CLASSIFICATION, Dataset
from .errors import (DataError, DegenerateFeatureError, DegenerateGridError, FoldTooSmallError,
                     InvalidParameterError, LinAlgError)
from .sigma import DEFAULT_C
from .solver import LOGISTIC, prepare, solution_path

DEFAULT_COUNT = 50
DEFAULT_RATIO = 1e-3
ALPHA_GRID = tuple(np.round(np.linspace(0.0, 1.0, 11), 10))
NU_GRID = (5.0, 10.0, 30.0)


def lambda_max(problem):
    """Smallest lambda for which the zero vector is stationary (independence prior)."""
    X, y = problem.X, problem.y
    if problem.loss == LOGISTIC:
        return float(np.max(np.abs(X.T @ (y - y.mean())), initial=0.0))
    return 2.0 * float(np.max(np.abs(X.T @ y), initial=0.0))


def make_lambda_grid(problem, count=DEFAULT_COUNT, ratio=DEFAULT_RATIO):
    """Log-spaced decreasing grid from ``lambda_max`` to ``ratio * lambda_max``."""
    if count < 2:
        raise InvalidParameterError("grid needs at least two points")
    if not 0.0 < ratio < 1.0:
        raise InvalidParameterError("ratio must lie in (0, 1)")
    top = lambda_max(problem)
    if not top > 0.0:
        raise DegenerateGridError("X'y is zero: no penalty level gives a nonzero fit")
    return np.geomspace(top, top * ratio, int(count))


def _argmin_prefer_first(values, rtol=1e-12):
    """Index of the minimum; among near-ties the first (largest lambda) wins."""
    values = np.asarray(values, dtype=np.float64)
    best = np.nanmin(values)
    tie = values <= best + rtol * abs(best)
    return int(np.flatnonzero(tie)[0])


def prediction_loss(task, y_true, eta):
    """MSE for regression, misclassification rate for classification."""
    if task == CLASSIFICATION:
        return float(np.mean((eta > 0.0).astype(float) != y_true))
    return float(np.mean((y_true - eta) ** 2))


def path_losses(path, X_eval, y_eval, task, y_offset=0.0):
    """Held-out loss of every fit on a path.  ``X_eval`` is standardised."""
    out = np.empty(len(path))
    for i, fit in enumerate(path):
        eta = X_eval @ fit.omega_hat + fit.intercept + y_offset
        out[i] = prediction_loss(task, y_eval, eta)
    return out


@dataclass
class CVReport:
    lambda_grid: np.ndarray
    fold_losses: np.ndarray
    mean_loss: np.ndarray
    se_loss: np.ndarray
    lambda_min: float
    lambda_1se: float
    folds: np.ndarray = field(repr=False)
    seed: int = 0
    k: int = 0

    @property
    def index_min(self):
        return int(np.flatnonzero(self.lambda_grid == self.lambda_min)[0])

    def to_dict(self):
        return {
            "lambda_grid": self.lambda_grid.tolist(),
            "fold_losses": self.fold_losses.tolist(),
            "mean_loss": self.mean_loss.tolist(),
            "se_loss": self.se_loss.tolist(),
            "lambda_min": self.lambda_min,
            "lambda_1se": self.lambda_1se,
            "k": self.k,
            "seed": self.seed,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "mean_loss", "se_loss"])
            for lam, m, s in zip(self.lambda_grid, self.mean_loss, self.se_loss):
                w.writerow([repr(float(lam)), repr(float(m)), repr(float(s))])


def assign_folds(n, k, seed):
    """Fold label per row: a seeded permutation cut into k near-equal parts."""
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=np.int64)
    for f, idx in enumerate(np.array_split(perm, k)):
        labels[idx] = f
    return labels


def cross_validate(data: Dataset, prior: PriorSpec, grid, k=10, seed=0, options=None, c=DEFAULT_C,
                   folds=None):
    """k-fold cross-validation of ``prior`` over a lambda grid.

    Standardisation and the dependence matrix are recomputed from the
    training part of every fold, so held-out rows never influence them.
    ``folds`` optionally fixes the fold label (0 .. k-1) of every row, in
    which case ``k`` and ``seed`` are taken from it and ignored.
    """
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    if folds is not None:
        folds = np.asarray(folds, dtype=np.int64).reshape(-1)
        if folds.size != data.n:
            raise InvalidParameterError(f"{folds.size} fold labels for {data.n} rows")
        k = int(folds.max()) + 1
        if folds.min() < 0 or np.unique(folds).size != k:
            raise InvalidParameterError("fold labels must cover 0 .. k-1 without gaps")
    if k < 2:
        raise InvalidParameterError("k must be at least 2")
    if k > data.n:
        raise FoldTooSmallError(f"k={k} folds requested for only {data.n} rows; use a smaller k")
    template = prior.with_sigma(None) if prior.family.is_copula else prior
    if folds is None:
        folds = assign_folds(data.n, k, seed)
    losses = np.empty((grid.size, k))
    for f in range(k):
        train, test = data.subset(folds != f), data.subset(folds == f)
        if train.n < 2:
            raise FoldTooSmallError(f"fold {f} leaves {train.n} training rows; use a smaller k")
        try:
            problem, rec = prepare(train, template, c)
        except (DegenerateFeatureError, LinAlgError) as exc:
            raise FoldTooSmallError(
                f"fold {f}: cannot estimate the dependence matrix from {train.n} training rows "
                f"({exc}); use a smaller k") from exc
        path = solution_path(problem, grid, options)
        y_off = rec.y_mean if data.task != CLASSIFICATION else 0.0
        losses[:, f] = path_losses(path, rec.transform_X(test.X), test.y, data.task, y_off)
    mean = losses.mean(axis=1)
    se = losses.std(axis=1, ddof=1) / np.sqrt(k)
    i = _argmin_prefer_first(mean)
    within = np.flatnonzero(mean <= mean[i] + se[i])
    return CVReport(grid, losses, mean, se, float(grid[i]), float(grid[within[0]]), folds, seed, k)


@dataclass
class TuneResult:
    lam: float
    alpha: float
    nu: float
    loss: float
    table: list
    fit: object = field(repr=False, default=None)

    def to_dict(self):
        return {"lambda": self.lam, "alpha": self.alpha, "nu": self.nu, "validation_loss": self.loss}


def validation_tune(train, validation, grid, alphas=None, nus=None, options=None, y_offset=0.0):
    """Select lambda (and alpha / nu when grids are given) on a validation set.

    ``train`` is a standardised :class:`Problem`; ``validation`` a
    :class:`Dataset` already transformed with the training statistics.  The
    lowest validation loss wins; ties go to the larger lambda.  For the
    elastic net ``alphas`` defaults to {0, 0.1, ..., 1}.
    """
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    fam = train.prior.family
    if alphas is None:
        alphas = ALPHA_GRID if fam is Family.ELASTIC_NET else (train.prior.alpha,)
    if nus is None or fam is not Family.T:
        nus = (train.prior.nu,)
    best = None
    table = []
    for a in alphas:
        for nu in nus:
            prior = PriorSpec(fam, train.prior.lam, alpha=float(a), nu=float(nu), sigma=train.prior.sigma)
            path = solution_path(train.with_prior(prior), grid, options)
            losses = path_losses(path, validation.X, validation.y, validation.task, y_offset)
            i = _argmin_prefer_first(losses)
            table.append({"alpha": float(a), "nu": float(nu), "losses": losses.tolist()})
            if best is None or losses[i] < best[0] * (1 - 1e-12) - 1e-300:
                best = (float(losses[i]), float(grid[i]), float(a), float(nu), path[i])
    if best is None:
        raise DataError("empty tuning grid")
    loss, lam, a, nu, fit = best
    return TuneResult(lam, a, nu, loss, table, fit)
