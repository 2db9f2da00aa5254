"""Median-of-subsample fitting for large n.

``M`` subsamples of size ``m`` are drawn, each is standardised and fitted on
its own (with its own dependence matrix for copula priors), and the final
coefficients are the coordinate-wise median of the ``M`` solutions.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .copula import PriorSpec
from .data import Dataset, standardize
from .errors import DataError, DegenerateFeatureError, InvalidParameterError, LinAlgError
from .sigma import DEFAULT_C
from .solver import FitResult, SolverOptions, fit, prepare
from .tuning import cross_validate, make_lambda_grid

MAX_RETRIES = 5


@dataclass(frozen=True)
class ResampleConfig:
    """Subsample size ``m``, replicate count ``M`` and the sampling scheme."""

    m: int
    M: int
    seed: int = 0
    with_replacement: bool = True

    def validate(self, n):
        if self.M < 1:
            raise InvalidParameterError(f"M must be at least 1, got {self.M}")
        if not 1 <= self.m <= n:
            raise InvalidParameterError(f"m must lie in [1, n={n}], got {self.m}")


@dataclass
class ResampleResult:
    fit: FitResult
    solutions: np.ndarray
    intercepts: np.ndarray
    lam: float
    lam_tuned: bool
    retries: int = 0
    draws: list = field(default_factory=list, repr=False)

    def to_csv(self, path, names=None):
        """Write the M x p matrix of original-scale solutions, one row per replicate."""
        p = self.solutions.shape[1]
        names = list(names) if names else [f"x{j + 1}" for j in range(p)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replicate", "intercept"] + names)
            for i, (b, row) in enumerate(zip(self.intercepts, self.solutions)):
                w.writerow([i, repr(float(b))] + [repr(float(v)) for v in row])


def coordinate_median(values):
    """Column-wise median; for an even count the midpoint of the two central values."""
    a = np.sort(np.asarray(values, dtype=np.float64), axis=0)
    k = a.shape[0]
    if k % 2:
        return a[k // 2].copy()
    return 0.5 * (a[k // 2 - 1] + a[k // 2])


def draw_indices(n, m, rng, with_replacement=True):
    """Sorted row indices of one subsample."""
    idx = rng.choice(n, size=m, replace=with_replacement)
    return np.sort(idx)


def _streams(seed, M):
    # one generator per replicate plus one for the tuning subsample
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(M + 1)]


def tune_lambda(data, prior, rng, m, with_replacement, k=10, grid_count=50, grid_ratio=1e-3,
                options=None, c=DEFAULT_C):
    """Cross-validate lambda on one seeded subsample of size ``m``."""
    sub = data.subset(draw_indices(data.n, m, rng, with_replacement))
    problem, _ = prepare(sub, prior.with_sigma(None) if prior.family.is_copula else prior, c)
    grid = make_lambda_grid(problem, grid_count, grid_ratio)
    report = cross_validate(sub, prior, grid, k=min(k, sub.n), seed=int(rng.integers(2**31)),
                            options=options, c=c)
    return report.lambda_min


def resample_fit(data: Dataset, prior: PriorSpec, config: ResampleConfig, options=None,
                 tune=False, cv_k=10, c=DEFAULT_C, fitter=None, draws=None):
    """Fit ``M`` subsamples and combine them by the coordinate-wise median.

    Parameters
    ----------
    data : Dataset
        Raw (unstandardised) data; each subsample is standardised separately.
    prior : PriorSpec
        Its ``lam`` is used unless ``tune`` is set.  A fixed ``sigma`` is
        ignored for copula priors: it is re-estimated on every subsample.
    config : ResampleConfig
    tune : bool
        Choose lambda once by ``cv_k``-fold CV on a separate seeded subsample
        and reuse it for all replicates.
    fitter : callable, optional
        ``fitter(subset, prior, options) -> FitResult``; defaults to
        :func:`copula_prior.solver.fit`.
    draws : list of index arrays, optional
        Explicit subsample indices (overrides the seeded draws).

    Returns
    -------
    ResampleResult
        ``fit.coef_original`` holds the median coefficients on the raw
        feature scale; ``fit.omega_hat`` the same vector on the scale of the
        full data standardised.  With ``M == 1`` the single replicate's own
        fit is returned unchanged.
    """
    config.validate(data.n)
    opts = options or SolverOptions()
    fitter = fitter or (lambda sub, pr, o: fit(sub, pr, o, c))
    rngs = _streams(config.seed, config.M)
    lam = float(prior.lam)
    if tune:
        lam = tune_lambda(data, prior, rngs[-1], config.m, config.with_replacement, cv_k,
                          options=opts, c=c)
    base_prior = prior.with_lambda(lam)
    if base_prior.family.is_copula:
        base_prior = base_prior.with_sigma(None)

    coefs, intercepts, used_draws, flags = [], [], [], []
    retries = 0
    for i in range(config.M):
        o = replace(opts, seed=opts.seed + i)
        for attempt in range(MAX_RETRIES + 1):
            if draws is not None and attempt == 0:
                idx = np.asarray(draws[i])
            else:
                idx = draw_indices(data.n, config.m, rngs[i], config.with_replacement)
            try:
                res = fitter(data.subset(idx), base_prior, o)
                break
            except (DegenerateFeatureError, LinAlgError) as exc:
                if attempt == MAX_RETRIES:
                    raise DataError(f"replicate {i}: {MAX_RETRIES + 1} subsamples in a row were degenerate "
                                    f"({exc}); increase m") from exc
                retries += 1
        used_draws.append(idx)
        coefs.append(res.coef_original)
        intercepts.append(res.intercept_original)
        flags.append(bool(res.converged))

    solutions = np.vstack(coefs)
    b = np.asarray(intercepts, dtype=np.float64)
    coef = coordinate_median(solutions)
    b0 = float(coordinate_median(b[:, None])[0])
    _, full_rec = standardize(data)
    omega = coef * full_rec.x_scale
    if config.M == 1:
        final = res
    else:
        final = FitResult(omega_hat=omega, intercept=b0 - full_rec.y_mean + float(full_rec.x_mean @ coef),
                          objective=float("nan"), constraint_residual=0.0, projected_gradient=float("nan"),
                          iterations=0, converged=all(flags), restarts_used=0, lam=lam,
                          coef_original=coef, intercept_original=b0, record=full_rec, prior=base_prior)
    return ResampleResult(final, solutions, b, lam, tune, retries, used_draws)
