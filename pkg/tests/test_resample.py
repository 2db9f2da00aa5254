import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copula_prior.copula import Family, PriorSpec
from copula_prior.data import Dataset
from copula_prior.errors import DataError, InvalidParameterError, LinAlgError
from copula_prior.resample import (MAX_RETRIES, ResampleConfig, coordinate_median, draw_indices,
                                   resample_fit)
from copula_prior.solver import FitResult, SolverOptions, fit


def make_data(rng, n=200, p=6):
    X = rng.standard_normal((n, p)) + 0.5 * rng.standard_normal((n, 1))
    y = X @ np.linspace(2.0, -1.0, p) + 3.0 + rng.standard_normal(n)
    return Dataset(X, y)


def planted(values):
    """A fitter returning pre-set original-scale solutions, one per call."""
    it = iter(values)

    def fitter(sub, prior, opts):
        coef = np.asarray(next(it), dtype=float)
        return FitResult(coef, 0.0, 0.0, 0.0, 0.0, 1, True, 0, prior.lam,
                         coef_original=coef, intercept_original=float(coef.sum()))
    return fitter


def test_single_full_subsample_is_the_plain_fit(rng):
    data = make_data(rng)
    prior = PriorSpec(Family.T, 40.0)
    opts = SolverOptions(seed=5)
    res = resample_fit(data, prior, ResampleConfig(m=data.n, M=1, seed=11, with_replacement=False), opts)
    plain = fit(data, prior, opts)
    np.testing.assert_array_equal(res.fit.omega_hat, plain.omega_hat)
    np.testing.assert_array_equal(res.fit.coef_original, plain.coef_original)
    assert res.fit.objective == plain.objective


def test_median_of_planted_solutions(rng):
    data = make_data(rng, 30, 3)
    sols = [[1.0, -2.0, 5.0], [3.0, 0.0, 4.0], [2.0, 9.0, -1.0]]
    res = resample_fit(data, PriorSpec(Family.LASSO, 1.0), ResampleConfig(10, 3, seed=0), fitter=planted(sols))
    np.testing.assert_array_equal(res.fit.coef_original, [2.0, 0.0, 4.0])
    np.testing.assert_array_equal(res.solutions, sols)
    assert res.fit.intercept_original == 7.0


def test_even_count_midpoint():
    np.testing.assert_array_equal(coordinate_median([[1.0, 4.0], [3.0, 0.0], [10.0, 2.0], [2.0, 1.0]]),
                                  [2.5, 1.5])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3), min_size=1, max_size=12))
def test_median_matches_numpy_and_is_bounded(rows):
    a = np.array(rows)
    med = coordinate_median(a)
    np.testing.assert_allclose(med, np.median(a, axis=0), rtol=1e-15, atol=1e-9)
    assert np.all(med >= a.min(axis=0)) and np.all(med <= a.max(axis=0))


def test_replicates_bounded_and_deterministic(rng):
    data = make_data(rng, 300, 5)
    cfg = ResampleConfig(m=80, M=7, seed=3)
    a = resample_fit(data, PriorSpec(Family.GAUSS, 30.0), cfg)
    b = resample_fit(data, PriorSpec(Family.GAUSS, 30.0), cfg)
    np.testing.assert_array_equal(a.fit.coef_original, b.fit.coef_original)
    assert a.solutions.shape == (7, 5)
    lo, hi = a.solutions.min(axis=0), a.solutions.max(axis=0)
    assert np.all(lo <= a.fit.coef_original) and np.all(a.fit.coef_original <= hi)
    assert all(len(d) == 80 for d in a.draws)


def test_permutation_invariance(rng):
    data = make_data(rng, 150, 4)
    cfg = ResampleConfig(m=60, M=5, seed=8)
    base = resample_fit(data, PriorSpec(Family.GAUSS, 20.0), cfg)
    perm = rng.permutation(data.n)
    inv = np.argsort(perm)
    shuffled = data.subset(perm)
    # the same row identities, addressed through the permuted view
    draws = [np.sort(inv[d]) for d in base.draws]
    moved = resample_fit(shuffled, PriorSpec(Family.GAUSS, 20.0), cfg, draws=draws)
    # rows reach the solver in a different order, so agreement is to solver tolerance
    np.testing.assert_allclose(moved.fit.coef_original, base.fit.coef_original, rtol=1e-6, atol=1e-8)


def test_with_replacement_default_draws_duplicates():
    idx = draw_indices(100, 100, np.random.default_rng(0))
    assert np.unique(idx).size < 100
    idx = draw_indices(100, 100, np.random.default_rng(0), with_replacement=False)
    np.testing.assert_array_equal(idx, np.arange(100))


def test_retries_then_fails(rng):
    data = make_data(rng, 40, 2)
    calls = []

    def degenerate(sub, prior, opts):
        calls.append(1)
        raise LinAlgError("singular")

    with pytest.raises(DataError, match="increase m"):
        resample_fit(data, PriorSpec(Family.GAUSS, 1.0), ResampleConfig(5, 2), fitter=degenerate)
    assert len(calls) == MAX_RETRIES + 1


def test_retry_recovers(rng):
    data = make_data(rng, 40, 2)
    state = {"n": 0}
    good = planted([[1.0, 2.0]])

    def flaky(sub, prior, opts):
        state["n"] += 1
        if state["n"] < 3:
            raise LinAlgError("singular")
        return good(sub, prior, opts)

    res = resample_fit(data, PriorSpec(Family.GAUSS, 1.0), ResampleConfig(5, 1), fitter=flaky)
    assert res.retries == 2


def test_tuned_lambda_is_recorded(rng):
    data = make_data(rng, 200, 4)
    res = resample_fit(data, PriorSpec(Family.LASSO, 1.0), ResampleConfig(60, 3, seed=1), tune=True, cv_k=5)
    assert res.lam_tuned and res.lam > 0 and res.fit.lam == res.lam


@pytest.mark.parametrize("m,M", [(0, 1), (201, 1), (10, 0)])
def test_config_validation(m, M, rng):
    with pytest.raises(InvalidParameterError):
        resample_fit(make_data(rng), PriorSpec(Family.LASSO, 1.0), ResampleConfig(m, M))


def test_solution_dump(rng, tmp_path):
    data = make_data(rng, 30, 2)
    res = resample_fit(data, PriorSpec(Family.LASSO, 1.0), ResampleConfig(10, 2),
                       fitter=planted([[1.0, 2.0], [3.0, 4.0]]))
    res.to_csv(tmp_path / "s.csv", names=["a", "b"])
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "replicate,intercept,a,b"
    assert len(lines) == 3
