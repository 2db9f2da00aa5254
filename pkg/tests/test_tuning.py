import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copula_prior import experiments as E
from copula_prior.copula import Family, PriorSpec
from copula_prior.data import CLASSIFICATION, Dataset, standardize
from copula_prior.errors import DegenerateGridError, FoldTooSmallError, InvalidParameterError
from copula_prior.sigma import CorrelationMatrix, estimate_sigma
from copula_prior.solver import Problem, prepare, solution_path
from copula_prior.tuning import (_argmin_prefer_first, assign_folds, cross_validate, lambda_max,
                                 make_lambda_grid, path_losses, validation_tune)


def toy_data(rng, n=10, p=2, task="regression"):
    X = rng.standard_normal((n, p))
    if task == CLASSIFICATION:
        y = (X[:, 0] + 0.5 * rng.standard_normal(n) > 0).astype(float)
    else:
        y = X @ np.arange(1.0, p + 1) + rng.standard_normal(n)
    return Dataset(X, y, task=task)


class TestGrid:
    def test_two_points(self, rng):
        pb, _ = prepare(toy_data(rng), PriorSpec(Family.LASSO, 1.0))
        g = make_lambda_grid(pb, 2, 0.01)
        np.testing.assert_allclose(g, [lambda_max(pb), 0.01 * lambda_max(pb)], rtol=1e-14)

    def test_log_uniform(self, rng):
        pb, _ = prepare(toy_data(rng, 30, 5), PriorSpec(Family.LASSO, 1.0))
        g = make_lambda_grid(pb)
        assert g.size == 50 and np.all(np.diff(g) < 0)
        r = g[1:] / g[:-1]
        np.testing.assert_allclose(r, r[0], rtol=1e-12)

    def test_degenerate(self):
        X = np.array([[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]])
        y = np.array([1.0, -1.0, -1.0, 1.0])  # orthogonal to both columns
        pb = Problem(X, y, PriorSpec(Family.LASSO, 1.0))
        with pytest.raises(DegenerateGridError):
            make_lambda_grid(pb)

    @pytest.mark.parametrize("count,ratio", [(1, 0.1), (5, 0.0), (5, 1.0)])
    def test_bad_arguments(self, count, ratio, rng):
        pb, _ = prepare(toy_data(rng), PriorSpec(Family.LASSO, 1.0))
        with pytest.raises(InvalidParameterError):
            make_lambda_grid(pb, count, ratio)


class TestCrossValidate:
    def test_leave_one_out_matches_brute_force(self, rng):
        data = toy_data(rng)
        prior = PriorSpec(Family.GAUSS, 1.0)
        pb, _ = prepare(data, prior)
        grid = make_lambda_grid(pb, 8, 0.01)
        rep = cross_validate(data, prior, grid, k=data.n, seed=4)
        brute = np.empty((grid.size, data.n))
        for i in range(data.n):
            keep = np.arange(data.n) != i
            problem, rec = prepare(data.subset(keep), prior)
            path = solution_path(problem, grid)
            for g, f in enumerate(path):
                pred = rec.transform_X(data.X[i:i + 1]) @ f.omega_hat + rec.y_mean
                brute[g, i] = (data.y[i] - pred[0]) ** 2
        # fold f holds exactly one row; align columns by that row
        order = [int(np.flatnonzero(rep.folds == f)[0]) for f in range(data.n)]
        np.testing.assert_array_equal(rep.fold_losses, brute[:, order])
        assert rep.lambda_min in grid

    @pytest.mark.parametrize("fam", [Family.GAUSS, Family.LASSO])
    def test_duplicated_rows_keep_selected_position(self, fam, rng):
        data = toy_data(rng, 60, 4)
        double = Dataset(np.vstack([data.X, data.X]), np.concatenate([data.y, data.y]))
        prior = PriorSpec(fam, 1.0)
        pb, _ = prepare(data, prior)
        grid = make_lambda_grid(pb, 20, 0.001)
        a = cross_validate(data, prior, grid, k=5, seed=9)
        # each copy stays in its original's fold; X'y doubles with the rows, so the grid scales with it
        b = cross_validate(double, prior, 2 * grid, folds=np.concatenate([a.folds, a.folds]))
        assert a.index_min == b.index_min
        if fam is Family.LASSO:
            # only the lasso objective is exactly homogeneous in (RSS, lambda)
            np.testing.assert_allclose(b.mean_loss, a.mean_loss, rtol=1e-6)

    def test_explicit_fold_labels_validated(self, rng):
        data = toy_data(rng, 10, 2)
        with pytest.raises(InvalidParameterError):
            cross_validate(data, PriorSpec(Family.LASSO, 1.0), [1.0], folds=[0, 2] * 5)
        with pytest.raises(InvalidParameterError):
            cross_validate(data, PriorSpec(Family.LASSO, 1.0), [1.0], folds=[0, 1] * 4)

    def test_single_point_grid(self, rng):
        rep = cross_validate(toy_data(rng, 20, 3), PriorSpec(Family.LASSO, 1.0), [3.0], k=4)
        assert rep.lambda_min == 3.0 == rep.lambda_1se

    def test_deterministic_and_1se(self, rng):
        data = toy_data(rng, 40, 4)
        grid = np.geomspace(100, 0.1, 12)
        a = cross_validate(data, PriorSpec(Family.T, 1.0), grid, k=5, seed=2)
        b = cross_validate(data, PriorSpec(Family.T, 1.0), grid, k=5, seed=2)
        assert a.to_dict() == b.to_dict()
        assert a.lambda_1se >= a.lambda_min
        assert np.all(np.isfinite(a.mean_loss))

    def test_no_leakage(self, rng, monkeypatch):
        from copula_prior import tuning
        data = toy_data(rng, 30, 3)
        data = Dataset(data.X + np.arange(30)[:, None] * 1e-3, data.y)  # make rows identifiable
        seen = []
        real = tuning.prepare

        def spy(d, prior, c):
            seen.append(d.X.copy())
            return real(d, prior, c)

        monkeypatch.setattr(tuning, "prepare", spy)
        rep = cross_validate(data, PriorSpec(Family.GAUSS, 1.0), np.geomspace(50, 0.5, 6), k=3, seed=1)
        assert len(seen) == 3
        for f, Xtr in enumerate(seen):
            np.testing.assert_array_equal(Xtr, data.X[rep.folds != f])
        # and held-out rows do not influence a fold's fit: perturb fold 0 heavily
        X2 = data.X.copy()
        X2[rep.folds == 0] *= 100.0
        seen.clear()
        cross_validate(Dataset(X2, data.y), PriorSpec(Family.GAUSS, 1.0), np.geomspace(50, 0.5, 6), k=3, seed=1)
        np.testing.assert_array_equal(seen[0], data.X[rep.folds != 0])

    def test_classification_misclassification(self, rng):
        data = toy_data(rng, 40, 2, CLASSIFICATION)
        rep = cross_validate(data, PriorSpec(Family.LASSO, 1.0), np.geomspace(20, 0.2, 5), k=4)
        assert np.all((rep.fold_losses >= 0) & (rep.fold_losses <= 1))

    def test_too_many_folds(self, rng):
        with pytest.raises(FoldTooSmallError, match="smaller k"):
            cross_validate(toy_data(rng, 5, 2), PriorSpec(Family.LASSO, 1.0), [1.0], k=6)

    def test_fold_too_small_for_sigma(self):
        X = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 5.0]])
        data = Dataset(X, np.array([1.0, 2.0, 3.0, 4.0]))
        with pytest.raises(FoldTooSmallError, match="smaller k"):
            cross_validate(data, PriorSpec(Family.GAUSS, 1.0), [1.0], k=4, seed=0)

    def test_report_serialization(self, rng, tmp_path):
        rep = cross_validate(toy_data(rng, 20, 2), PriorSpec(Family.LASSO, 1.0), [5.0, 1.0], k=4)
        rep.to_json(tmp_path / "r.json")
        assert json.loads((tmp_path / "r.json").read_text())["lambda_min"] == rep.lambda_min
        rep.to_csv(tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text().splitlines()[0] == "lambda,mean_loss,se_loss"


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 200), k=st.integers(2, 20), seed=st.integers(0, 1000))
def test_folds_partition(n, k, seed):
    k = min(k, n)
    labels = assign_folds(n, k, seed)
    counts = np.bincount(labels, minlength=k)
    assert counts.sum() == n and counts.min() >= 1 and counts.max() - counts.min() <= 1
    np.testing.assert_array_equal(labels, assign_folds(n, k, seed))


class TestValidationTune:
    def test_validation_equals_training(self, rng):
        data = toy_data(rng, 40, 4)
        pb, rec = prepare(data, PriorSpec(Family.LASSO, 1.0))
        grid = make_lambda_grid(pb, 10)
        res = validation_tune(pb, rec.transform(data), grid)
        train_loss = path_losses(solution_path(pb, grid), pb.X, pb.y, "regression")
        assert res.lam == grid[_argmin_prefer_first(train_loss)]

    def test_tie_goes_to_larger_lambda(self, rng):
        data = toy_data(rng, 30, 2)
        pb, rec = prepare(data, PriorSpec(Family.LASSO, 1.0))
        lm = lambda_max(pb)
        # both points zero the coefficients, so the validation losses tie
        res = validation_tune(pb, rec.transform(data), [3 * lm, 2 * lm])
        assert res.lam == 3 * lm

    def test_ex1_sanity(self):
        train, valid, _ = E.generate(E.design("ex1"), 7)
        std, rec = standardize(train)
        pb = Problem(std.X, std.y, PriorSpec(Family.GAUSS, 1.0, sigma=estimate_sigma(std.X)))
        grid = make_lambda_grid(pb)
        res = validation_tune(pb, rec.transform(valid), grid)
        assert 0 < res.lam < lambda_max(pb)

    def test_elastic_net_alpha_grid(self, rng):
        data = toy_data(rng, 40, 3)
        pb, rec = prepare(data, PriorSpec(Family.ELASTIC_NET, 1.0, alpha=0.5))
        res = validation_tune(pb, rec.transform(toy_data(rng, 40, 3)), make_lambda_grid(pb, 6))
        assert len(res.table) == 11
        assert res.alpha in {round(a / 10, 10) for a in range(11)}

    def test_nu_grid_only_for_t(self, rng):
        data = toy_data(rng, 40, 3)
        pb, rec = prepare(data, PriorSpec(Family.T, 1.0))
        res = validation_tune(pb, rec.transform(data), make_lambda_grid(pb, 4), nus=(5.0, 10.0, 30.0))
        assert len(res.table) == 3 and res.nu in (5.0, 10.0, 30.0)
        pb2 = Problem(pb.X, pb.y, PriorSpec(Family.GAUSS, 1.0, sigma=CorrelationMatrix.identity(3)))
        assert len(validation_tune(pb2, rec.transform(data), [1.0], nus=(5.0, 10.0)).table) == 1
