import json

import numpy as np
import pytest

from copula_prior import experiments as E
from copula_prior.copula import Family, PriorSpec
from copula_prior.data import Dataset, standardize
from copula_prior.errors import InvalidParameterError
from copula_prior.sigma import CorrelationMatrix, estimate_sigma
from copula_prior.solver import Problem, solve


class TestDesigns:
    def test_ex1_shapes(self):
        tr, va, te = E.generate(E.design("ex1"), 0)
        assert tr.X.shape == (20, 8) and va.X.shape == (20, 8) and te.X.shape == (200, 8)

    def test_ex2_beta(self):
        assert E.design("ex2").beta == (0.85,) * 8

    def test_ex3_beta(self):
        b = np.array(E.design("Example3").beta)
        assert b.size == 40 and np.count_nonzero(b) == 20 and set(b[b != 0]) == {2.0}

    def test_ex4_block_correlation(self):
        tr, _, _ = E.generate(E.design("ex4"), 3)
        C = np.corrcoef(tr.X, rowvar=False)
        for b in range(3):
            blk = C[5 * b:5 * b + 5, 5 * b:5 * b + 5]
            off = blk[~np.eye(5, dtype=bool)]
            assert abs(off.mean() - 1 / 1.16) < 0.1
            assert off.min() > 0.7

    def test_equicorrelation_population(self):
        sim = E.design("ex1", n_train=20000)
        tr, _, _ = E.generate(sim, 1)
        C = np.corrcoef(tr.X, rowvar=False)
        assert abs(C[~np.eye(8, dtype=bool)].mean() - 0.95) < 0.01

    def test_deterministic(self):
        a = E.generate(E.design("ex3"), 42)
        b = E.generate(E.design("ex3"), 42)
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u.X, v.X)
            np.testing.assert_array_equal(u.y, v.y)

    def test_unknown(self):
        with pytest.raises(InvalidParameterError):
            E.design("ex9")


class TestBenchmark:
    def test_single_replication(self, tmp_path):
        rec = E.run_benchmark(["ex1"], methods=["lasso", "gauss"], replications=1, seed=5, grid_count=10)
        for m in ("lasso", "gauss"):
            vals = rec.rmse("ex1", m)
            assert vals.size == 1
            assert rec.median("ex1", m) == vals[0]
            assert rec.summary["ex1"][Family.parse(m).value]["se"] == 0.0
        rec.to_csv(tmp_path / "b.csv")
        rec.to_json(tmp_path / "b.json")
        assert len((tmp_path / "b.csv").read_text().splitlines()) == 3
        assert json.loads((tmp_path / "b.json").read_text())["replications"] == 1

    def test_failures_recorded_not_fatal(self, monkeypatch):
        from copula_prior.errors import SolverDivergedError
        real = E.fit_replication

        def flaky(train, valid, test, m, *a, **k):
            if m is Family.T:
                raise SolverDivergedError("boom")
            return real(train, valid, test, m, *a, **k)

        monkeypatch.setattr(E, "fit_replication", flaky)
        rec = E.run_benchmark(["ex1"], methods=["t", "lasso"], replications=2, grid_count=5)
        assert len(rec.excluded) == 2
        assert rec.summary["ex1"]["t-copula"]["n"] == 0
        assert rec.summary["ex1"]["lasso"]["n"] == 2

    def test_bad_replications(self):
        with pytest.raises(InvalidParameterError):
            E.run_benchmark(["ex1"], replications=0)

    def test_test_split_untouched_by_tuning(self, monkeypatch):
        # replacing the test responses changes only the RMSE, never the tuned parameters
        tr, va, te = E.generate(E.design("ex1"), 2)
        a = E.fit_replication(tr, va, te, Family.GAUSS, grid_count=10)
        te2 = Dataset(te.X * 0 + 1e6, te.y * 0 - 1e6)
        b = E.fit_replication(tr, va, te2, Family.GAUSS, grid_count=10)
        assert a["lambda"] == b["lambda"]
        np.testing.assert_array_equal(a["omega"], b["omega"])
        assert a["rmse"] != b["rmse"]


def test_bootstrap_se_of_normal_median():
    v = np.random.default_rng(2024).standard_normal(100)
    se = E.bootstrap_se_median(v, B=1000, seed=1)
    assert abs(se - E.normal_median_se_oracle(100)) < 0.03
    assert E.normal_median_se_oracle(100) == pytest.approx(1.2533141373155 / 10, rel=1e-12)
    assert E.bootstrap_se_median(np.full(10, 3.0)) == 0.0


class TestGrouping:
    def _problem(self, X, y, lam):
        std, _ = standardize(Dataset(X, y))
        return Problem(std.X, std.y, PriorSpec(Family.GAUSS, lam, sigma=estimate_sigma(std.X)))

    def test_exact_duplicate_gives_equal_coefficients(self, rng):
        Z = rng.standard_normal((60, 3))
        X = np.column_stack([Z, Z[:, 0]])
        y = X @ [2.0, 1.0, 0.0, 2.0] + rng.standard_normal(60)
        pb = self._problem(X, y, 40.0)
        fit = solve(pb)
        assert fit.omega_hat[0] == pytest.approx(fit.omega_hat[3], abs=1e-4)
        rep = E.check_grouping_theorem(fit, pb, [(0, 3)])[0]
        assert not rep["skipped"] and rep["D_lambda"] < 1e-3 and rep["holds"]

    def test_skips_sign_mismatch(self, rng):
        pb = self._problem(rng.standard_normal((30, 3)), rng.standard_normal(30), 1.0)
        rep = E.check_grouping_theorem(np.array([1.0, -1.0, 0.0]), pb, [(0, 1), (0, 2)])
        assert all(r["skipped"] for r in rep)
        assert "common sign" in rep[0]["note"]

    def test_first_term_shrinks_with_correlation(self):
        y = np.array([1.0, -2.0, 0.5, 0.5])
        prior = PriorSpec(Family.GAUSS, 1.0, sigma=None)
        firsts = []
        for r in (0.5, 0.9, 0.99, 0.999):
            S = CorrelationMatrix.equicorrelation(2, r)
            pb = Problem(np.eye(4, 2) * 0 + [[1, 1], [-1, -1], [1, -1], [-1, 1]], y, prior.with_sigma(S), check=False)
            _, _, first, _ = E.grouping_bound(np.array([1.0, 0.5]), pb, 0, 1)
            firsts.append(first)
            expected = np.linalg.norm(y) * np.sqrt(2 * (1 - r)) / abs(S.partials[0, 1])
            assert first == pytest.approx(expected, rel=1e-12)
        assert all(a > b for a, b in zip(firsts, firsts[1:]))

    def test_requires_gauss(self, rng):
        X = rng.standard_normal((20, 2))
        std, _ = standardize(Dataset(X, rng.standard_normal(20)))
        pb = Problem(std.X, std.y, PriorSpec(Family.T, 1.0, sigma=estimate_sigma(std.X)))
        with pytest.raises(InvalidParameterError):
            E.check_grouping_theorem(np.ones(2), pb, [(0, 1)])

    def test_audit_small(self):
        out = E.grouping_audit([0, 1], lam=200.0)
        assert len(out["runs"]) == 2
        assert set(out["holds_fraction"]) == {"sqrt_pi_over_2", "pi_over_2"}
        assert out["eligible_pairs"] == sum(r["eligible_pairs"] for r in out["runs"])


class TestAssumptions:
    @pytest.mark.parametrize("lam", [0.5, 1.0, 4.0])
    def test_concavity_scan(self, lam):
        rep = E.check_assumptions(PriorSpec(Family.GAUSS, lam), n_pairs=500)
        assert rep["grid_points"] == 10_000
        assert rep["concavity_violations"] == 0
        assert rep["convexity_violations"] == 0
        assert rep["dq_at_zero"] == pytest.approx(rep["dq_at_zero_expected"], rel=1e-13)

    def test_assumption2_fraction_reported(self):
        rep = E.check_assumptions(PriorSpec(Family.GAUSS, 1.0))
        assert rep["assumption2_pairs"] > 9_000
        assert 0.0 <= rep["assumption2_violation_fraction"] <= 1.0

    def test_profile_concave(self):
        grid, q = E.q_concavity_profile(2.0)
        assert grid.size == 10_000 and np.all(np.diff(q, 2) <= 1e-12)

    def test_block_helpers(self):
        assert len(E.block_pairs()) == 30
        w = np.r_[np.full(5, 1.0), np.linspace(0, 1, 5), np.zeros(5)]
        assert E.within_block_spread(w) == 1.0
