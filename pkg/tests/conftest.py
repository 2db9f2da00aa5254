import numpy as np
import pytest

from copula_prior import solver

FEAS_TOL = 1e-6
NONNEG_TOL = -1e-12

# Every converged fit produced anywhere in the suite is checked for
# complementarity and nonnegativity of the split variables.
FEASIBILITY_LOG = {"checked": 0, "violations": []}

_orig_al_solve = solver._al_solve


def _checked_al_solve(problem, z0, opts, start_index=0):
    out = _orig_al_solve(problem, z0, opts, start_index)
    state, _, c, _, _, converged, _ = out
    if converged:
        FEASIBILITY_LOG["checked"] += 1
        lo = min(float(state.omega_plus.min(initial=0.0)), float(state.omega_minus.min(initial=0.0)))
        comp = float(state.omega_plus @ state.omega_minus)
        if comp > FEAS_TOL or lo < NONNEG_TOL or c > FEAS_TOL:
            FEASIBILITY_LOG["violations"].append({"complementarity": comp, "min": lo})
            raise AssertionError(f"converged fit is infeasible: sum w+ w- = {comp:.3e}, min = {lo:.3e}")
    return out


solver._al_solve = _checked_al_solve


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_correlation(rng, p, n=None):
    n = n or 4 * p
    X = rng.standard_normal((n, p)) @ rng.standard_normal((p, p)) * 0.5 + rng.standard_normal((n, p))
    C = np.corrcoef(X, rowvar=False)
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return C


def cd_lasso(X, y, lam, tol=1e-13, max_iter=100_000):
    """Cyclic coordinate descent for ||y - X w||^2 + lam * ||w||_1."""
    n, p = X.shape
    w = np.zeros(p)
    r = y.astype(float).copy()
    col_sq = (X ** 2).sum(axis=0)
    for _ in range(max_iter):
        delta = 0.0
        for j in range(p):
            old = w[j]
            rho = X[:, j] @ r + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - lam / 2.0, 0.0) / col_sq[j]
            if new != old:
                r -= X[:, j] * (new - old)
                w[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            break
    return w


def central_diff(f, x, h=1e-6):
    g = np.empty_like(x)
    for j in range(x.size):
        step = h * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += step
        xm[j] -= step
        g[j] = (f(xp) - f(xm)) / (2.0 * step)
    return g


# -- acceptance reporting ----------------------------------------------------------------

ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    """Remember the outcome of one acceptance criterion for the terminal summary."""
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_collection_modifyitems(session, config, items):
    # the suite-wide feasibility audit must see every other fit first
    last = [it for it in items if it.name == "test_criterion_07_feasibility_everywhere"]
    items[:] = [it for it in items if it not in last] + last


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
