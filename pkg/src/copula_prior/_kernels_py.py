"""Pure NumPy implementations of the hot kernels.

This module mirrors ``_kernels.pyx`` function for function.  It is selected
automatically when the compiled extension is unavailable, and it is the
reference the compiled core is tested against.
"""
import numpy as np
from scipy.special import betainc, gammaln

EPS_U = 1e-15
CENTRE_X2 = 0.4
X2_BIG = 1e300
SQRT2 = np.sqrt(2.0)
SQRT2PI = np.sqrt(2.0 * np.pi)
LOG_SQRT2PI = 0.5 * np.log(2.0 * np.pi)

# Acklam's rational approximation to the normal quantile.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _lower_half_ndtri(p):
    """Quantile for 0 < p <= 0.5 (vectorised), one Halley refinement."""
    from scipy.special import erfc

    x = np.empty_like(p)
    tail = p < _P_LOW
    if np.any(tail):
        t = np.sqrt(-2.0 * np.log(p[tail]))
        x[tail] = ((((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5])
                   / ((((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0))
    mid = ~tail
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        x[mid] = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
                  / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    e = 0.5 * erfc(-x / SQRT2) - p
    u = e * SQRT2PI * np.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def ndtri(u):
    u = np.asarray(u, dtype=np.float64)
    flat = u.reshape(-1)
    out = np.empty_like(flat)
    lower = flat <= 0.5
    if np.any(lower):
        out[lower] = _lower_half_ndtri(flat[lower])
    upper = ~lower
    if np.any(upper):
        # 1 - u is exact for u >= 0.5
        out[upper] = -_lower_half_ndtri(1.0 - flat[upper])
    return out.reshape(u.shape)


def t_pdf(x, nu):
    x = np.asarray(x, dtype=np.float64)
    logc = gammaln(0.5 * (nu + 1.0)) - gammaln(0.5 * nu) - 0.5 * np.log(nu * np.pi)
    with np.errstate(over="ignore", divide="ignore"):
        x2 = x * x
        big = x2 > X2_BIG
        log_kernel = np.where(big, 2.0 * (np.log(np.abs(x)) - 0.5 * np.log(nu)), np.log1p(x2 / nu))
    return np.exp(logc - 0.5 * (nu + 1.0) * log_kernel)


def t_upper_tail(x, nu):
    """P(T > x) for x >= 0.

    The complement form is used only near the centre (tail above roughly
    0.25), where it is free of cancellation; elsewhere the direct form keeps
    full relative accuracy deep in the tail.
    """
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore"):
        x2 = x * x
    small = x2 < CENTRE_X2
    out = np.empty_like(x)
    out[small] = 0.5 - 0.5 * betainc(0.5, 0.5 * nu, x2[small] / (nu + x2[small]))
    huge = x2 > X2_BIG
    mid = ~small & ~huge
    out[mid] = 0.5 * betainc(0.5 * nu, 0.5, nu / (nu + x2[mid]))
    if np.any(huge):
        out[huge] = np.exp(_t_log_sf_series(np.log(x[huge]), nu))
    return out


def t_cdf(x, nu):
    x = np.asarray(x, dtype=np.float64)
    tail = t_upper_tail(np.abs(x), nu)
    return np.where(x > 0, 1.0 - tail, tail)


def t_isf_tail(s, nu, max_iter=200):
    """Solve P(T > x) = s for x >= 0, s in (0, 0.5]; safeguarded Newton in log space.

    The last Newton step is always applied, so stopping once it falls below
    1e-13 relative leaves the root at machine precision.
    """
    s = np.asarray(s, dtype=np.float64)
    log_s = np.log(s)
    deep = (log_s < -300.0 * nu) & (log_s <= T_DIRECT_L)
    if np.any(deep):
        # roots beyond where x*x overflows are solved in log space
        out = np.empty_like(s)
        out[deep] = np.exp(t_isf_log(log_s[deep], nu))
        out[~deep] = t_isf_tail(s[~deep], nu, max_iter)
        return out
    z = -_lower_half_ndtri(np.minimum(s, 0.5))
    x = z + (z ** 3 + z) / (4.0 * nu)
    x = np.where(x > 0.0, x, np.where(z > 0.0, z, 1e-300))
    lo = np.zeros_like(s)
    hi = np.full_like(s, np.inf)
    active = s < 0.5
    x[~active] = 0.0
    for _ in range(max_iter):
        if not np.any(active):
            break
        xa = x[active]
        tail = t_upper_tail(xa, nu)
        la, ha = lo[active], hi[active]
        above = tail > s[active]
        la = np.where(above, xa, la)
        ha = np.where(above, ha, xa)
        xn = xa + (np.log(tail) - log_s[active]) * tail / t_pdf(xa, nu)
        done = np.abs(xn - xa) <= 1e-13 * np.abs(xn) + 1e-300
        bad = ~done & (~np.isfinite(xn) | (xn <= la) | (xn >= ha))
        if np.any(bad):
            with np.errstate(invalid="ignore"):
                fallback = np.where(np.isinf(ha), 2.0 * xa,
                                    np.where(la > 0, np.sqrt(la * ha), 0.5 * (la + ha)))
            xn = np.where(bad, fallback, xn)
        lo[active], hi[active] = la, ha
        x[active] = xn
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return x


def t_quantile(u, nu):
    u = np.asarray(u, dtype=np.float64)
    flat = u.reshape(-1)
    s = np.minimum(flat, 1.0 - flat)
    mag = t_isf_tail(s, nu)
    return np.where(flat > 0.5, mag, -mag).reshape(u.shape)


# -- q-map in log space ----------------------------------------------------------------
#
# The Laplace tail P(W < -|w|) = exp(L), L = log(1/2) - rate*|w|, is carried
# as L so the base quantile never sees an underflowed probability.

LOG_HALF = -np.log(2.0)
GAUSS_DIRECT_L = -690.0
T_DIRECT_L = -30.0
SCALE_R = 300.0


def _log1pexp(t):
    t = np.asarray(t, dtype=np.float64)
    with np.errstate(over="ignore"):
        return np.where(t > 0.0, t + np.log1p(np.exp(-np.abs(t))), np.log1p(np.exp(np.minimum(t, 0.0))))


def _t_logc(nu):
    return gammaln(0.5 * (nu + 1.0)) - gammaln(0.5 * nu) - 0.5 * np.log(nu * np.pi)


def _t_lbeta(nu):
    return gammaln(0.5 * nu) + gammaln(0.5) - gammaln(0.5 * (nu + 1.0))


def _log_tail(omega, rate):
    return LOG_HALF - rate * np.abs(np.asarray(omega, dtype=np.float64))


def gauss_isf_log(L):
    """z >= 0 with log P(Z > z) = L."""
    from scipy.special import erfcx

    L = np.asarray(L, dtype=np.float64)
    flat = L.reshape(-1)
    out = np.zeros_like(flat)
    direct = (flat > GAUSS_DIRECT_L) & (flat < LOG_HALF)
    if np.any(direct):
        out[direct] = -_lower_half_ndtri(np.exp(flat[direct]))
    deep = flat <= GAUSS_DIRECT_L
    if np.any(deep):
        Ld = flat[deep]
        z = np.sqrt(-2.0 * Ld - np.log(-4.0 * np.pi * Ld))
        for _ in range(60):
            dz = (np.log(0.5 * erfcx(z / SQRT2)) - 0.5 * z * z - Ld) * erfcx(z / SQRT2) * 0.5 * SQRT2PI
            z = z + dz
            if np.all(np.abs(dz) <= 1e-15 * z):
                break
        out[deep] = z
    return out.reshape(L.shape)


def _t_log_pdf_r(r, nu):
    return _t_logc(nu) - 0.5 * (nu + 1.0) * _log1pexp(2.0 * r - np.log(nu))


def t_log_sf(r, nu):
    """log P(T > exp(r)) without underflow (power series of I_t(nu/2, 1/2))."""
    r = np.asarray(r, dtype=np.float64)
    flat = r.reshape(-1)
    out = np.empty_like(flat)
    tail = np.zeros_like(flat)
    moderate = flat < 150.0
    tail[moderate] = t_upper_tail(np.exp(flat[moderate]), nu)
    ok = tail > 1e-290
    with np.errstate(divide="ignore"):
        out[ok] = np.log(tail[ok])
    rest = ~ok
    if np.any(rest):
        out[rest] = _t_log_sf_series(flat[rest], nu)
    return out.reshape(r.shape)


def _t_log_sf_series(r, nu):
    """log P(T > exp(r)) from the power series of I_t(nu/2, 1/2), t = nu/(nu + x^2)."""
    a = 0.5 * nu
    log_t = -_log1pexp(2.0 * r - np.log(nu))
    t = np.exp(log_t)
    S = np.ones_like(t)
    c = np.ones_like(t)
    for n in range(100000):
        c = c * (a + 0.5 + n) / (a + 1.0 + n) * t
        S = S + c
        if np.all(c < 1e-17 * S):
            break
    return LOG_HALF + a * log_t + 0.5 * np.log1p(-t) - np.log(a) - _t_lbeta(nu) + np.log(S)


def t_isf_log(L, nu):
    """log x with log P(T > x) = L (-inf when L = log 1/2)."""
    L = np.asarray(L, dtype=np.float64)
    flat = L.reshape(-1)
    out = np.full_like(flat, -np.inf)
    direct = (flat > T_DIRECT_L) & (flat < LOG_HALF)
    if np.any(direct):
        out[direct] = np.log(t_isf_tail(np.exp(flat[direct]), nu))
    deep = flat <= T_DIRECT_L
    if np.any(deep):
        Ld = flat[deep]
        r = (_t_logc(nu) + 0.5 * (nu - 1.0) * np.log(nu) - Ld) / nu
        active = np.ones(r.shape, dtype=bool)
        for _ in range(100):
            lt = t_log_sf(r[active], nu)
            dr = (lt - Ld[active]) * np.exp(lt - r[active] - _t_log_pdf_r(r[active], nu))
            dr = np.where(np.isfinite(dr), dr, 0.0)
            r[active] = r[active] + dr
            done = np.abs(dr) <= 1e-14 * (1.0 + np.abs(r[active]))
            idx = np.flatnonzero(active)
            active[idx[done]] = False
            if not np.any(active):
                break
        out[deep] = r
    return out.reshape(L.shape)


def qmap_gauss(omega, rate):
    """q and dq/domega for the normal base quantile."""
    omega = np.asarray(omega, dtype=np.float64)
    L = _log_tail(omega, rate)
    z = gauss_isf_log(L)
    return np.sign(omega) * z, rate * np.exp(L + 0.5 * z * z + LOG_SQRT2PI)


def qmap_t_log(omega, rate, nu):
    """``(log|q|, log dq/domega)``; finite far beyond where ``q`` overflows."""
    omega = np.asarray(omega, dtype=np.float64)
    L = _log_tail(omega, rate)
    r = t_isf_log(L, nu)
    return r, np.log(rate) + L - _t_log_pdf_r(r, nu)


def qmap_t(omega, rate, nu):
    r, ld = qmap_t_log(omega, rate, nu)
    with np.errstate(over="ignore"):
        return np.sign(omega) * np.exp(r), np.exp(ld)


def gauss_smooth(omega, rate, prec):
    """Value and gradient of 0.5 * q'(P - I)q."""
    q, dq = qmap_gauss(omega, rate)
    v = prec @ q - q
    return 0.5 * float(q @ v), dq * v


def t_smooth(omega, rate, nu, prec):
    """Value and gradient of the omega-dependent part of the t-copula penalty.

    q is handled as ``exp(scale) * qs`` so everything stays finite for huge q.
    """
    omega = np.asarray(omega, dtype=np.float64)
    r, ld = qmap_t_log(omega, rate, nu)
    p = omega.shape[0]
    lognu = np.log(nu)
    scale = float(np.max(r, initial=-np.inf))
    if scale < SCALE_R:
        scale = 0.0
    sgn = np.sign(omega)
    qs = sgn * np.exp(r - scale)
    v = prec @ qs
    quad = float(qs @ v)
    marg = float(np.sum(_log1pexp(2.0 * r - lognu)))
    if scale == 0.0:
        denom = nu + quad
        lq = np.log1p(quad / nu)
    else:
        denom = nu * np.exp(-2.0 * scale) + quad
        lq = np.log(denom) + 2.0 * scale - lognu
    with np.errstate(invalid="ignore", over="ignore"):
        t2 = np.where(omega == 0.0, 0.0,
                      (nu + 1.0) * sgn * np.exp(ld - r - _log1pexp(lognu - 2.0 * r)))
    grad = (nu + p) * np.exp(ld - scale) * v / denom - t2
    return float(0.5 * (nu + p) * lq - 0.5 * (nu + 1.0) * marg), grad


LOSS_SQUARED, LOSS_LOGISTIC = 0, 1
FAM_LASSO, FAM_ENET, FAM_GAUSS, FAM_T = 0, 1, 2, 3


class ALObjective:
    """Augmented Lagrangian of the split problem on ``z = [w+, w-, (b)]``."""

    def __init__(self, X, y, loss, fam, prec, lam, alpha, nu, identity=False):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        self.n, self.p = X.shape
        self.loss, self.fam = loss, fam
        self.nz = 2 * self.p + (1 if loss == LOSS_LOGISTIC else 0)
        if loss == LOSS_SQUARED:
            self.G = X.T @ X
            self.Xty = X.T @ y
            self.yy = float(y @ y)
        else:
            self.X, self.y = X, y
        self.P = np.eye(self.p) if prec is None else np.ascontiguousarray(prec, dtype=np.float64)
        self.lam, self.alpha, self.nu = lam, alpha, nu
        self.l1w = lam * alpha if fam == FAM_ENET else lam
        self.ridge = lam * (1.0 - alpha) if fam == FAM_ENET else 0.0
        self.smooth_zero = fam == FAM_LASSO or (fam == FAM_GAUSS and identity)
        self.mu = 0.0
        self.rho = 0.0

    def base(self, z):
        p = self.p
        w = z[:p] - z[p:2 * p]
        grad = np.empty(self.nz)
        if self.loss == LOSS_SQUARED:
            Gw = self.G @ w
            f = self.yy + float(w @ (Gw - 2.0 * self.Xty))
            gw = 2.0 * (Gw - self.Xty)
        else:
            eta = self.X @ w + z[2 * p]
            f = float(np.sum(np.logaddexp(0.0, eta) - self.y * eta))
            r = 0.5 * (1.0 + np.tanh(0.5 * eta)) - self.y
            gw = self.X.T @ r
            grad[2 * p] = r.sum()
        f += self.l1w * float(np.sum(z[:2 * p]))
        if self.fam == FAM_ENET:
            f += 0.5 * self.ridge * float(w @ w)
            gw = gw + self.ridge * w
        elif not self.smooth_zero:
            if self.fam == FAM_GAUSS:
                sv, sg = gauss_smooth(w, self.lam, self.P)
            else:
                sv, sg = t_smooth(w, self.lam, self.nu, self.P)
            f += sv
            gw = gw + sg
        grad[:p] = gw + self.l1w
        grad[p:2 * p] = -gw + self.l1w
        return f, grad

    def __call__(self, z):
        f, grad = self.base(z)
        p = self.p
        c = float(z[:p] @ z[p:2 * p])
        coef = self.mu + self.rho * c
        grad[:p] += coef * z[p:2 * p]
        grad[p:2 * p] += coef * z[:p]
        return f + self.mu * c + 0.5 * self.rho * c * c, grad


def minimize_bound(obj, z0, n_bounded, maxiter=500, gtol=1e-8, ftol=1e-15, m=10, max_backtrack=60):
    """Minimise ``obj`` with ``z[:n_bounded] >= 0`` using scipy's L-BFGS-B.

    Returns ``(z, f, iterations, evaluations, status)`` like the compiled
    solver; status 0 means the gradient test was met.
    """
    from scipy.optimize import minimize

    bounds = [(0.0, None)] * n_bounded + [(None, None)] * (len(z0) - n_bounded)
    res = minimize(obj, np.asarray(z0, dtype=np.float64), jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": maxiter, "ftol": ftol, "gtol": gtol, "maxcor": max(m, 20)})
    status = 0 if res.status == 0 and "PROJ" in str(res.message).upper() else (3 if res.status == 1 else 1)
    return res.x, float(res.fun), int(res.nit), int(res.nfev), status
