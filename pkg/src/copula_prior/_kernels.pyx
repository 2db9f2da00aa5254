# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: normal and Student-t quantiles, the Laplace q-map,
and the fused copula penalty value/gradient.  Same API as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport erfc, exp, log, log1p, sqrt, fabs, isfinite, M_PI, INFINITY
from scipy.special.cython_special cimport betainc, erfcx, gammaln

cnp.import_array()

cdef double EPS_U = 1e-15
cdef double CENTRE_X2 = 0.4
cdef double SQRT2 = 1.4142135623730951
cdef double SQRT2PI = 2.5066282746310002
cdef double LOG_SQRT2PI = 0.9189385332046727
cdef double P_LOW = 0.02425

cdef double A0 = -3.969683028665376e+01, A1 = 2.209460984245205e+02, A2 = -2.759285104469687e+02
cdef double A3 = 1.383577518672690e+02, A4 = -3.066479806614716e+01, A5 = 2.506628277459239e+00
cdef double B0 = -5.447609879822406e+01, B1 = 1.615858368580409e+02, B2 = -1.556989798598866e+02
cdef double B3 = 6.680131188771972e+01, B4 = -1.328068155288572e+01
cdef double C0 = -7.784894002430293e-03, C1 = -3.223964580411365e-01, C2 = -2.400758277161838e+00
cdef double C3 = -2.549732539343734e+00, C4 = 4.374664141464968e+00, C5 = 2.938163982698783e+00
cdef double D0 = 7.784695709041462e-03, D1 = 3.224671290700398e-01, D2 = 2.445134137142996e+00
cdef double D3 = 3.754408661907416e+00


cdef inline double _lower_ndtri(double p) nogil:
    cdef double x, t, q, r, e, u
    if p < P_LOW:
        t = sqrt(-2.0 * log(p))
        x = ((((((C0 * t + C1) * t + C2) * t + C3) * t + C4) * t + C5)
             / ((((D0 * t + D1) * t + D2) * t + D3) * t + 1.0))
    else:
        q = p - 0.5
        r = q * q
        x = ((((((A0 * r + A1) * r + A2) * r + A3) * r + A4) * r + A5) * q
             / (((((B0 * r + B1) * r + B2) * r + B3) * r + B4) * r + 1.0))
    e = 0.5 * erfc(-x / SQRT2) - p
    u = e * SQRT2PI * exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


cdef inline double _ndtri(double u) nogil:
    if u <= 0.5:
        return _lower_ndtri(u)
    return -_lower_ndtri(1.0 - u)


cdef inline double _t_logc(double nu) nogil:
    return gammaln(0.5 * (nu + 1.0)) - gammaln(0.5 * nu) - 0.5 * log(nu * M_PI)


cdef double X2_BIG = 1e300
cdef double LOG_HALF = -0.6931471805599453
cdef double T_DIRECT_L = -30.0


cdef inline double _log1pexp(double t) nogil:
    if t > 0.0:
        return t + log1p(exp(-t))
    return log1p(exp(t))


cdef inline double _t_lbeta(double nu) nogil:
    return gammaln(0.5 * nu) + gammaln(0.5) - gammaln(0.5 * (nu + 1.0))


cdef inline double _t_pdf(double x, double nu, double logc) nogil:
    cdef double x2 = x * x
    if x2 > X2_BIG:
        return exp(logc - (nu + 1.0) * (log(fabs(x)) - 0.5 * log(nu)))
    return exp(logc - 0.5 * (nu + 1.0) * log1p(x2 / nu))


cdef double _t_log_sf_series(double r, double nu, double lbeta) nogil:
    """log P(T > exp(r)) from the power series of I_t(nu/2, 1/2), t = nu/(nu + x^2)."""
    cdef double a = 0.5 * nu, log_t, t, S = 1.0, c = 1.0
    cdef int n
    log_t = -_log1pexp(2.0 * r - log(nu))
    t = exp(log_t)
    for n in range(100000):
        c = c * (a + 0.5 + n) / (a + 1.0 + n) * t
        S = S + c
        if c < 1e-17 * S:
            break
    return LOG_HALF + a * log_t + 0.5 * log1p(-t) - log(a) - lbeta + log(S)


cdef inline double _t_upper_tail(double x, double nu) nogil:
    # complement form only near the centre, where it cannot cancel
    cdef double x2 = x * x
    if x2 < CENTRE_X2:
        return 0.5 - 0.5 * betainc(0.5, 0.5 * nu, x2 / (nu + x2))
    if x2 > X2_BIG:
        return exp(_t_log_sf_series(log(x), nu, _t_lbeta(nu)))
    return 0.5 * betainc(0.5 * nu, 0.5, nu / (nu + x2))


cdef double _t_isf_tail(double s, double nu, double logc) nogil:
    # Newton on log P(T > x) from a Cornish-Fisher start, kept inside a
    # bracket that every evaluation tightens.  The final step is always
    # applied, so stopping once it is below 1e-13 relative leaves the root
    # at machine precision (quadratic convergence).
    cdef double z, x, lo = 0.0, hi = INFINITY, tail, xn, log_s
    cdef int it
    if s >= 0.5:
        return 0.0
    log_s = log(s)
    if log_s < -300.0 * nu and log_s <= T_DIRECT_L:
        # the root lies beyond where x*x overflows: solve in log space
        return exp(_t_isf_log(log_s, nu, logc, _t_lbeta(nu)))
    z = -_lower_ndtri(s)
    x = z + (z * z * z + z) / (4.0 * nu)
    if x <= 0.0:
        x = z if z > 0.0 else 1e-300
    for it in range(200):
        tail = _t_upper_tail(x, nu)
        if tail > s:
            lo = x
        else:
            hi = x
        xn = x + (log(tail) - log_s) * tail / _t_pdf(x, nu, logc)
        if fabs(xn - x) <= 1e-13 * fabs(xn) + 1e-300:
            return xn
        if not isfinite(xn) or xn <= lo or xn >= hi:
            if hi == INFINITY:
                xn = 2.0 * x
            elif lo > 0.0:
                xn = sqrt(lo * hi)
            else:
                xn = 0.5 * (lo + hi)
        if fabs(xn - x) <= 1e-13 * fabs(xn) + 1e-300:
            return xn
        x = xn
    return x


def ndtri(u):
    cdef cnp.ndarray[double, ndim=1] flat = np.ascontiguousarray(u, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t i, n = flat.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    for i in range(n):
        out[i] = _ndtri(flat[i])
    return out.reshape(np.shape(u))


def t_pdf(x, double nu):
    cdef cnp.ndarray[double, ndim=1] flat = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t i, n = flat.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    cdef double logc = _t_logc(nu)
    for i in range(n):
        out[i] = _t_pdf(flat[i], nu, logc)
    return out.reshape(np.shape(x))


def t_upper_tail(x, double nu):
    cdef cnp.ndarray[double, ndim=1] flat = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t i, n = flat.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    for i in range(n):
        out[i] = _t_upper_tail(flat[i], nu)
    return out.reshape(np.shape(x))


def t_cdf(x, double nu):
    cdef cnp.ndarray[double, ndim=1] flat = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t i, n = flat.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    cdef double tail
    for i in range(n):
        tail = _t_upper_tail(fabs(flat[i]), nu)
        out[i] = 1.0 - tail if flat[i] > 0.0 else tail
    return out.reshape(np.shape(x))


def t_isf_tail(s, double nu):
    cdef cnp.ndarray[double, ndim=1] flat = np.ascontiguousarray(s, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t i, n = flat.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    cdef double logc = _t_logc(nu)
    for i in range(n):
        out[i] = _t_isf_tail(flat[i], nu, logc)
    return out.reshape(np.shape(s))


def t_quantile(u, double nu):
    cdef cnp.ndarray[double, ndim=1] flat = np.ascontiguousarray(u, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t i, n = flat.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    cdef double logc = _t_logc(nu)
    cdef double v
    for i in range(n):
        v = flat[i]
        if v > 0.5:
            out[i] = _t_isf_tail(1.0 - v, nu, logc)
        else:
            out[i] = -_t_isf_tail(v, nu, logc)
    return out.reshape(np.shape(u))


cdef inline double _sign(double w) nogil:
    if w > 0.0:
        return 1.0
    if w < 0.0:
        return -1.0
    return 0.0


# -- q-map in log space ----------------------------------------------------------------
#
# The Laplace tail s = P(W < -|w|) = exp(L) with L = log(1/2) - rate*|w| is
# carried as L, so the base quantile never sees an underflowed probability.
# Where s is representable the usual quantile routines are used unchanged.

cdef double GAUSS_DIRECT_L = -690.0
cdef double SCALE_R = 300.0


cdef inline double _log_norm_sf(double z) nogil:
    return log(0.5 * erfcx(z / SQRT2)) - 0.5 * z * z


cdef double _gauss_isf_log(double L) nogil:
    """z >= 0 with log P(Z > z) = L."""
    cdef double z, dz
    cdef int it
    if L >= LOG_HALF:
        return 0.0
    if L > GAUSS_DIRECT_L:
        return -_lower_ndtri(exp(L))
    z = sqrt(-2.0 * L - log(-4.0 * M_PI * L))
    for it in range(60):
        dz = (_log_norm_sf(z) - L) * erfcx(z / SQRT2) * 0.5 * SQRT2PI
        z = z + dz
        if fabs(dz) <= 1e-15 * z:
            break
    return z


cdef inline double _t_log_pdf_r(double r, double nu, double logc) nogil:
    # log density at x = exp(r)
    return logc - 0.5 * (nu + 1.0) * _log1pexp(2.0 * r - log(nu))


cdef double _t_log_sf_r(double r, double nu, double lbeta) nogil:
    """log P(T > exp(r)) without underflow (power series of I_t(nu/2, 1/2))."""
    cdef double tail
    if r < 150.0:
        tail = _t_upper_tail(exp(r), nu)
        if tail > 1e-290:
            return log(tail)
    return _t_log_sf_series(r, nu, lbeta)


cdef double _t_isf_log(double L, double nu, double logc, double lbeta) nogil:
    """log x with log P(T > x) = L (-inf when L = log 1/2)."""
    cdef double r, lt, dr
    cdef int it
    if L >= LOG_HALF:
        return -INFINITY
    if L > T_DIRECT_L:
        return log(_t_isf_tail(exp(L), nu, logc))
    r = (logc + 0.5 * (nu - 1.0) * log(nu) - L) / nu
    for it in range(100):
        lt = _t_log_sf_r(r, nu, lbeta)
        dr = (lt - L) * exp(lt - r - _t_log_pdf_r(r, nu, logc))
        if not isfinite(dr):
            break
        r = r + dr
        if fabs(dr) <= 1e-14 * (1.0 + fabs(r)):
            break
    return r


cdef void _qmap_gauss(double[::1] omega, double rate, double[::1] q, double[::1] dq) noexcept nogil:
    cdef Py_ssize_t i
    cdef double L, z
    for i in range(omega.shape[0]):
        L = LOG_HALF - rate * fabs(omega[i])
        z = _gauss_isf_log(L)
        q[i] = _sign(omega[i]) * z
        dq[i] = rate * exp(L + 0.5 * z * z + LOG_SQRT2PI)


cdef void _qmap_t_log(double[::1] omega, double rate, double nu, double logc, double lbeta,
                      double[::1] r, double[::1] ld) noexcept nogil:
    # r = log|q|, ld = log(dq/domega)
    cdef Py_ssize_t i
    cdef double L
    for i in range(omega.shape[0]):
        L = LOG_HALF - rate * fabs(omega[i])
        r[i] = _t_isf_log(L, nu, logc, lbeta)
        ld[i] = log(rate) + L - _t_log_pdf_r(r[i], nu, logc)


def qmap_gauss(omega, double rate):
    cdef double[::1] w = np.ascontiguousarray(omega, dtype=np.float64).reshape(-1)
    q = np.empty(w.shape[0])
    dq = np.empty(w.shape[0])
    _qmap_gauss(w, rate, q, dq)
    return q.reshape(np.shape(omega)), dq.reshape(np.shape(omega))


def qmap_t_log(omega, double rate, double nu):
    """``(log|q|, log dq/domega)``; finite far beyond where ``q`` overflows."""
    cdef double[::1] w = np.ascontiguousarray(omega, dtype=np.float64).reshape(-1)
    r = np.empty(w.shape[0])
    ld = np.empty(w.shape[0])
    _qmap_t_log(w, rate, nu, _t_logc(nu), _t_lbeta(nu), r, ld)
    return r.reshape(np.shape(omega)), ld.reshape(np.shape(omega))


def qmap_t(omega, double rate, double nu):
    r, ld = qmap_t_log(omega, rate, nu)
    return np.sign(omega) * np.exp(r), np.exp(ld)


def gauss_isf_log(L):
    cdef double[::1] flat = np.ascontiguousarray(L, dtype=np.float64).reshape(-1)
    out = np.empty(flat.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        o[i] = _gauss_isf_log(flat[i])
    return out.reshape(np.shape(L))


def t_isf_log(L, double nu):
    cdef double[::1] flat = np.ascontiguousarray(L, dtype=np.float64).reshape(-1)
    out = np.empty(flat.shape[0])
    cdef double[::1] o = out
    cdef double logc = _t_logc(nu), lbeta = _t_lbeta(nu)
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        o[i] = _t_isf_log(flat[i], nu, logc, lbeta)
    return out.reshape(np.shape(L))


def t_log_sf(r, double nu):
    """log P(T > exp(r))."""
    cdef double[::1] flat = np.ascontiguousarray(r, dtype=np.float64).reshape(-1)
    out = np.empty(flat.shape[0])
    cdef double[::1] o = out
    cdef double lbeta = _t_lbeta(nu)
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        o[i] = _t_log_sf_r(flat[i], nu, lbeta)
    return out.reshape(np.shape(r))


cdef void _matvec(const double[:, ::1] a, double[::1] x, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, p = x.shape[0]
    cdef double acc
    for i in range(p):
        acc = 0.0
        for j in range(p):
            acc = acc + a[i, j] * x[j]
        out[i] = acc


cdef double _gauss_penalty(double[::1] w, double rate, const double[:, ::1] P,
                           double[::1] q, double[::1] dq, double[::1] v, double[::1] g) noexcept nogil:
    # 0.5 q'(P - I)q; gradient written to g
    cdef Py_ssize_t i, p = w.shape[0]
    cdef double val = 0.0
    _qmap_gauss(w, rate, q, dq)
    _matvec(P, q, v)
    for i in range(p):
        v[i] = v[i] - q[i]
        val = val + q[i] * v[i]
        g[i] = dq[i] * v[i]
    return 0.5 * val


cdef double _t_penalty(double[::1] w, double rate, double nu, double logc, double lbeta,
                       const double[:, ::1] P, double[::1] r, double[::1] ld, double[::1] qs,
                       double[::1] v, double[::1] g) noexcept nogil:
    # omega-dependent part of the t-copula penalty.  q is handled as
    # exp(scale) * qs so that q'Pq and the gradient stay finite for huge q.
    cdef Py_ssize_t i, p = w.shape[0]
    cdef double scale = -INFINITY, quad = 0.0, denom, lq, marg = 0.0, t2, lognu = log(nu)
    _qmap_t_log(w, rate, nu, logc, lbeta, r, ld)
    for i in range(p):
        if r[i] > scale:
            scale = r[i]
    if scale < SCALE_R:
        scale = 0.0
    for i in range(p):
        qs[i] = _sign(w[i]) * exp(r[i] - scale)
    _matvec(P, qs, v)
    for i in range(p):
        quad = quad + qs[i] * v[i]
        marg = marg + _log1pexp(2.0 * r[i] - lognu)
    if scale == 0.0:
        denom = nu + quad
        lq = log1p(quad / nu)
    else:
        denom = nu * exp(-2.0 * scale) + quad
        lq = log(denom) + 2.0 * scale - lognu
    for i in range(p):
        if w[i] == 0.0:
            t2 = 0.0
        else:
            t2 = (nu + 1.0) * _sign(w[i]) * exp(ld[i] - r[i] - _log1pexp(lognu - 2.0 * r[i]))
        g[i] = (nu + p) * exp(ld[i] - scale) * v[i] / denom - t2
    return 0.5 * (nu + p) * lq - 0.5 * (nu + 1.0) * marg


def gauss_smooth(omega, double rate, prec):
    """Value and gradient of 0.5 * q'(P - I)q."""
    cdef double[::1] w = np.ascontiguousarray(omega, dtype=np.float64)
    cdef const double[:, ::1] P = np.ascontiguousarray(prec, dtype=np.float64)
    cdef Py_ssize_t p = w.shape[0]
    grad = np.empty(p)
    val = _gauss_penalty(w, rate, P, np.empty(p), np.empty(p), np.empty(p), grad)
    return val, grad


def t_smooth(omega, double rate, double nu, prec):
    """Value and gradient of the omega-dependent part of the t-copula penalty."""
    cdef double[::1] w = np.ascontiguousarray(omega, dtype=np.float64)
    cdef const double[:, ::1] P = np.ascontiguousarray(prec, dtype=np.float64)
    cdef Py_ssize_t p = w.shape[0]
    grad = np.empty(p)
    val = _t_penalty(w, rate, nu, _t_logc(nu), _t_lbeta(nu), P, np.empty(p), np.empty(p),
                     np.empty(p), np.empty(p), grad)
    return val, grad


# -- fused augmented-Lagrangian objective and bounded quasi-Newton solver ------------

DEF LOSS_SQUARED = 0
DEF LOSS_LOGISTIC = 1
DEF FAM_LASSO = 0
DEF FAM_ENET = 1
DEF FAM_GAUSS = 2
DEF FAM_T = 3


cdef inline double _expit(double t) nogil:
    cdef double e
    if t >= 0.0:
        return 1.0 / (1.0 + exp(-t))
    e = exp(t)
    return e / (1.0 + e)


cdef class ALObjective:
    """Augmented Lagrangian of the split problem on ``z = [w+, w-, (b)]``.

    Squared-error losses are evaluated through the Gram matrix, so a call
    costs O(p^2) regardless of n.
    """
    cdef readonly int p, n, nz, loss, fam
    cdef double[:, ::1] G
    cdef double[::1] Xty
    cdef double yy
    cdef double[:, ::1] X
    cdef double[::1] y
    cdef double[:, ::1] P
    cdef double lam, alpha, nu, l1w, ridge, logc, lbeta
    cdef bint smooth_zero
    cdef public double mu, rho
    cdef double[::1] w, q, dq, v, gw, gs, qs, eta

    def __init__(self, X, y, int loss, int fam, prec, double lam, double alpha, double nu,
                 bint identity=False):
        Xa = np.ascontiguousarray(X, dtype=np.float64)
        ya = np.ascontiguousarray(y, dtype=np.float64)
        self.n = Xa.shape[0]
        self.p = Xa.shape[1]
        self.loss = loss
        self.fam = fam
        self.nz = 2 * self.p + (1 if loss == LOSS_LOGISTIC else 0)
        if loss == LOSS_SQUARED:
            self.G = np.ascontiguousarray(Xa.T @ Xa)
            self.Xty = np.ascontiguousarray(Xa.T @ ya)
            self.yy = float(ya @ ya)
        else:
            self.X = Xa
            self.y = ya
            self.eta = np.empty(self.n)
        if prec is None:
            self.P = np.eye(self.p)
        else:
            self.P = np.array(prec, dtype=np.float64, order="C", copy=True)
        self.lam = lam
        self.alpha = alpha
        self.nu = nu
        self.l1w = lam * alpha if fam == FAM_ENET else lam
        self.ridge = lam * (1.0 - alpha) if fam == FAM_ENET else 0.0
        self.logc = _t_logc(nu) if fam == FAM_T else 0.0
        self.lbeta = _t_lbeta(nu) if fam == FAM_T else 0.0
        self.smooth_zero = fam == FAM_LASSO or (fam == FAM_GAUSS and identity)
        self.mu = 0.0
        self.rho = 0.0
        self.w = np.empty(self.p)
        self.q = np.empty(self.p)
        self.dq = np.empty(self.p)
        self.v = np.empty(self.p)
        self.gw = np.empty(self.p)
        self.gs = np.empty(self.p)
        self.qs = np.empty(self.p)

    cdef double _base(self, double[::1] z, double[::1] g) noexcept nogil:
        cdef Py_ssize_t i, j, k, p = self.p, n = self.n
        cdef double f = 0.0, acc, b = 0.0, quad = 0.0, marg = 0.0, l1 = 0.0, r, nu = self.nu
        for i in range(p):
            self.w[i] = z[i] - z[p + i]
            l1 = l1 + z[i] + z[p + i]
        if self.loss == LOSS_SQUARED:
            f = self.yy
            for i in range(p):
                acc = 0.0
                for j in range(p):
                    acc = acc + self.G[i, j] * self.w[j]
                f = f + self.w[i] * (acc - 2.0 * self.Xty[i])
                self.gw[i] = 2.0 * (acc - self.Xty[i])
        else:
            b = z[2 * p]
            for i in range(p):
                self.gw[i] = 0.0
            g[2 * p] = 0.0
            for k in range(n):
                acc = b
                for j in range(p):
                    acc = acc + self.X[k, j] * self.w[j]
                f = f + _log1pexp(acc) - self.y[k] * acc
                r = _expit(acc) - self.y[k]
                g[2 * p] = g[2 * p] + r
                for j in range(p):
                    self.gw[j] = self.gw[j] + r * self.X[k, j]
        f = f + self.l1w * l1
        if self.fam == FAM_ENET:
            for i in range(p):
                f = f + 0.5 * self.ridge * self.w[i] * self.w[i]
                self.gw[i] = self.gw[i] + self.ridge * self.w[i]
        elif not self.smooth_zero:
            if self.fam == FAM_GAUSS:
                f = f + _gauss_penalty(self.w, self.lam, self.P, self.q, self.dq, self.v, self.gs)
            else:
                f = f + _t_penalty(self.w, self.lam, nu, self.logc, self.lbeta, self.P, self.q, self.dq,
                                   self.qs, self.v, self.gs)
            for i in range(p):
                self.gw[i] = self.gw[i] + self.gs[i]
        for i in range(p):
            g[i] = self.gw[i] + self.l1w
            g[p + i] = -self.gw[i] + self.l1w
        return f

    cdef double _eval(self, double[::1] z, double[::1] g) noexcept nogil:
        cdef Py_ssize_t i, p = self.p
        cdef double f = self._base(z, g)
        cdef double c = 0.0, coef
        for i in range(p):
            c = c + z[i] * z[p + i]
        coef = self.mu + self.rho * c
        for i in range(p):
            g[i] = g[i] + coef * z[p + i]
            g[p + i] = g[p + i] + coef * z[i]
        return f + self.mu * c + 0.5 * self.rho * c * c

    def base(self, z):
        """Objective (no constraint terms) and its gradient."""
        cdef double[::1] zz = np.ascontiguousarray(z, dtype=np.float64)
        grad = np.empty(self.nz)
        f = self._base(zz, grad)
        return f, grad

    def __call__(self, z):
        cdef double[::1] zz = np.ascontiguousarray(z, dtype=np.float64)
        grad = np.empty(self.nz)
        f = self._eval(zz, grad)
        return f, grad


cdef inline double _dot_masked(double[::1] a, double[::1] b, unsigned char[::1] free, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(n):
        if free[i]:
            acc = acc + a[i] * b[i]
    return acc


def minimize_bound(ALObjective obj, z0, int n_bounded, int maxiter=500, double gtol=1e-8,
                   double ftol=1e-15, int m=10, int max_backtrack=60):
    """Minimise ``obj`` with ``z[:n_bounded] >= 0`` by projected L-BFGS.

    Directions use limited-memory curvature pairs restricted to the free
    variables (those not held at their bound by the gradient); steps are
    accepted by a projected Armijo backtracking search.

    Returns ``(z, f, iterations, evaluations, status)`` with status 0 for the
    gradient test, 1 for the relative-decrease test, 2 when no descent step
    can be found and 3 when ``maxiter`` is hit.
    """
    cdef Py_ssize_t nz = obj.nz, i, j, k, it, nb = n_bounded, idx
    x_arr = np.array(z0, dtype=np.float64, copy=True)
    cdef double[::1] x = x_arr
    cdef double[::1] g = np.empty(nz)
    cdef double[::1] xn = np.empty(nz)
    cdef double[::1] gn = np.empty(nz)
    cdef double[::1] d = np.empty(nz)
    cdef double[::1] qv = np.empty(nz)
    cdef double[:, ::1] S = np.zeros((m, nz))
    cdef double[:, ::1] Y = np.zeros((m, nz))
    cdef double[::1] al = np.zeros(m)
    cdef double[::1] rr = np.zeros(m)
    cdef unsigned char[::1] free = np.ones(nz, dtype=np.uint8)
    cdef int head = 0, count = 0, status = 3, nfev = 0, bt
    cdef double f, fn, pg, gam = 1.0, eps_act, sy, yy, ss, step, dd, decrease, beta, gi, t
    cdef bint ok, reset

    for i in range(nb):
        if x[i] < 0.0:
            x[i] = 0.0
    f = obj._eval(x, g)
    nfev += 1
    it = 0
    with nogil:
        while it < maxiter:
            # projected gradient and the epsilon-active set
            pg = 0.0
            eps_act = 0.0
            for i in range(nz):
                gi = g[i]
                if i < nb:
                    t = x[i] - gi
                    if t < 0.0:
                        t = 0.0
                    t = fabs(x[i] - t)
                    if t > eps_act:
                        eps_act = t
                    if x[i] <= 0.0 and gi > 0.0:
                        gi = 0.0
                if fabs(gi) > pg:
                    pg = fabs(gi)
            if pg <= gtol:
                status = 0
                break
            if eps_act > 1e-8:
                eps_act = 1e-8
            for i in range(nz):
                free[i] = 1
                if i < nb and x[i] <= eps_act and g[i] > 0.0:
                    free[i] = 0
            reset = False
            while True:
                # two-loop recursion on free coordinates
                for i in range(nz):
                    qv[i] = g[i] if free[i] else 0.0
                gam = 0.0
                for k in range(count):
                    idx = (head - 1 - k + m) % m
                    sy = _dot_masked(S[idx], Y[idx], free, nz)
                    if sy <= 1e-12 * sqrt(_dot_masked(S[idx], S[idx], free, nz) *
                                           _dot_masked(Y[idx], Y[idx], free, nz)):
                        rr[idx] = 0.0
                        continue
                    rr[idx] = 1.0 / sy
                    if gam == 0.0:
                        gam = sy / _dot_masked(Y[idx], Y[idx], free, nz)
                    al[idx] = rr[idx] * _dot_masked(S[idx], qv, free, nz)
                    for i in range(nz):
                        if free[i]:
                            qv[i] = qv[i] - al[idx] * Y[idx, i]
                if gam == 0.0:
                    gam = 1.0 / pg if count == 0 else 1.0
                    if gam > 1.0:
                        gam = 1.0
                for i in range(nz):
                    qv[i] = gam * qv[i]
                for k in range(count - 1, -1, -1):
                    idx = (head - 1 - k + m) % m
                    if rr[idx] == 0.0:
                        continue
                    beta = rr[idx] * _dot_masked(Y[idx], qv, free, nz)
                    for i in range(nz):
                        if free[i]:
                            qv[i] = qv[i] + S[idx, i] * (al[idx] - beta)
                dd = 0.0
                for i in range(nz):
                    if free[i]:
                        d[i] = -qv[i]
                        dd = dd + d[i] * g[i]
                    else:
                        d[i] = -gam * g[i]
                if dd >= 0.0:
                    # not a descent direction on the free set: fall back to scaled steepest descent
                    count = 0
                    for i in range(nz):
                        d[i] = -g[i] / (pg if pg > 1.0 else 1.0)
                # projected backtracking
                step = 1.0
                ok = False
                for bt in range(max_backtrack):
                    decrease = 0.0
                    for i in range(nz):
                        xn[i] = x[i] + step * d[i]
                        if i < nb and xn[i] < 0.0:
                            xn[i] = 0.0
                        decrease = decrease + g[i] * (xn[i] - x[i])
                    if decrease >= 0.0:
                        step = step * 0.5
                        continue
                    fn = obj._eval(xn, gn)
                    nfev += 1
                    if fn <= f + 1e-4 * decrease:
                        ok = True
                        break
                    # safeguarded quadratic interpolation
                    t = -decrease * step / (2.0 * (fn - f - decrease))
                    if not isfinite(t) or t < 0.1 * step:
                        t = 0.1 * step
                    elif t > 0.5 * step:
                        t = 0.5 * step
                    step = t
                if ok:
                    break
                if count > 0 and not reset:
                    count = 0
                    reset = True
                    continue
                break
            if not ok:
                status = 2
                break
            # curvature pair
            sy = 0.0
            yy = 0.0
            ss = 0.0
            for i in range(nz):
                S[head, i] = xn[i] - x[i]
                Y[head, i] = gn[i] - g[i]
                sy = sy + S[head, i] * Y[head, i]
                yy = yy + Y[head, i] * Y[head, i]
                ss = ss + S[head, i] * S[head, i]
            if sy > 1e-12 * sqrt(ss * yy):
                head = (head + 1) % m
                if count < m:
                    count += 1
            t = fabs(f)
            if fabs(fn) > t:
                t = fabs(fn)
            if t < 1.0:
                t = 1.0
            decrease = f - fn
            for i in range(nz):
                x[i] = xn[i]
                g[i] = gn[i]
            f = fn
            it += 1
            if decrease <= ftol * t:
                status = 1
                break
    return x_arr, f, it, nfev, status
