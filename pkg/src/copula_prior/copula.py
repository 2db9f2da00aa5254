"""Negative log-priors of the copula regularisation family.

Four families are supported: the lasso and elastic-net (Laplace / elastic-net
marginals under the independence copula) and Laplace marginals joined by a
Gauss or a Student-t copula.  Penalties are negative log-densities with every
coefficient-independent term dropped; :func:`log_prior_constant` returns the
dropped terms when the normalised density is needed.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.special import erfcx, gammaln

from . import kernels
from .errors import InvalidParameterError
from .sigma import CorrelationMatrix


class Family(str, enum.Enum):
    LASSO = "lasso"
    ELASTIC_NET = "elastic-net"
    GAUSS = "gauss-copula"
    T = "t-copula"

    @property
    def is_copula(self):
        return self in (Family.GAUSS, Family.T)

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"en": "elastic-net", "enet": "elastic-net", "elasticnet": "elastic-net",
                   "gauss": "gauss-copula", "lgc": "gauss-copula", "gaussian-copula": "gauss-copula",
                   "t": "t-copula", "ltc": "t-copula", "student-t": "t-copula"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise InvalidParameterError(f"unknown prior family {value!r}") from None


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """A member of the copula prior family.

    ``lam`` is both the Laplace marginal rate and the l1 weight.  ``alpha`` is
    the elastic-net mixing (1 = lasso), ``nu`` the t-copula degrees of freedom.
    ``sigma`` may be left as None for copula families until it is estimated
    from training data.
    """

    family: Family
    lam: float
    alpha: float = 0.5
    nu: float = 10.0
    sigma: CorrelationMatrix | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidParameterError(f"lambda must be positive, got {self.lam!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidParameterError(f"alpha must lie in [0, 1], got {self.alpha!r}")
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise InvalidParameterError(f"nu must be positive, got {self.nu!r}")

    def with_lambda(self, lam):
        return replace(self, lam=float(lam))

    def with_sigma(self, sigma):
        return replace(self, sigma=sigma)

    @property
    def l1_weight(self):
        if self.family is Family.ELASTIC_NET:
            return self.lam * self.alpha
        return self.lam

    def require_sigma(self, p):
        if self.sigma is None:
            raise InvalidParameterError(f"{self.family.value} prior needs a dependence matrix")
        if self.sigma.dim != p:
            raise InvalidParameterError(
                f"dependence matrix is {self.sigma.dim}x{self.sigma.dim} but there are {p} coefficients")
        return self.sigma


class QMap(NamedTuple):
    q: np.ndarray
    dq_domega: np.ndarray


def q_map(omega, spec):
    """Map coefficients to copula scores, ``q_j = G^{-1}(F_L(omega_j))``.

    ``G`` is the standard normal (Gauss copula) or t_nu (t copula) CDF and
    ``F_L`` the Laplace CDF with rate ``spec.lam``.  The derivative is
    ``f_L(omega_j) / g(q_j)``.

    The Laplace tail is carried as a log-probability, so the map stays smooth
    and strictly increasing however far ``omega`` is from zero.  For the t
    copula ``q`` grows like ``exp(lam*|omega|/nu)`` and overflows to ``inf``
    once ``lam*|omega|`` exceeds roughly ``700*nu``; the penalty itself is
    evaluated on a rescaled ``q`` and stays finite there.
    """
    w = np.atleast_1d(np.asarray(omega, dtype=np.float64))
    if spec.family is Family.GAUSS:
        return QMap(*kernels.qmap_gauss(w, spec.lam))
    if spec.family is Family.T:
        return QMap(*kernels.qmap_t(w, spec.lam, spec.nu))
    raise InvalidParameterError(f"q-map is only defined for copula families, not {spec.family.value}")


def smooth_penalty(omega, spec):
    """Value and gradient of the penalty minus its l1 term.

    This is the part the solver treats as smooth: the copula term for the
    copula families, the ridge term for the elastic net, zero for the lasso.
    """
    w = np.asarray(omega, dtype=np.float64)
    fam = spec.family
    if fam is Family.LASSO:
        return 0.0, np.zeros_like(w)
    if fam is Family.ELASTIC_NET:
        ridge = spec.lam * (1.0 - spec.alpha)
        return 0.5 * ridge * float(w @ w), ridge * w
    sigma = spec.require_sigma(w.shape[0])
    if fam is Family.GAUSS:
        if sigma.is_identity():
            return 0.0, np.zeros_like(w)
        return kernels.gauss_smooth(w, spec.lam, sigma.precision)
    return kernels.t_smooth(w, spec.lam, spec.nu, sigma.precision)


def neg_log_prior(omega, spec):
    """Penalty added to the loss: the negative log-prior up to constants."""
    w = np.asarray(omega, dtype=np.float64)
    val, _ = smooth_penalty(w, spec)
    return val + spec.l1_weight * float(np.sum(np.abs(w)))


def neg_log_prior_grad(omega, spec, sign_pattern=1.0):
    """Gradient of the penalty with respect to one branch of the split variables.

    With ``omega = w_plus - w_minus``, ``sign_pattern=+1`` gives the gradient
    with respect to ``w_plus`` and ``-1`` with respect to ``w_minus``; the l1
    term contributes ``+lam`` to every component of either branch.  A vector
    of signs selects the branch per component.
    """
    w = np.asarray(omega, dtype=np.float64)
    _, g = smooth_penalty(w, spec)
    return np.asarray(sign_pattern, dtype=np.float64) * g + spec.l1_weight


def _elastic_net_log_norm(spec):
    a = spec.lam * spec.alpha
    b = 0.5 * spec.lam * (1.0 - spec.alpha)
    if b == 0.0:
        return np.log(2.0 / a)
    return 0.5 * np.log(np.pi / b) + np.log(erfcx(a / (2.0 * np.sqrt(b))))


def log_prior_constant(spec, p):
    """The coefficient-independent part of the log prior density."""
    fam = spec.family
    if fam is Family.ELASTIC_NET:
        return -p * _elastic_net_log_norm(spec)
    const = p * np.log(spec.lam / 2.0)
    if fam is Family.LASSO:
        return const
    sigma = spec.require_sigma(p)
    const -= 0.5 * sigma.logdet
    if fam is Family.T:
        nu = spec.nu
        const += (gammaln(0.5 * (nu + p)) - gammaln(0.5 * nu)
                  + p * (gammaln(0.5 * nu) - gammaln(0.5 * (nu + 1.0))))
    return float(const)


def log_prior_density(omega, spec):
    """Normalised joint log prior density at ``omega``."""
    w = np.asarray(omega, dtype=np.float64)
    return log_prior_constant(spec, w.shape[0]) - neg_log_prior(w, spec)


def _batch_neg_log_prior(points, spec):
    """Penalty for each row of ``points`` (shape (m, p))."""
    m, p = points.shape
    l1 = spec.l1_weight * np.abs(points).sum(axis=1)
    fam = spec.family
    if fam is Family.LASSO:
        return l1
    if fam is Family.ELASTIC_NET:
        return l1 + 0.5 * spec.lam * (1.0 - spec.alpha) * (points ** 2).sum(axis=1)
    prec = spec.require_sigma(p).precision
    q, _ = q_map(points.ravel(), spec)
    q = q.reshape(m, p)
    quad = np.einsum("ij,jk,ik->i", q, prec, q)
    if fam is Family.GAUSS:
        return l1 + 0.5 * (quad - (q ** 2).sum(axis=1))
    nu = spec.nu
    return (l1 + 0.5 * (nu + p) * np.log1p(quad / nu)
            - 0.5 * (nu + 1.0) * np.log1p(q ** 2 / nu).sum(axis=1))


def contour_grid(spec, extent=3.0, resolution=101):
    """Evaluate the two-dimensional joint log prior on a square grid.

    Returns an ``(resolution**2, 3)`` array of ``(omega1, omega2, log_density)``
    rows over ``[-extent, extent]^2``, omega1 varying slowest.
    """
    if spec.family.is_copula:
        spec.require_sigma(2)
    if resolution < 2:
        raise InvalidParameterError("resolution must be at least 2")
    axis = np.linspace(-extent, extent, int(resolution))
    w1, w2 = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([w1.ravel(), w2.ravel()])
    logd = log_prior_constant(spec, 2) - _batch_neg_log_prior(pts, spec)
    return np.column_stack([pts, logd])


def write_contour_csv(grid, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega1", "omega2", "log_density"])
        for a, b, c in grid:
            w.writerow([repr(float(a)), repr(float(b)), repr(float(c))])
