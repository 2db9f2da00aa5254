"""Dependence matrices for the copula priors.

A :class:`CorrelationMatrix` is factorised once (Cholesky) at construction;
the precision matrix, partial correlations and log-determinant are derived
from that single factorisation and reused by every penalty evaluation.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DegenerateFeatureError, InvalidParameterError, LinAlgError

DEFAULT_C = 0.01
JITTER_STEPS = (1e-10, 1e-8, 1e-6, 1e-4, 1e-2)


def _unit_diagonal(a):
    d = np.sqrt(np.diag(a))
    out = a / np.outer(d, d)
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 1.0)
    return out


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Symmetric positive-definite matrix with unit diagonal.

    Attributes
    ----------
    values : (p, p) ndarray
    precision : (p, p) ndarray
        Inverse of ``values``.
    partials : (p, p) ndarray
        Partial correlations ``-P_ij / sqrt(P_ii P_jj)`` with unit diagonal.
    jitter : float
        Ridge added before renormalising the diagonal (0 if none was needed).
    """

    values: np.ndarray
    jitter: float = 0.0
    _chol: np.ndarray = field(init=False, repr=False)
    precision: np.ndarray = field(init=False, repr=False)
    partials: np.ndarray = field(init=False, repr=False)
    _identity: bool = field(init=False, repr=False, default=False)

    def __post_init__(self):
        a = np.array(self.values, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidParameterError(f"correlation matrix must be square, got shape {a.shape}")
        if not np.allclose(a, a.T, atol=1e-12, rtol=0):
            raise InvalidParameterError("correlation matrix must be symmetric")
        if np.max(np.abs(np.diag(a) - 1.0)) > 1e-12:
            raise InvalidParameterError("correlation matrix must have unit diagonal")
        a = 0.5 * (a + a.T)
        try:
            chol = linalg.cholesky(a, lower=True)
        except linalg.LinAlgError as exc:
            raise LinAlgError("correlation matrix is not positive definite") from exc
        p = a.shape[0]
        prec = linalg.cho_solve((chol, True), np.eye(p))
        prec = 0.5 * (prec + prec.T)
        d = np.sqrt(np.diag(prec))
        part = -prec / np.outer(d, d)
        np.fill_diagonal(part, 1.0)
        a.setflags(write=False)
        prec.setflags(write=False)
        part.setflags(write=False)
        object.__setattr__(self, "values", a)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "precision", prec)
        object.__setattr__(self, "partials", part)
        object.__setattr__(self, "_identity", bool(np.all(a == np.eye(p))))

    @classmethod
    def identity(cls, p):
        return cls(np.eye(p))

    @classmethod
    def equicorrelation(cls, p, rho):
        a = np.full((p, p), float(rho))
        np.fill_diagonal(a, 1.0)
        return cls(a)

    @property
    def dim(self):
        return self.values.shape[0]

    @property
    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    def whiten(self, q):
        """Return ``L^{-1} q`` where ``values = L L'``."""
        return linalg.solve_triangular(self._chol, q, lower=True)

    def is_identity(self):
        return self._identity

    def to_csv(self, path, names=None):
        """Write the matrix and its partial correlations as a long-format CSV."""
        p = self.dim
        names = list(names) if names is not None else [f"x{j}" for j in range(p)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "correlation", "partial_correlation"])
            for i in range(p):
                for j in range(p):
                    w.writerow([names[i], names[j], repr(float(self.values[i, j])),
                                repr(float(self.partials[i, j]))])


def estimate_sigma(X, c=DEFAULT_C, names=None):
    """Estimate the prior dependence matrix from standardised features.

    ``S = X'X / n``; when ``n < p`` the ridge blend ``(S + cI) / (1 + c)`` is
    applied.  If the result is not numerically positive definite, ``delta*I``
    is added for increasing ``delta`` and the diagonal renormalised.

    Raises
    ------
    DegenerateFeatureError
        If a column has zero variance.
    LinAlgError
        If no jitter level yields a positive-definite matrix.
    """
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    if not c > 0:
        raise InvalidParameterError(f"blend constant c must be positive, got {c}")
    sd = X.std(axis=0)
    bad = np.flatnonzero(~(sd > 0))
    if bad.size:
        j = int(bad[0])
        name = names[j] if names is not None else f"column {j}"
        raise DegenerateFeatureError(f"feature {name!r} has zero variance", column=name)
    S = _unit_diagonal(X.T @ X / n)
    if n < p:
        S = (S + c * np.eye(p)) / (1.0 + c)
        np.fill_diagonal(S, 1.0)
    try:
        return CorrelationMatrix(S)
    except LinAlgError:
        pass
    for delta in JITTER_STEPS:
        try:
            return CorrelationMatrix(_unit_diagonal(S + delta * np.eye(p)), jitter=delta)
        except LinAlgError:
            continue
    raise LinAlgError(f"could not regularise the {p}x{p} dependence matrix to positive definite")


def quad_form(q, M, mode="inverse"):
    """``q' M^{-1} q`` (``mode='inverse'``) or ``q'(M^{-1} - I)q``
    (``mode='inverse_minus_identity'``) through the cached Cholesky factor."""
    q = np.asarray(q, dtype=np.float64)
    z = M.whiten(q)
    val = float(z @ z)
    if mode == "inverse":
        return val
    if mode == "inverse_minus_identity":
        return val - float(q @ q)
    raise InvalidParameterError(f"unknown quad_form mode {mode!r}")
