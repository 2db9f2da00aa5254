"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the NumPy
implementation is used.  Set ``COPULA_PRIOR_PURE_PYTHON=1`` to force the
fallback (useful for benchmarking and for checking the two agree).
"""
import os

from . import _kernels_py

_impl = _kernels_py
BACKEND = "python"

if not os.environ.get("COPULA_PRIOR_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        pass

EPS_U = _kernels_py.EPS_U

ndtri = _impl.ndtri
t_pdf = _impl.t_pdf
t_cdf = _impl.t_cdf
t_upper_tail = _impl.t_upper_tail
t_isf_tail = _impl.t_isf_tail
t_quantile = _impl.t_quantile
qmap_gauss = _impl.qmap_gauss
qmap_t = _impl.qmap_t
qmap_t_log = _impl.qmap_t_log
gauss_isf_log = _impl.gauss_isf_log
t_isf_log = _impl.t_isf_log
t_log_sf = _impl.t_log_sf
gauss_smooth = _impl.gauss_smooth
t_smooth = _impl.t_smooth
ALObjective = _impl.ALObjective
minimize_bound = _impl.minimize_bound
LOSS_SQUARED, LOSS_LOGISTIC = _kernels_py.LOSS_SQUARED, _kernels_py.LOSS_LOGISTIC
FAM_LASSO, FAM_ENET, FAM_GAUSS, FAM_T = (_kernels_py.FAM_LASSO, _kernels_py.FAM_ENET,
                                         _kernels_py.FAM_GAUSS, _kernels_py.FAM_T)


def backends():
    """Return the available kernel modules keyed by name."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
        out["cython"] = _kernels
    except ImportError:
        pass
    return out
