"""Backend selection for the hot loops.

The compiled Cython core is used when it imports; otherwise, or when the
environment variable ``SHALLOW_LANDSCAPE_PURE`` is set to a non-empty value,
the numpy implementation in :mod:`._fallback` takes over.
"""
import os

from . import _fallback

if os.environ.get("SHALLOW_LANDSCAPE_PURE"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

gd_loop = _impl.gd_loop
jacobi_svd = _impl.jacobi_svd

STATUS_CONVERGED = _fallback.STATUS_CONVERGED
STATUS_STATIONARY = _fallback.STATUS_STATIONARY
STATUS_BUDGET = _fallback.STATUS_BUDGET
STATUS_DIVERGED = _fallback.STATUS_DIVERGED


def backends():
    """Map of available backend name -> module, for comparisons and benchmarks."""
    out = {"python": _fallback}
    try:
        from . import _core
        out["compiled"] = _core
    except ImportError:
        pass
    return out
