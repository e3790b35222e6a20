"""Backend selection for the hot kernels.

The compiled extension is used when importable; set ``SVTLAB_PURE=1`` to
force the numpy fallback (handy for benchmarking and cross-checking).
"""
import os

from . import _fallback

BACKEND = "python"
if os.environ.get("SVTLAB_PURE") != "1":
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback

svt_scan = _impl.svt_scan
mc_match_count = _impl.mc_match_count
log_integrand = _impl.log_integrand

__all__ = ["BACKEND", "svt_scan", "mc_match_count", "log_integrand"]
