"""Hot kernels (convolution, LF update, cell interpolation) with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; set ``NLTRAFFIC_BACKEND=python``
to force the fallback. ``BACKEND`` names the active one.
"""

from __future__ import annotations

import os

from . import _pyfallback

_forced = os.environ.get("NLTRAFFIC_BACKEND", "").lower()

try:
    if _forced == "python":
        raise ImportError("fallback forced by NLTRAFFIC_BACKEND")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pyfallback
    BACKEND = "python"


def available_backends() -> dict:
    out = {"python": _pyfallback}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out


convolve_direct = _impl.convolve_direct
lf_step = _impl.lf_step
interp_linear = _impl.interp_linear

__all__ = ["BACKEND", "available_backends", "convolve_direct", "interp_linear", "lf_step"]
