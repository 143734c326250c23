"""Hot loops for raster tools and envelope matching.

The compiled extension ``_ckernels`` is used when it was built; otherwise,
or when ``EOPIPE_PURE_PYTHON`` is set, the pure-Python module takes over.
``BACKEND`` names the active implementation.
"""

from __future__ import annotations

import os

from . import _pykernels

try:
    if os.environ.get("EOPIPE_PURE_PYTHON"):
        raise ImportError("pure Python kernels requested")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

ndvi = _impl.ndvi
classify = _impl.classify
equal_mask = _impl.equal_mask
match_rows = _impl.match_rows


def available_backends() -> dict[str, object]:
    """All importable kernel modules, keyed by backend name."""
    backends: dict[str, object] = {"python": _pykernels}
    try:
        from . import _ckernels

        backends["cython"] = _ckernels
    except ImportError:
        pass
    return backends


__all__ = ["BACKEND", "available_backends", "classify", "equal_mask", "match_rows", "ndvi"]
