"""Kernel backend selection.

The compiled extension is used when it imports cleanly; otherwise the numpy
fallback is used. Set ``UDFSW_PURE_PYTHON=1`` to force the fallback.
"""

import logging
import os

from . import _pykernels

logger = logging.getLogger(__name__)


def _load_compiled():
    if os.environ.get("UDFSW_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        from . import _ckernels
    except ImportError as exc:  # extension not built
        logger.debug("compiled kernels unavailable: %s", exc)
        return None
    return _ckernels


_compiled = _load_compiled()
_impl = _compiled if _compiled is not None else _pykernels

BACKEND = "cython" if _compiled is not None else "python"

trilinear = _impl.trilinear
closest_point_triangles = _impl.closest_point_triangles
min_area_triangulation = _impl.min_area_triangulation


def backends():
    """Mapping of available backend name to kernel module."""
    out = {"python": _pykernels}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
