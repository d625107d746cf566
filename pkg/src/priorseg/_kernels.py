"""Pick the distance-transform backend once, at import time.

The compiled extension is used when it was built; otherwise the numpy
fallback. Setting ``PRIORSEG_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _edt_py

if os.environ.get("PRIORSEG_PURE_PYTHON", "") not in ("", "0"):
    edt_sq = _edt_py.edt_sq
    BACKEND = "python"
else:
    try:
        from ._edt_cy import edt_sq
    except ImportError:  # extension not built
        edt_sq = _edt_py.edt_sq
        BACKEND = "python"
    else:
        BACKEND = "cython"

__all__ = ["edt_sq", "BACKEND"]
