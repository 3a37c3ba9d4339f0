"""GRU kernel selection.

The compiled extension is used when it imports; otherwise the numpy
implementation is used.  Setting ``CTRSGEN_PURE_PYTHON=1`` forces the
fallback.
"""

import os

from . import _gru_py

try:
    if os.environ.get("CTRSGEN_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python kernels requested")
    from . import _gru_ext as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _gru_py
    BACKEND = "python"

gru_forward = _impl.gru_forward
gru_backward = _impl.gru_backward

__all__ = ["BACKEND", "gru_forward", "gru_backward"]
