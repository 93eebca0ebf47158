"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set ``SWITCHSTAB_PURE_PYTHON=1`` to force the numpy implementation.
"""

import os

from . import _kernels_py

if os.environ.get("SWITCHSTAB_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "compiled"
SINGULAR_NORM = _kernels_py.SINGULAR_NORM

cea_eval = _impl.cea_eval
rollout = _impl.rollout
greedy_rollout = _impl.greedy_rollout
