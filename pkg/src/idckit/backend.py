"""Kernel backend selection.

The compiled extension is used when it imports cleanly; otherwise the numpy
fallback takes over. Set IDCKIT_BACKEND=numpy or =cython to force a choice
(cython raises if the extension is unavailable).
"""

from __future__ import annotations

import os

from . import _kernels_np

_REQUESTED = os.environ.get("IDCKIT_BACKEND", "auto").lower()

if _REQUESTED not in ("auto", "cython", "numpy"):
    raise RuntimeError(
        f"IDCKIT_BACKEND must be auto, cython, or numpy (got {_REQUESTED!r})"
    )

_impl = None
if _REQUESTED in ("auto", "cython"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        if _REQUESTED == "cython":
            raise RuntimeError(
                "IDCKIT_BACKEND=cython but the compiled extension is not "
                "installed; rebuild the package or use IDCKIT_BACKEND=numpy"
            ) from None
        _impl = None

if _impl is None:
    _impl = _kernels_np
    BACKEND = "numpy"
else:
    BACKEND = "cython"

import numpy as _np

# tensor ops may hand over strided views (transpose/narrow are lazy); the
# compiled kernels want C-contiguous buffers, and the copy is a no-op for
# arrays that already are


def im2col(x, kh, kw, ph, pw):
    return _impl.im2col(_np.ascontiguousarray(x), kh, kw, ph, pw)


def col2im(cols, n, c, h, w, kh, kw, ph, pw):
    return _impl.col2im(_np.ascontiguousarray(cols), n, c, h, w, kh, kw, ph, pw)


def bilinear_up(x, oh, ow):
    return _impl.bilinear_up(_np.ascontiguousarray(x), oh, ow)


def bilinear_up_adj(g, h, w):
    return _impl.bilinear_up_adj(_np.ascontiguousarray(g), h, w)


def backend_name() -> str:
    return BACKEND
