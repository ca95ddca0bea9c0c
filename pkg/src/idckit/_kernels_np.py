"""Pure-numpy implementations of the hot array kernels.

These mirror the compiled extension in idckit._kernels exactly: same
signatures, same layouts, same arithmetic conventions. The backend module
picks one implementation at import time.

Layouts:
  im2col   (N,C,H,W) -> (C*kh*kw, N*L) with L = out_h*out_w, stride 1,
           zero padding ph/pw, column index n*L + oh*out_w + ow.
  col2im   exact adjoint of im2col (scatter-add back to (N,C,H,W)).
  bilinear interpolation uses half-pixel source centers
           src = (i + 0.5) * in_len / out_len - 0.5, clamped to the valid
           range, with a 4-point blend; the adjoint scatters the same
           weights.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_INTERP_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _out_extent(in_len: int, k: int, p: int) -> int:
    return in_len + 2 * p - k + 1


def im2col(x: np.ndarray, kh: int, kw: int, ph: int, pw: int) -> np.ndarray:
    n, c, h, w = x.shape
    oh = _out_extent(h, kh, ph)
    ow = _out_extent(w, kw, pw)
    if oh <= 0 or ow <= 0:
        raise ValueError(
            f"im2col: kernel ({kh}x{kw}) with padding ({ph},{pw}) does not fit "
            f"input ({h}x{w})"
        )
    if ph or pw:
        padded = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
        padded[:, :, ph:ph + h, pw:pw + w] = x
    else:
        padded = x
    win = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * kh * kw, n * oh * ow)
    return np.ascontiguousarray(cols)


def col2im(cols: np.ndarray, n: int, c: int, h: int, w: int,
           kh: int, kw: int, ph: int, pw: int) -> np.ndarray:
    oh = _out_extent(h, kh, ph)
    ow = _out_extent(w, kw, pw)
    c6 = cols.reshape(c, kh, kw, n, oh, ow)
    padded = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            padded[:, :, i:i + oh, j:j + ow] += c6[:, i, j].transpose(1, 0, 2, 3)
    if ph or pw:
        return padded[:, :, ph:ph + h, pw:pw + w].copy()
    return padded


def interp_matrix(in_len: int, out_len: int) -> np.ndarray:
    """Dense (out_len, in_len) one-dimensional linear-interpolation matrix."""
    key = (in_len, out_len)
    cached = _INTERP_CACHE.get(key)
    if cached is not None:
        return cached
    a = np.zeros((out_len, in_len), dtype=np.float64)
    src = (np.arange(out_len, dtype=np.float64) + 0.5) * (in_len / out_len) - 0.5
    src = np.clip(src, 0.0, in_len - 1.0)
    lo = np.floor(src).astype(np.int64)
    lo = np.minimum(lo, in_len - 1)
    hi = np.minimum(lo + 1, in_len - 1)
    frac = src - lo
    rows = np.arange(out_len)
    np.add.at(a, (rows, lo), 1.0 - frac)
    np.add.at(a, (rows, hi), frac)
    _INTERP_CACHE[key] = a
    return a


def bilinear_up(x: np.ndarray, oh: int, ow: int) -> np.ndarray:
    n, c, h, w = x.shape
    ay = interp_matrix(h, oh)
    ax = interp_matrix(w, ow)
    flat = x.reshape(n * c, h, w)
    out = np.matmul(np.matmul(ay, flat), ax.T)
    return np.ascontiguousarray(out.reshape(n, c, oh, ow))


def bilinear_up_adj(g: np.ndarray, h: int, w: int) -> np.ndarray:
    n, c, oh, ow = g.shape
    ay = interp_matrix(h, oh)
    ax = interp_matrix(w, ow)
    flat = g.reshape(n * c, oh, ow)
    out = np.matmul(np.matmul(ay.T, flat), ax)
    return np.ascontiguousarray(out.reshape(n, c, h, w))
