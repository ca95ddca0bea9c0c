# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot array kernels (see _kernels_np for the
layout conventions; the two implementations must agree numerically)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def im2col(double[:, :, :, ::1] x, int kh, int kw, int ph, int pw):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = h + 2 * ph - kh + 1
    cdef Py_ssize_t ow = w + 2 * pw - kw + 1
    if oh <= 0 or ow <= 0:
        raise ValueError(
            f"im2col: kernel ({kh}x{kw}) with padding ({ph},{pw}) does not fit "
            f"input ({h}x{w})"
        )
    cdef Py_ssize_t L = oh * ow
    out_arr = np.zeros((c * kh * kw, n * L), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t ci, i, j, ni, a, b, r, base, ih, iw
    with nogil:
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    r = (ci * kh + i) * kw + j
                    for ni in range(n):
                        base = ni * L
                        for a in range(oh):
                            ih = a + i - ph
                            if ih < 0 or ih >= h:
                                continue
                            for b in range(ow):
                                iw = b + j - pw
                                if 0 <= iw < w:
                                    out[r, base + a * ow + b] = x[ni, ci, ih, iw]
    return out_arr


def col2im(double[:, ::1] cols, int n, int c, int h, int w,
           int kh, int kw, int ph, int pw):
    cdef Py_ssize_t oh = h + 2 * ph - kh + 1
    cdef Py_ssize_t ow = w + 2 * pw - kw + 1
    cdef Py_ssize_t L = oh * ow
    out_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ci, i, j, ni, a, b, r, base, ih, iw
    with nogil:
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    r = (ci * kh + i) * kw + j
                    for ni in range(n):
                        base = ni * L
                        for a in range(oh):
                            ih = a + i - ph
                            if ih < 0 or ih >= h:
                                continue
                            for b in range(ow):
                                iw = b + j - pw
                                if 0 <= iw < w:
                                    out[ni, ci, ih, iw] += cols[r, base + a * ow + b]
    return out_arr


def _axis_coords(Py_ssize_t in_len, Py_ssize_t out_len):
    src = (np.arange(out_len, dtype=np.float64) + 0.5) * (in_len / float(out_len)) - 0.5
    src = np.clip(src, 0.0, in_len - 1.0)
    lo = np.minimum(np.floor(src).astype(np.int64), in_len - 1)
    hi = np.minimum(lo + 1, in_len - 1)
    return lo, hi, src - lo


def bilinear_up(double[:, :, :, ::1] x, int oh, int ow):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    y_lo_a, y_hi_a, fy_a = _axis_coords(h, oh)
    x_lo_a, x_hi_a, fx_a = _axis_coords(w, ow)
    cdef long[::1] y0 = y_lo_a, y1 = y_hi_a, x0 = x_lo_a, x1 = x_hi_a
    cdef double[::1] fy = fy_a, fx = fx_a
    out_arr = np.empty((n, c, oh, ow), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ni, ci, a, b
    cdef double wy, wx, top, bot
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for a in range(oh):
                    wy = fy[a]
                    for b in range(ow):
                        wx = fx[b]
                        top = (1.0 - wx) * x[ni, ci, y0[a], x0[b]] + wx * x[ni, ci, y0[a], x1[b]]
                        bot = (1.0 - wx) * x[ni, ci, y1[a], x0[b]] + wx * x[ni, ci, y1[a], x1[b]]
                        out[ni, ci, a, b] = (1.0 - wy) * top + wy * bot
    return out_arr


def bilinear_up_adj(double[:, :, :, ::1] g, int h, int w):
    cdef Py_ssize_t n = g.shape[0], c = g.shape[1], oh = g.shape[2], ow = g.shape[3]
    y_lo_a, y_hi_a, fy_a = _axis_coords(h, oh)
    x_lo_a, x_hi_a, fx_a = _axis_coords(w, ow)
    cdef long[::1] y0 = y_lo_a, y1 = y_hi_a, x0 = x_lo_a, x1 = x_hi_a
    cdef double[::1] fy = fy_a, fx = fx_a
    out_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ni, ci, a, b
    cdef double wy, wx, gv
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for a in range(oh):
                    wy = fy[a]
                    for b in range(ow):
                        wx = fx[b]
                        gv = g[ni, ci, a, b]
                        out[ni, ci, y0[a], x0[b]] += (1.0 - wy) * (1.0 - wx) * gv
                        out[ni, ci, y0[a], x1[b]] += (1.0 - wy) * wx * gv
                        out[ni, ci, y1[a], x0[b]] += wy * (1.0 - wx) * gv
                        out[ni, ci, y1[a], x1[b]] += wy * wx * gv
    return out_arr
