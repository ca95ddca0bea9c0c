"""Array kernels: compiled extension vs numpy fallback, layouts, adjoints."""

import numpy as np
import pytest

from idckit import _kernels_np as knp
from idckit import backend

try:
    from idckit import _kernels as kcy
except ImportError:
    kcy = None

needs_ext = pytest.mark.skipif(kcy is None,
                               reason="compiled extension not built")


def test_backend_reports_a_known_implementation():
    assert backend.BACKEND in ("cython", "numpy")


def test_im2col_column_layout():
    # column index must be n*L + oh*out_w + ow with L = out_h*out_w
    x = np.arange(2 * 1 * 3 * 4, dtype=np.float64).reshape(2, 1, 3, 4)
    cols = knp.im2col(x, 2, 2, 0, 0)
    out_h, out_w = 2, 3
    assert cols.shape == (4, 2 * out_h * out_w)
    for n in range(2):
        for oh in range(out_h):
            for ow in range(out_w):
                patch = x[n, 0, oh:oh + 2, ow:ow + 2].reshape(-1)
                col = cols[:, n * out_h * out_w + oh * out_w + ow]
                np.testing.assert_array_equal(col, patch)


def test_im2col_zero_padding_content():
    x = np.ones((1, 1, 2, 2))
    cols = knp.im2col(x, 3, 3, 1, 1)
    assert cols.shape == (9, 4)
    # top-left output position: only the bottom-right 2x2 of the window
    # overlaps the image
    np.testing.assert_array_equal(
        cols[:, 0], [0, 0, 0, 0, 1, 1, 0, 1, 1])


def test_im2col_rejects_oversize_kernel():
    with pytest.raises(ValueError, match="does not fit"):
        knp.im2col(np.zeros((1, 1, 3, 3)), 5, 5, 0, 0)


def test_col2im_is_the_adjoint_of_im2col():
    rng = np.random.default_rng(0)
    for kh, kw, ph, pw, h, w in [(3, 3, 1, 1, 6, 5), (2, 4, 0, 2, 5, 7),
                                 (1, 1, 0, 0, 3, 3)]:
        x = rng.standard_normal((2, 3, h, w))
        cols = knp.im2col(x, kh, kw, ph, pw)
        cotangent = rng.standard_normal(cols.shape)
        back = knp.col2im(cotangent, 2, 3, h, w, kh, kw, ph, pw)
        lhs = float((cols * cotangent).sum())
        rhs = float((x * back).sum())
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_interp_matrix_rows_are_convex_weights():
    for in_len, out_len in [(2, 4), (3, 7), (5, 5), (4, 3)]:
        a = knp.interp_matrix(in_len, out_len)
        assert a.shape == (out_len, in_len)
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)
        assert (a >= 0).all()


def test_bilinear_up_frozen_values():
    # half-pixel centers: src = (i+0.5)*in/out - 0.5 gives sample points
    # (-0.25, 0.25, 0.75, 1.25) for 2 -> 4, clamped to [0, 1]; upsampling
    # [a, b] therefore yields [a, 0.75a+0.25b, 0.25a+0.75b, b]
    x = np.array([[[[1.0, 3.0], [5.0, 7.0]]]])
    up = knp.bilinear_up(x, 4, 4)
    np.testing.assert_allclose(up[0, 0, 0], [1.0, 1.5, 2.5, 3.0])
    np.testing.assert_allclose(up[0, 0, 3], [5.0, 5.5, 6.5, 7.0])
    # second output row blends input rows with weights (0.75, 0.25)
    np.testing.assert_allclose(up[0, 0, 1], [2.0, 2.5, 3.5, 4.0])


def test_bilinear_up_matches_separable_matrix_route():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 5, 4))
    for oh, ow in [(10, 8), (7, 9), (5, 4)]:
        ah = knp.interp_matrix(5, oh)
        aw = knp.interp_matrix(4, ow)
        expect = np.einsum("oi,ncij,pj->ncop", ah, x, aw)
        got = knp.bilinear_up(x, oh, ow)
        np.testing.assert_allclose(got, expect, atol=1e-12)


def test_bilinear_up_preserves_constants():
    x = np.full((1, 2, 3, 3), 4.25)
    up = knp.bilinear_up(x, 9, 6)
    np.testing.assert_allclose(up, 4.25, atol=1e-12)


def test_bilinear_up_adj_is_the_adjoint():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 2, 4, 6))
    up = knp.bilinear_up(x, 9, 11)
    cotangent = rng.standard_normal(up.shape)
    back = knp.bilinear_up_adj(cotangent, 4, 6)
    assert float((up * cotangent).sum()) == pytest.approx(
        float((x * back).sum()), rel=1e-12)


@needs_ext
def test_compiled_kernels_match_numpy():
    rng = np.random.default_rng(3)
    for kh, kw, ph, pw, h, w in [(3, 3, 1, 1, 8, 8), (2, 2, 0, 0, 5, 6),
                                 (3, 1, 1, 0, 4, 7)]:
        x = rng.standard_normal((2, 3, h, w))
        a = knp.im2col(x, kh, kw, ph, pw)
        b = kcy.im2col(x, kh, kw, ph, pw)
        np.testing.assert_allclose(a, b, atol=1e-14)
        cot = rng.standard_normal(a.shape)
        np.testing.assert_allclose(
            knp.col2im(cot, 2, 3, h, w, kh, kw, ph, pw),
            kcy.col2im(cot, 2, 3, h, w, kh, kw, ph, pw), atol=1e-14)

    for oh, ow in [(12, 10), (7, 5)]:
        x = rng.standard_normal((2, 2, 6, 5))
        np.testing.assert_allclose(knp.bilinear_up(x, oh, ow),
                                   kcy.bilinear_up(x, oh, ow), atol=1e-14)
        g = rng.standard_normal((2, 2, oh, ow))
        np.testing.assert_allclose(knp.bilinear_up_adj(g, 6, 5),
                                   kcy.bilinear_up_adj(g, 6, 5), atol=1e-14)


def test_backend_wrappers_accept_strided_views():
    rng = np.random.default_rng(4)
    base = rng.standard_normal((6, 5, 3, 2))
    view = base.transpose(3, 2, 0, 1)          # non-contiguous (2, 3, 6, 5)
    assert not view.flags["C_CONTIGUOUS"]
    dense = np.ascontiguousarray(view)
    np.testing.assert_array_equal(backend.im2col(view, 3, 3, 1, 1),
                                  backend.im2col(dense, 3, 3, 1, 1))
    np.testing.assert_array_equal(backend.bilinear_up(view, 9, 9),
                                  backend.bilinear_up(dense, 9, 9))
