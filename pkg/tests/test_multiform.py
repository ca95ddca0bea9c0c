"""Formation decoding: counts, ordering, budget invariance, gradients."""

import numpy as np
import pytest

import idckit.tensor as T
from idckit.backend import bilinear_up
from idckit.multiform import (CondensedSet, FormationError, FormationSpec,
                              budget, decode_set, form, form_array,
                              post_downsample)


def rand(*shape, seed=0):
    return np.random.default_rng(seed).standard_normal(shape)


# --------------------------------------------------------------------------
# spec validation

def test_spec_rejects_unknown_mode_and_bad_factor():
    with pytest.raises(FormationError, match="unknown formation mode"):
        FormationSpec("bilinear3d", 2)
    with pytest.raises(FormationError, match="factor"):
        FormationSpec("uniform2d", 0)
    with pytest.raises(FormationError, match="identity"):
        FormationSpec("identity", 2)


def test_decoded_per_stored_count_law():
    assert FormationSpec("identity", 1).decoded_per_stored() == 1
    assert FormationSpec("uniform2d", 2).decoded_per_stored() == 4
    assert FormationSpec("uniform2d", 3).decoded_per_stored() == 9
    assert FormationSpec("multiscale2d", 2).decoded_per_stored() == 5
    assert FormationSpec("uniform1d", 4).decoded_per_stored() == 4


def test_divisibility_enforced():
    bad = rand(2, 1, 6, 6, seed=1)
    with pytest.raises(FormationError, match="divisible"):
        form_array(bad, FormationSpec("uniform2d", 4))
    with pytest.raises(FormationError, match="divisible"):
        form_array(rand(2, 1, 4, 6, seed=2), FormationSpec("uniform1d", 4))


# --------------------------------------------------------------------------
# decode semantics

def test_identity_returns_input_unchanged():
    x = rand(3, 2, 4, 4, seed=3)
    out = form_array(x, FormationSpec("identity", 1))
    np.testing.assert_array_equal(out, x)


def test_uniform2d_blocks_row_major_then_upsampled():
    x = rand(2, 1, 4, 4, seed=4)
    out = form_array(x, FormationSpec("uniform2d", 2))
    assert out.shape == (8, 1, 4, 4)
    # first stored image's pieces come first, blocks scanned row-major
    blocks = [x[:, :, :2, :2], x[:, :, :2, 2:], x[:, :, 2:, :2], x[:, :, 2:, 2:]]
    for img in range(2):
        for b, blk in enumerate(blocks):
            expect = bilinear_up(blk[img:img + 1], 4, 4)[0]
            np.testing.assert_allclose(out[img * 4 + b], expect, atol=1e-12)


def test_multiscale2d_appends_untouched_image_last():
    x = rand(2, 1, 4, 4, seed=5)
    out = form_array(x, FormationSpec("multiscale2d", 2))
    assert out.shape == (10, 1, 4, 4)
    np.testing.assert_array_equal(out[4], x[0])
    np.testing.assert_array_equal(out[9], x[1])
    u2 = form_array(x, FormationSpec("uniform2d", 2))
    np.testing.assert_allclose(out[:4], u2[:4], atol=1e-12)
    np.testing.assert_allclose(out[5:9], u2[4:], atol=1e-12)


def test_uniform1d_splits_width_only():
    x = rand(1, 1, 4, 6, seed=6)
    out = form_array(x, FormationSpec("uniform1d", 3))
    assert out.shape == (3, 1, 4, 6)
    expect = bilinear_up(x[:, :, :, :2], 4, 6)[0]
    np.testing.assert_allclose(out[0], expect, atol=1e-12)


def test_form_is_deterministic():
    x = rand(3, 2, 8, 8, seed=7)
    spec = FormationSpec("uniform2d", 2)
    np.testing.assert_array_equal(form_array(x, spec), form_array(x, spec))


def test_budget_invariance_across_modes():
    shape = (2, 8, 8)
    base = budget(FormationSpec("identity", 1), 10, shape)
    for mode, f in (("uniform2d", 2), ("uniform2d", 4),
                    ("multiscale2d", 2), ("uniform1d", 2)):
        b = budget(FormationSpec(mode, f), 10, shape)
        assert b["floats_stored"] == base["floats_stored"]
        assert b["n_stored"] == 10
        assert b["n_decoded"] == 10 * FormationSpec(mode, f).decoded_per_stored()


def test_gradient_flows_through_form():
    x = rand(1, 1, 4, 4, seed=8)
    probe = rand(5, 1, 4, 4, seed=9)

    def f(stored):
        out = form(stored, FormationSpec("multiscale2d", 2))
        return T.tsum(T.mul(out, T.Tensor(probe)))

    rep = T.grad_check(f, [x])
    assert rep.passed, f"max_rel={rep.max_rel_err:.3e}"


# --------------------------------------------------------------------------
# CondensedSet and decode_set

def test_condensed_set_shape_checks():
    with pytest.raises(FormationError, match="classes"):
        CondensedSet(rand(3, 1, 4, 4, seed=10), FormationSpec())
    with pytest.raises(FormationError, match="divisible"):
        CondensedSet(rand(2, 3, 1, 6, 6, seed=11), FormationSpec("uniform2d", 4))


def test_decode_set_is_class_major_with_labels():
    data = rand(3, 2, 1, 4, 4, seed=12)
    s = CondensedSet(data, FormationSpec("uniform2d", 2))
    images, labels = decode_set(s)
    assert images.shape == (3 * 2 * 4, 1, 4, 4)
    np.testing.assert_array_equal(labels, np.repeat([0, 1, 2], 8))
    np.testing.assert_allclose(
        images[:8], form_array(data[0], s.spec), atol=1e-12)
    assert s.decoded_count() == 8


def test_class_slice_views_stored_data():
    data = rand(2, 3, 1, 4, 4, seed=13)
    s = CondensedSet(data, FormationSpec())
    np.testing.assert_array_equal(s.class_slice(1), data[1])


# --------------------------------------------------------------------------
# post-processing baseline

def test_post_downsample_removes_detail_but_keeps_means():
    x = np.abs(rand(3, 1, 8, 8, seed=14))
    y = post_downsample(x, 2)
    assert y.shape == x.shape
    # pooling then upsampling preserves the global mean direction roughly
    # and strictly reduces high-frequency energy
    assert np.var(y) < np.var(x)
    np.testing.assert_allclose(y.mean(), x.mean(), rtol=0.2)


def test_post_downsample_factor_one_is_copy():
    x = rand(2, 1, 4, 4, seed=15)
    y = post_downsample(x, 1)
    np.testing.assert_array_equal(y, x)
    y[0, 0, 0, 0] += 1.0
    assert x[0, 0, 0, 0] != y[0, 0, 0, 0]


def test_post_downsample_validates():
    with pytest.raises(FormationError):
        post_downsample(rand(2, 1, 5, 5, seed=16), 2)
    with pytest.raises(FormationError):
        post_downsample(rand(2, 1, 4, 4, seed=17), 0)
