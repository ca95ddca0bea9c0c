"""Augmentation: shared-parameter application, color/crop/cutout pieces,
and CutMix mixing rules."""

import numpy as np
import pytest

import idckit.tensor as T
from idckit.augment import (AugmentParams, AugmentPolicy, apply, cutmix,
                            sample_params)


def rand(*shape, seed=0):
    return np.random.default_rng(seed).standard_normal(shape)


def test_sample_params_within_policy_ranges():
    rng = np.random.default_rng(0)
    pol = AugmentPolicy()
    for _ in range(200):
        p = sample_params(rng, (16, 16), pol)
        assert -0.2 <= p.brightness <= 0.2
        assert 0.8 <= p.contrast <= 1.2
        assert 0.8 <= p.saturation <= 1.2
        assert p.crop_pad == 4
        assert 0 <= p.crop_dy <= 8 and 0 <= p.crop_dx <= 8
        top, left, size = p.cutout_box
        assert size == 4
        assert 0 <= top <= 12 and 0 <= left <= 12


def test_sample_params_deterministic_per_rng_state():
    a = sample_params(np.random.default_rng(7), (8, 8))
    b = sample_params(np.random.default_rng(7), (8, 8))
    assert a == b


def test_policy_switches_disable_pieces():
    rng = np.random.default_rng(1)
    p = sample_params(rng, (8, 8), AugmentPolicy(use_color=False,
                                                 use_crop=False,
                                                 use_cutout=False))
    assert p == AugmentParams()


def test_identity_params_do_nothing():
    x = rand(2, 3, 8, 8, seed=2)
    out = apply(T.Tensor(x), AugmentParams())
    np.testing.assert_array_equal(out.data, x)


def test_same_params_give_pixel_identical_transforms():
    # the siamese property: equal inputs + one params -> equal outputs
    x = rand(4, 1, 16, 16, seed=3)
    params = sample_params(np.random.default_rng(3), (16, 16))
    a = apply(T.Tensor(x.copy()), params)
    b = apply(T.Tensor(x.copy()), params)
    np.testing.assert_array_equal(a.data, b.data)


def test_brightness_shifts_all_pixels():
    x = rand(2, 1, 4, 4, seed=4)
    out = apply(T.Tensor(x), AugmentParams(brightness=0.25))
    np.testing.assert_allclose(out.data, x + 0.25)


def test_contrast_scales_deviation_from_image_mean():
    x = rand(2, 1, 4, 4, seed=5)
    out = apply(T.Tensor(x), AugmentParams(contrast=1.5))
    m = x.mean(axis=(1, 2, 3), keepdims=True)
    np.testing.assert_allclose(out.data, (x - m) * 1.5 + m, atol=1e-12)


def test_saturation_is_identity_for_single_channel():
    x = rand(2, 1, 4, 4, seed=6)
    out = apply(T.Tensor(x), AugmentParams(saturation=1.7))
    np.testing.assert_array_equal(out.data, x)


def test_saturation_scales_channel_deviation():
    x = rand(2, 3, 4, 4, seed=7)
    out = apply(T.Tensor(x), AugmentParams(saturation=0.5))
    m = x.mean(axis=1, keepdims=True)
    np.testing.assert_allclose(out.data, (x - m) * 0.5 + m, atol=1e-12)


def test_crop_shifts_content_and_zero_pads():
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    # centered offset reproduces the input
    center = apply(T.Tensor(x), AugmentParams(crop_pad=2, crop_dy=2, crop_dx=2))
    np.testing.assert_array_equal(center.data, x)
    # extreme offset pulls in the zero padding
    corner = apply(T.Tensor(x), AugmentParams(crop_pad=2, crop_dy=0, crop_dx=0))
    assert corner.data[0, 0, 0, 0] == 0.0
    assert corner.data[0, 0, 2, 2] == x[0, 0, 0, 0]


def test_crop_offsets_validated():
    x = T.Tensor(np.zeros((1, 1, 4, 4)))
    with pytest.raises(ValueError, match="crop"):
        apply(x, AugmentParams(crop_pad=2, crop_dy=5, crop_dx=0))


def test_cutout_zeroes_the_box_only():
    x = np.ones((1, 1, 8, 8))
    out = apply(T.Tensor(x), AugmentParams(cutout_box=(2, 3, 4))).data
    assert out[0, 0, 2:6, 3:7].sum() == 0.0
    assert out.sum() == 64 - 16


def test_cutout_box_validated():
    with pytest.raises(ValueError, match="cutout"):
        apply(T.Tensor(np.ones((1, 1, 8, 8))),
              AugmentParams(cutout_box=(6, 6, 4)))


def test_apply_is_differentiable_end_to_end():
    x0 = rand(2, 3, 8, 8, seed=8)
    params = AugmentParams(brightness=0.1, contrast=1.2, saturation=0.9,
                           crop_pad=2, crop_dy=1, crop_dx=3,
                           cutout_box=(1, 1, 2))

    def f(x):
        return T.tsum(T.mul(apply(x, params), apply(x, params)))

    rep = T.grad_check(f, [x0])
    assert rep.passed, f"max_rel={rep.max_rel_err:.3e}"


# --------------------------------------------------------------------------
# cutmix

def test_cutmix_labels_stay_distributions():
    x = T.Tensor(rand(6, 1, 8, 8, seed=9))
    labels = np.eye(3)[[0, 1, 2, 0, 1, 2]]
    rng = np.random.default_rng(9)
    mixed, soft, lam = cutmix(x, labels, rng)
    assert 0.0 <= lam <= 1.0
    np.testing.assert_allclose(soft.sum(axis=1), 1.0, atol=1e-12)
    assert mixed.shape == x.shape


def test_cutmix_blends_exactly_inside_one_box():
    rng = np.random.default_rng(11)
    x = rand(5, 1, 8, 8, seed=11)
    labels = np.eye(5)
    mixed, soft, lam = cutmix(T.Tensor(x), labels, rng)
    # every pixel comes from either the original or some partner image
    diff = mixed.data - x
    changed = np.any(diff != 0.0, axis=(0, 1))
    if changed.any():
        rows = np.flatnonzero(changed.any(axis=1))
        cols = np.flatnonzero(changed.any(axis=0))
        # the changed region is one contiguous rectangle
        assert np.array_equal(rows, np.arange(rows[0], rows[-1] + 1))
        assert np.array_equal(cols, np.arange(cols[0], cols[-1] + 1))
        area = len(rows) * len(cols)
        assert lam == pytest.approx(1.0 - area / 64.0)


def test_cutmix_label_weights_match_the_box_area():
    rng = np.random.default_rng(4)
    n = 4
    x = rand(n, 1, 8, 8, seed=4)
    labels = np.eye(n)  # one class per image makes the mix weights visible
    mixed, soft, lam = cutmix(T.Tensor(x), labels, rng)
    for i in range(n):
        own = soft[i, i]
        assert own == pytest.approx(lam) or own == pytest.approx(1.0)


def test_cutmix_gradient_reaches_both_partners():
    x0 = rand(3, 1, 8, 8, seed=12)
    labels = np.eye(3)

    def f(x):
        mixed, _, _ = cutmix(x, labels, np.random.default_rng(2))
        return T.tsum(T.mul(mixed, mixed))

    rep = T.grad_check(f, [x0])
    assert rep.passed, f"max_rel={rep.max_rel_err:.3e}"


def test_cutmix_rejects_mismatched_labels():
    with pytest.raises(T.ShapeError):
        cutmix(T.Tensor(np.zeros((3, 1, 4, 4))), np.eye(2),
               np.random.default_rng(0))
