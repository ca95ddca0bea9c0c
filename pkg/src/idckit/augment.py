"""Differentiable data augmentation.

A sampled AugmentParams fixes one concrete transform (color jitter, crop
offset, cutout box). Applying the same params to two batches applies
pixel-identical transforms, which is what gradient matching needs: the
synthetic and real batches must see the same augmentation.

Order is fixed: color -> crop -> cutout. All pieces are built from recorded
tensor ops, so gradients flow through to the input pixels. Values are not
clamped to [0,1]; the transforms stay linear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T


@dataclass(frozen=True)
class AugmentPolicy:
    """Sampling ranges. brightness is a +- shift; contrast and saturation
    are multiplicative ranges; crop_pad is the zero-pad margin before taking
    an offset window; cutout_div divides the image side for the box size."""

    brightness: float = 0.2
    contrast: tuple[float, float] = (0.8, 1.2)
    saturation: tuple[float, float] = (0.8, 1.2)
    crop_pad: int = 4
    cutout_div: int = 4
    use_color: bool = True
    use_crop: bool = True
    use_cutout: bool = True


@dataclass(frozen=True)
class AugmentParams:
    brightness: float = 0.0
    contrast: float = 1.0
    saturation: float = 1.0
    crop_pad: int = 0
    crop_dy: int = 0
    crop_dx: int = 0
    cutout_box: tuple[int, int, int] | None = None  # (top, left, size)


def sample_params(rng: np.random.Generator, image_hw: tuple[int, int],
                  policy: AugmentPolicy | None = None) -> AugmentParams:
    """Draw one transform. The draw order is fixed so a shared rng state
    yields identical params for identical policies."""
    p = policy or AugmentPolicy()
    h, w = image_hw
    brightness = 0.0
    contrast = 1.0
    saturation = 1.0
    if p.use_color:
        brightness = float(rng.uniform(-p.brightness, p.brightness))
        contrast = float(rng.uniform(*p.contrast))
        saturation = float(rng.uniform(*p.saturation))
    crop_pad = crop_dy = crop_dx = 0
    if p.use_crop and p.crop_pad > 0:
        crop_pad = p.crop_pad
        crop_dy = int(rng.integers(0, 2 * p.crop_pad + 1))
        crop_dx = int(rng.integers(0, 2 * p.crop_pad + 1))
    cutout_box = None
    if p.use_cutout:
        size = max(1, min(h, w) // p.cutout_div)
        top = int(rng.integers(0, h - size + 1))
        left = int(rng.integers(0, w - size + 1))
        cutout_box = (top, left, size)
    return AugmentParams(brightness, contrast, saturation,
                         crop_pad, crop_dy, crop_dx, cutout_box)


def apply(x: T.Tensor, params: AugmentParams) -> T.Tensor:
    """Apply one transform to a (N,C,H,W) batch."""
    if x.ndim != 4:
        raise T.ShapeError(f"augment.apply expects (N,C,H,W), got {x.shape}")
    n, c, h, w = x.shape
    out = x
    # color: saturation scales deviation from the per-pixel channel mean,
    # contrast scales deviation from the per-image mean, brightness shifts
    if params.saturation != 1.0 and c > 1:
        pix_mean = T.tmean(out, axis=1, keepdims=True)
        out = T.add(T.scale(T.sub(out, pix_mean), params.saturation), pix_mean)
    if params.contrast != 1.0:
        img_mean = T.tmean(out, axis=(1, 2, 3), keepdims=True)
        out = T.add(T.scale(T.sub(out, img_mean), params.contrast), img_mean)
    if params.brightness != 0.0:
        out = T.add_const(out, params.brightness)
    # crop: zero-pad then take the offset window of the original size
    if params.crop_pad > 0:
        if not (0 <= params.crop_dy <= 2 * params.crop_pad
                and 0 <= params.crop_dx <= 2 * params.crop_pad):
            raise ValueError(
                f"crop offsets ({params.crop_dy},{params.crop_dx}) outside "
                f"[0, {2 * params.crop_pad}]")
        padded = T.pad2d(out, params.crop_pad)
        out = T.narrow(T.narrow(padded, 2, params.crop_dy, h),
                       3, params.crop_dx, w)
    # cutout: zero a square box
    if params.cutout_box is not None:
        top, left, size = params.cutout_box
        if top + size > h or left + size > w:
            raise ValueError(
                f"cutout box {params.cutout_box} exceeds image {h}x{w}")
        mask = np.ones((1, 1, h, w), dtype=np.float64)
        mask[:, :, top:top + size, left:left + size] = 0.0
        out = T.mul(out, T.Tensor(mask))
    return out


def cutmix(x: T.Tensor, labels: np.ndarray, rng: np.random.Generator
           ) -> tuple[T.Tensor, np.ndarray, float]:
    """Mix each image with a permuted partner inside a random box.

    The raw mix ratio r is uniform on [0,1); the box side fractions are
    sqrt(1-r), the box is placed fully inside the image, and the label
    weight is lam = 1 - box_area / image_area. Returns (mixed batch,
    mixed soft labels, lam).
    """
    if x.ndim != 4:
        raise T.ShapeError(f"cutmix expects (N,C,H,W), got {x.shape}")
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim != 2 or labels.shape[0] != x.shape[0]:
        raise T.ShapeError(
            f"cutmix labels {labels.shape} do not match batch {x.shape[0]}")
    n, c, h, w = x.shape
    perm = rng.permutation(n)
    r = float(rng.uniform())
    frac = float(np.sqrt(1.0 - r))
    bh, bw = int(round(h * frac)), int(round(w * frac))
    if bh == 0 or bw == 0:
        return x, labels.copy(), 1.0
    top = int(rng.integers(0, h - bh + 1))
    left = int(rng.integers(0, w - bw + 1))
    lam = 1.0 - (bh * bw) / float(h * w)
    mask = np.zeros((1, 1, h, w), dtype=np.float64)
    mask[:, :, top:top + bh, left:left + bw] = 1.0
    partner = T.gather_rows(x, perm)
    mixed = T.add(T.mul(x, T.Tensor(1.0 - mask)),
                  T.mul(partner, T.Tensor(mask)))
    mixed_labels = lam * labels + (1.0 - lam) * labels[perm]
    return mixed, mixed_labels, lam
