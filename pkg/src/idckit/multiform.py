"""Multi-formation storage: each stored image expands into several training
images under a fixed, differentiable decoder.

Modes:
  identity      stored images are used as-is (n' = n)
  uniform2d     each image splits into factor^2 equal blocks (row-major),
                every block is bilinearly upsampled to full size
                (n' = n * factor^2)
  multiscale2d  the factor^2 upsampled blocks plus the untouched image
                (n' = n * (factor^2 + 1))
  uniform1d     splits along the width axis only, for signal-shaped data
                (n' = n * factor)

The stored budget never changes with the mode: a CondensedSet always holds
n_per_class full-size images per class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T

MODES = ("identity", "uniform2d", "multiscale2d", "uniform1d")


class FormationError(ValueError):
    """A formation spec does not fit the data it is applied to."""


@dataclass(frozen=True)
class FormationSpec:
    mode: str = "identity"
    factor: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise FormationError(
                f"unknown formation mode {self.mode!r}; expected one of {MODES}")
        if self.factor < 1:
            raise FormationError(f"factor must be >= 1, got {self.factor}")
        if self.mode == "identity" and self.factor != 1:
            raise FormationError("identity formation requires factor 1")

    def decoded_per_stored(self) -> int:
        """How many training images one stored image expands into."""
        if self.mode == "identity":
            return 1
        if self.mode == "uniform2d":
            return self.factor ** 2
        if self.mode == "multiscale2d":
            return self.factor ** 2 + 1
        return self.factor  # uniform1d


@dataclass
class CondensedSet:
    """Stored synthetic images, class-major: data[c, i] is the i-th stored
    image of class c. Labels are implied by the class axis."""

    data: np.ndarray            # (num_classes, n_per_class, C, H, W) float64
    spec: FormationSpec = field(default_factory=FormationSpec)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 5:
            raise FormationError(
                f"CondensedSet data must be (classes, n, C, H, W), "
                f"got {self.data.shape}")
        _check_divisibility(self.spec, self.data.shape[2:])

    @property
    def num_classes(self) -> int:
        return self.data.shape[0]

    @property
    def n_per_class(self) -> int:
        return self.data.shape[1]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.data.shape[2:])

    def class_slice(self, c: int) -> np.ndarray:
        return self.data[c]

    def decoded_count(self) -> int:
        """Training images per class after formation."""
        return self.n_per_class * self.spec.decoded_per_stored()


def _check_divisibility(spec: FormationSpec, shape) -> None:
    c, h, w = shape
    f = spec.factor
    if spec.mode in ("uniform2d", "multiscale2d") and (h % f or w % f):
        raise FormationError(
            f"mode {spec.mode} with factor {f} needs spatial extents "
            f"divisible by {f}, got {h}x{w}")
    if spec.mode == "uniform1d" and w % f:
        raise FormationError(
            f"mode uniform1d with factor {f} needs width divisible by {f}, "
            f"got {w}")


def form(stored: T.Tensor, spec: FormationSpec) -> T.Tensor:
    """Decode a (n, C, H, W) stored tensor into its (n', C, H, W) training
    images. Differentiable; gradients flow back to the stored pixels."""
    if stored.ndim != 4:
        raise FormationError(f"form expects (n,C,H,W), got {stored.shape}")
    n, c, h, w = stored.shape
    _check_divisibility(spec, (c, h, w))
    f = spec.factor
    if spec.mode == "identity" or (f == 1 and spec.mode != "multiscale2d"):
        return stored

    pieces: list[T.Tensor] = []
    if spec.mode in ("uniform2d", "multiscale2d"):
        bh, bw = h // f, w // f
        for bi in range(f):
            for bj in range(f):
                block = T.narrow(T.narrow(stored, 2, bi * bh, bh), 3, bj * bw, bw)
                up = T.bilinear_upsample(block, h, w)
                pieces.append(T.reshape(up, (1, n, c, h, w)))
        if spec.mode == "multiscale2d":
            pieces.append(T.reshape(stored, (1, n, c, h, w)))
    else:  # uniform1d
        bw = w // f
        for bj in range(f):
            block = T.narrow(stored, 3, bj * bw, bw)
            up = T.bilinear_upsample(block, h, w)
            pieces.append(T.reshape(up, (1, n, c, h, w)))

    stacked = T.concat(pieces, axis=0)                   # (k, n, C, H, W)
    k = len(pieces)
    ordered = T.transpose(stacked, (1, 0, 2, 3, 4))      # stored-image major
    return T.reshape(ordered, (n * k, c, h, w))


def form_array(stored: np.ndarray, spec: FormationSpec) -> np.ndarray:
    """form() for plain arrays, without recording gradients."""
    with T.no_grad():
        return form(T.Tensor(stored), spec).data


def decode_set(s: CondensedSet) -> tuple[np.ndarray, np.ndarray]:
    """Decode every class of a CondensedSet.

    Returns (images, labels) with images (num_classes * n', C, H, W) in
    class order and integer labels.
    """
    per = []
    labels = []
    for c in range(s.num_classes):
        d = form_array(s.data[c], s.spec)
        per.append(d)
        labels.append(np.full(d.shape[0], c, dtype=np.int64))
    return np.concatenate(per, axis=0), np.concatenate(labels)


def budget(spec: FormationSpec, n_stored: int, image_shape) -> dict:
    """Storage and decode accounting for a per-class budget."""
    c, h, w = (int(v) for v in image_shape)
    _check_divisibility(spec, (c, h, w))
    return {
        "n_stored": int(n_stored),
        "n_decoded": int(n_stored) * spec.decoded_per_stored(),
        "floats_stored": int(n_stored) * c * h * w,
    }


def post_downsample(images: np.ndarray, factor: int) -> np.ndarray:
    """Degrade decoded images by average-pooling factor x factor and
    bilinearly upsampling back to the original size (a lower bound for what
    block storage could have preserved)."""
    if factor < 1:
        raise FormationError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return np.asarray(images, dtype=np.float64).copy()
    x = np.asarray(images, dtype=np.float64)
    if x.ndim != 4:
        raise FormationError(f"post_downsample expects (n,C,H,W), got {x.shape}")
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise FormationError(
            f"post_downsample factor {factor} needs extents divisible by it, "
            f"got {h}x{w}")
    with T.no_grad():
        pooled = T.avg_pool2d(T.Tensor(x), factor)
        return T.bilinear_upsample(pooled, h, w).data
