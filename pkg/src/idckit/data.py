"""Dataset ingestion and synthetic data.

Images are kept as float64 (N, C, H, W) arrays; IDX-loaded pixel bytes are
scaled to [0, 1]. Synthetic blob images are built around exactly separated
class prototypes and may exceed [0, 1] slightly because the Gaussian noise
is not clipped.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataError(ValueError):
    """Problem with an input dataset file or request."""


class IdxMagicError(DataError):
    pass


class IdxTruncatedError(DataError):
    pass


class IdxCountMismatchError(DataError):
    pass


@dataclass
class Dataset:
    images: np.ndarray          # (N, C, H, W) float64
    labels: np.ndarray          # (N,) int64
    num_classes: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise DataError(
                f"images must be (N,C,H,W), got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DataError(
                f"{self.images.shape[0]} images but {self.labels.shape} labels")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.num_classes):
            raise DataError(
                f"labels outside [0, {self.num_classes}): "
                f"[{self.labels.min()}, {self.labels.max()}]")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def class_indices(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == c)
                for c in range(self.num_classes)]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.images[idx], self.labels[idx], self.num_classes)

    def restrict_per_class(self, per_class: int, seed: int = 0) -> "Dataset":
        """Keep at most per_class images of every class (deterministic)."""
        rng = np.random.default_rng(seed)
        keep = []
        for c, idx in enumerate(self.class_indices()):
            if idx.size < per_class:
                raise DataError(
                    f"class {c} has {idx.size} images, needs >= {per_class}")
            keep.append(np.sort(rng.choice(idx, per_class, replace=False)))
        return self.subset(np.concatenate(keep))


def _read_bytes(path: str | Path) -> bytes:
    p = Path(path)
    raw = p.read_bytes()
    if p.suffix == ".gz" or raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx_images(raw: bytes, path) -> np.ndarray:
    if len(raw) < 16:
        raise IdxTruncatedError(f"{path}: {len(raw)} bytes is too short for "
                                "an image file header")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise IdxMagicError(
            f"{path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    need = 16 + n * rows * cols
    if len(raw) < need:
        raise IdxTruncatedError(
            f"{path}: header promises {n} images of {rows}x{cols} "
            f"({need} bytes), file has {len(raw)}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols,
                           offset=16)
    return pixels.reshape(n, 1, rows, cols).astype(np.float64) / 255.0


def _parse_idx_labels(raw: bytes, path) -> np.ndarray:
    if len(raw) < 8:
        raise IdxTruncatedError(f"{path}: {len(raw)} bytes is too short for "
                                "a label file header")
    magic, n = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise IdxMagicError(
            f"{path}: magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if len(raw) < 8 + n:
        raise IdxTruncatedError(
            f"{path}: header promises {n} labels, file has {len(raw) - 8}")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8).astype(np.int64)


def load_idx(images_path: str | Path, labels_path: str | Path) -> Dataset:
    """Load the big-endian u8 image/label container format."""
    images = _parse_idx_images(_read_bytes(images_path), images_path)
    labels = _parse_idx_labels(_read_bytes(labels_path), labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(
            f"{images_path} has {images.shape[0]} images but {labels_path} "
            f"has {labels.shape[0]} labels")
    num_classes = int(labels.max()) + 1 if labels.size else 0
    return Dataset(images, labels, num_classes)


def write_idx(dataset: Dataset, images_path: str | Path,
              labels_path: str | Path) -> None:
    """Write a dataset back out in the container format (u8 pixels)."""
    n, c, h, w = dataset.images.shape
    if c != 1:
        raise DataError(f"container format stores single-channel images, "
                        f"got {c} channels")
    pixels = np.clip(np.round(dataset.images * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def make_blobs(num_classes: int, per_class: int, image_shape=(1, 16, 16),
               class_separation: float = 5.0, seed: int = 0,
               noise_sigma: float = 0.1) -> Dataset:
    """Gaussian blobs around class prototypes with exact pairwise prototype
    separation, shaped as images.

    Prototypes are 0.5 + (class_separation / sqrt(2)) * v_c with the v_c
    orthonormal, so every prototype pair is exactly class_separation apart.
    The v_c are spatially smooth (random low-resolution fields, bilinearly
    upsampled, then orthonormalized), so convolutional models see structure
    rather than white noise.
    """
    from ._kernels_np import bilinear_up

    c, h, w = image_shape
    d = c * h * w
    lh, lw = max(h // 4, 2), max(w // 4, 2)
    if num_classes > c * lh * lw:
        raise DataError(
            f"cannot place {num_classes} independent smooth prototypes in a "
            f"{c}x{lh}x{lw} low-resolution field")
    rng = np.random.default_rng(seed)
    coarse = rng.standard_normal((num_classes, c, lh, lw))
    smooth = bilinear_up(coarse, h, w).reshape(num_classes, d)
    q, _ = np.linalg.qr(smooth.T)
    protos = 0.5 + (class_separation / np.sqrt(2.0)) * q[:, :num_classes].T
    images = np.empty((num_classes * per_class, d), dtype=np.float64)
    labels = np.empty(num_classes * per_class, dtype=np.int64)
    for cls in range(num_classes):
        lo = cls * per_class
        images[lo:lo + per_class] = protos[cls] + rng.normal(
            0.0, noise_sigma, (per_class, d))
        labels[lo:lo + per_class] = cls
    return Dataset(images.reshape(-1, c, h, w), labels, num_classes)
