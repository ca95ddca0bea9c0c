"""Gradient-matching condensation.

The loop alternates two updates, class by class:
  1. synthetic update: decode the stored images of one class, push them and
     a real batch of the same class through the current network under a
     shared augmentation, and step the stored pixels down the gradient of a
     distance between the two network gradients;
  2. network update: one SGD step on (augmented) training data so the
     matching happens along a realistic optimization path.

The synthetic update differentiates through the network-gradient
computation, which is why the tensor engine supports double backward.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import augment
from . import tensor as T
from .models import ConvNet, one_hot, sgd_step
from .multiform import CondensedSet, FormationSpec, decode_set, form

OBJECTIVES = ("l1", "mse", "cosine", "feature_mse")


@dataclass
class CondenseConfig:
    data_lr: float = 0.005
    net_lr: float = 0.01
    inner_iters: int = 100
    outer_loops: int = 10
    reinit_period: int = 1
    batch_real: int = 64
    batch_syn: int | None = None       # None = all stored images of the class
    objective: str = "l1"
    regularization: str = "strong"     # strong: color+crop+cutmix; basic: crop
    net_source: str = "real"           # what the network trains on
    pretrain_epochs: int = 0
    depth: int = 3
    width: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(
                f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.regularization not in ("strong", "basic"):
            raise ValueError(
                f"regularization must be strong or basic, "
                f"got {self.regularization!r}")
        if self.net_source not in ("real", "synthetic"):
            raise ValueError(
                f"net_source must be real or synthetic, got {self.net_source!r}")


@dataclass
class IterationRecord:
    outer: int
    inner: int
    class_id: int
    distance: float


def matching_distance(grads_a: list[T.Tensor], grads_b: list[T.Tensor],
                      objective: str = "l1") -> T.Tensor:
    """Distance between two per-parameter gradient lists, summed over
    parameter tensors.

    l1 and mse are elementwise. cosine sums (1 - cosine similarity) over
    output-channel rows: each parameter tensor is viewed as (rows, rest)
    with axis 0 the output-channel axis.
    """
    if len(grads_a) != len(grads_b):
        raise T.ShapeError(
            f"matching_distance: {len(grads_a)} vs {len(grads_b)} tensors")
    if objective == "feature_mse":
        raise ValueError(
            "feature_mse is a feature-space objective; use dm_match")
    total: T.Tensor | None = None
    for ga, gb in zip(grads_a, grads_b):
        if ga.shape != gb.shape:
            raise T.ShapeError(
                f"matching_distance: shapes {ga.shape} vs {gb.shape}")
        if objective == "l1":
            term = T.tsum(T.tabs(T.sub(ga, gb)))
        elif objective == "mse":
            diff = T.sub(ga, gb)
            term = T.tsum(T.mul(diff, diff))
        elif objective == "cosine":
            rows = ga.shape[0] if ga.ndim > 0 else 1
            a2 = T.reshape(ga, (rows, -1)) if ga.ndim != 2 else ga
            b2 = T.reshape(gb, (rows, -1)) if gb.ndim != 2 else gb
            dots = T.tsum(T.mul(a2, b2), axis=1)
            na = T.pow_const(T.tsum(T.mul(a2, a2), axis=1), 0.5)
            nb = T.pow_const(T.tsum(T.mul(b2, b2), axis=1), 0.5)
            cos = T.mul(dots, T.pow_const(T.add_const(T.mul(na, nb), 1e-12), -1.0))
            term = T.add_const(T.scale(T.tsum(cos), -1.0), float(rows))
        else:
            raise ValueError(f"unknown objective {objective!r}")
        total = term if total is None else T.add(total, term)
    assert total is not None
    return total


def _class_indices(labels: np.ndarray, num_classes: int) -> list[np.ndarray]:
    labels = np.asarray(labels)
    return [np.flatnonzero(labels == c) for c in range(num_classes)]


def _augment_pair(syn: T.Tensor, real: T.Tensor, rng: np.random.Generator,
                  image_hw: tuple[int, int]) -> tuple[T.Tensor, T.Tensor]:
    """Shared-transform augmentation for the matching pair: color, crop,
    cutout with identical parameters on both batches."""
    params = augment.sample_params(rng, image_hw)
    return augment.apply(syn, params), augment.apply(real, params)


def condense_step(s: CondensedSet, class_id: int, net: ConvNet,
                  real_images: np.ndarray, cfg: CondenseConfig,
                  rng: np.random.Generator) -> float:
    """One synthetic-pixel update for one class; mutates s in place and
    returns the matching distance before the step."""
    if not 0 <= class_id < s.num_classes:
        raise ValueError(f"class_id {class_id} outside [0, {s.num_classes})")
    if cfg.objective == "feature_mse":
        return dm_match(s, class_id, net, real_images, cfg, rng)

    labels_real = one_hot(np.full(real_images.shape[0], class_id),
                          net.num_classes)
    params = augment.sample_params(rng, s.image_shape[1:])

    # the real-side gradient is a constant target; compute it on its own tape
    with T.Tape():
        real_aug = augment.apply(T.Tensor(real_images), params)
        g_real = net.network_gradient(real_aug, labels_real)
    g_real = [g.detach() for g in g_real]

    stored = T.Tensor(s.data[class_id].copy(), requires_grad=True)
    with T.Tape():
        active = stored
        if cfg.batch_syn is not None and cfg.batch_syn < s.n_per_class:
            sub = rng.choice(s.n_per_class, size=cfg.batch_syn, replace=False)
            active = T.gather_rows(stored, sub)
        decoded = form(active, s.spec)
        labels_syn = one_hot(np.full(decoded.shape[0], class_id),
                             net.num_classes)
        syn_aug = augment.apply(decoded, params)
        g_syn = net.network_gradient(syn_aug, labels_syn, create_graph=True)
        dist = matching_distance(g_syn, g_real, cfg.objective)
        (g_pixels,) = T.grad(dist, [stored])

    s.data[class_id] = stored.data - cfg.data_lr * g_pixels.data
    return float(dist.data)


def dm_match(s: CondensedSet, class_id: int, net: ConvNet,
             real_images: np.ndarray, cfg: CondenseConfig,
             rng: np.random.Generator) -> float:
    """Feature-matching update: move the stored pixels to align the mean
    penultimate feature of the decoded class with the real class mean,
    under a randomly initialized (untrained) network."""
    params = augment.sample_params(rng, s.image_shape[1:])
    with T.Tape():
        real_aug = augment.apply(T.Tensor(real_images), params)
        feat_real = T.tmean(net.features(real_aug), axis=0)
    feat_real = feat_real.detach()

    stored = T.Tensor(s.data[class_id].copy(), requires_grad=True)
    with T.Tape():
        decoded = form(stored, s.spec)
        syn_aug = augment.apply(decoded, params)
        feat_syn = T.tmean(net.features(syn_aug), axis=0)
        diff = T.sub(feat_syn, feat_real)
        dist = T.tsum(T.mul(diff, diff))
        (g_pixels,) = T.grad(dist, [stored])

    s.data[class_id] = stored.data - cfg.data_lr * g_pixels.data
    return float(dist.data)


def network_step(net: ConvNet, images: np.ndarray, labels: np.ndarray,
                 cfg: CondenseConfig, rng: np.random.Generator) -> float:
    """One SGD step of the network on an augmented batch; returns the loss.
    With net_lr == 0 the parameters are left untouched and no work is done."""
    if cfg.net_lr == 0.0:
        return float("nan")
    soft = one_hot(labels, net.num_classes)
    hw = images.shape[2], images.shape[3]
    with T.Tape():
        x = T.Tensor(images)
        if cfg.regularization == "strong":
            params = augment.sample_params(rng, hw)
            x = augment.apply(x, params)
            x, soft, _ = augment.cutmix(x, soft, rng)
        else:
            params = augment.sample_params(
                rng, hw, augment.AugmentPolicy(use_color=False, use_cutout=False))
            x = augment.apply(x, params)
        loss = net.loss(x, soft)
        grads = T.grad(loss, net.params)
    net.params = sgd_step(net.params, grads, cfg.net_lr)
    return float(loss.data)


def _pool_into(block: np.ndarray, th: int, tw: int) -> np.ndarray:
    """Average-pool an image down to (th, tw); extents must divide."""
    c, h, w = block.shape
    return block.reshape(c, th, h // th, tw, w // tw).mean(axis=(2, 4))


def init_condensed(real_images: np.ndarray, real_labels: np.ndarray,
                   num_classes: int, n_per_class: int, spec: FormationSpec,
                   init: str, rng: np.random.Generator) -> CondensedSet:
    """Starting point for the stored set.

    random_real initializes in decoded space: every decoded piece starts as
    (a downsampled copy of) a freshly drawn real image of the class, so for
    block formations each stored image begins as a mosaic of pooled real
    samples. noise draws stored pixels uniformly from [0, 1).
    """
    c, h, w = real_images.shape[1:]
    data = np.empty((num_classes, n_per_class, c, h, w), dtype=np.float64)
    if init == "noise":
        data[:] = rng.uniform(0.0, 1.0, size=data.shape)
    elif init == "random_real":
        f = spec.factor
        idx_by_class = _class_indices(real_labels, num_classes)
        for cls in range(num_classes):
            idx = idx_by_class[cls]
            if idx.size < n_per_class:
                raise ValueError(
                    f"class {cls} has {idx.size} real images, needs "
                    f">= {n_per_class} for random_real init")
            if spec.mode == "identity":
                take = rng.choice(idx, size=n_per_class, replace=False)
                data[cls] = real_images[take]
                continue
            # one real image per decoded piece, without replacement when
            # the class is large enough
            need = n_per_class * (f * f if spec.mode != "uniform1d" else f)
            take = rng.choice(idx, size=need, replace=idx.size < need)
            pick = iter(real_images[take])
            for i in range(n_per_class):
                if spec.mode == "uniform1d":
                    bw = w // f
                    for bj in range(f):
                        data[cls, i, :, :, bj * bw:(bj + 1) * bw] = \
                            _pool_into(next(pick), h, bw)
                else:
                    bh, bw = h // f, w // f
                    for bi in range(f):
                        for bj in range(f):
                            data[cls, i, :, bi * bh:(bi + 1) * bh,
                                 bj * bw:(bj + 1) * bw] = \
                                _pool_into(next(pick), bh, bw)
    else:
        raise ValueError(f"init must be random_real or noise, got {init!r}")
    return CondensedSet(data, spec)


def pretrain(net: ConvNet, images: np.ndarray, labels: np.ndarray,
             epochs: int, cfg: CondenseConfig, rng: np.random.Generator) -> None:
    """Warm-start training on real data with the strong recipe."""
    n = images.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_real):
            take = order[start:start + cfg.batch_real]
            network_step(net, images[take], labels[take], cfg, rng)


def run(real_images: np.ndarray, real_labels: np.ndarray, num_classes: int,
        n_per_class: int, spec: FormationSpec, cfg: CondenseConfig,
        init: str = "random_real", log_path: str | None = None,
        progress: Callable[[IterationRecord], None] | None = None
        ) -> tuple[CondensedSet, list[IterationRecord]]:
    """Full condensation: outer loops over network (re)initializations, inner
    iterations of per-class synthetic updates followed by one network step.

    With objective=feature_mse the class update matches mean features and the
    intended recipe is net_lr=0 with reinit_period=1 (a fresh random network
    per outer loop, never trained).
    """
    real_images = np.asarray(real_images, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    s = init_condensed(real_images, real_labels, num_classes, n_per_class,
                       spec, init, rng)
    idx_by_class = _class_indices(real_labels, num_classes)
    for cls, idx in enumerate(idx_by_class):
        if idx.size == 0:
            raise ValueError(f"class {cls} has no real images")

    net = ConvNet(real_images.shape[1:], num_classes, depth=cfg.depth,
                  width=cfg.width, seed=int(rng.integers(2 ** 31)))
    records: list[IterationRecord] = []
    log_file = open(log_path, "w", newline="") if log_path else None
    writer = None
    if log_file is not None:
        writer = csv.writer(log_file)
        writer.writerow(["outer", "inner", "class", "distance"])
    try:
        for outer in range(cfg.outer_loops):
            if outer % max(cfg.reinit_period, 1) == 0:
                net.reinit(int(rng.integers(2 ** 31)))
                if cfg.pretrain_epochs > 0:
                    pretrain(net, real_images, real_labels,
                             cfg.pretrain_epochs, cfg, rng)
            for inner in range(cfg.inner_iters):
                for cls in range(num_classes):
                    idx = idx_by_class[cls]
                    take = rng.choice(idx, size=min(cfg.batch_real, idx.size),
                                      replace=False)
                    d = condense_step(s, cls, net, real_images[take], cfg, rng)
                    rec = IterationRecord(outer, inner, cls, d)
                    records.append(rec)
                    if writer is not None:
                        writer.writerow([outer, inner, cls, f"{d:.8g}"])
                    if progress is not None:
                        progress(rec)
                if cfg.net_lr != 0.0:
                    if cfg.net_source == "real":
                        take = rng.choice(real_images.shape[0],
                                          size=min(cfg.batch_real,
                                                   real_images.shape[0]),
                                          replace=False)
                        network_step(net, real_images[take],
                                     np.asarray(real_labels)[take], cfg, rng)
                    else:
                        imgs, labs = decode_set(s)
                        take = rng.choice(imgs.shape[0],
                                          size=min(cfg.batch_real, imgs.shape[0]),
                                          replace=False)
                        network_step(net, imgs[take], labs[take], cfg, rng)
    finally:
        if log_file is not None:
            log_file.close()
    return s, records
