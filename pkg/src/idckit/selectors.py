"""Coreset baselines: random selection and herding.

Both return flat index arrays into the dataset, class-major (all picks for
class 0 first). Herding greedily picks, per class, the element that keeps
the running mean of the selection closest to the class mean; ties resolve
to the lowest index. Features default to raw pixels.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .multiform import CondensedSet, FormationSpec


def _per_class(labels: np.ndarray, num_classes: int) -> list[np.ndarray]:
    labels = np.asarray(labels)
    return [np.flatnonzero(labels == c) for c in range(num_classes)]


def random_select(labels: np.ndarray, num_classes: int, per_class: int,
                  seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    picks = []
    for c, idx in enumerate(_per_class(labels, num_classes)):
        if idx.size < per_class:
            raise ValueError(
                f"class {c} has {idx.size} samples, needs >= {per_class}")
        picks.append(np.sort(rng.choice(idx, size=per_class, replace=False)))
    return np.concatenate(picks)


def herding_select(images: np.ndarray, labels: np.ndarray, num_classes: int,
                   per_class: int,
                   features: Callable[[np.ndarray], np.ndarray] | None = None
                   ) -> np.ndarray:
    """Greedy mean-matching selection.

    At step t for a class with mean mu and current selection sum r, pick the
    candidate x minimizing || mu - (r + x) / (t + 1) ||_2. Already-picked
    indices are excluded; ties go to the lowest dataset index.
    """
    feats = (features(images) if features is not None
             else images.reshape(images.shape[0], -1))
    feats = np.asarray(feats, dtype=np.float64)
    picks = []
    for c, idx in enumerate(_per_class(labels, num_classes)):
        if idx.size < per_class:
            raise ValueError(
                f"class {c} has {idx.size} samples, needs >= {per_class}")
        f = feats[idx]
        mu = f.mean(axis=0)
        chosen: list[int] = []
        running = np.zeros_like(mu)
        available = np.ones(idx.size, dtype=bool)
        for t in range(per_class):
            cand = (running[None, :] + f) / (t + 1.0)
            dist = np.linalg.norm(mu[None, :] - cand, axis=1)
            dist[~available] = np.inf
            pick = int(np.argmin(dist))  # argmin takes the first minimum
            chosen.append(pick)
            available[pick] = False
            running = running + f[pick]
        picks.append(idx[np.array(chosen)])
    return np.concatenate(picks)


def subset_as_condensed(images: np.ndarray, labels: np.ndarray,
                        indices: np.ndarray, num_classes: int,
                        per_class: int) -> CondensedSet:
    """Wrap a class-major selection as an identity-formation CondensedSet so
    selections and condensed sets share one evaluation path."""
    indices = np.asarray(indices)
    if indices.size != num_classes * per_class:
        raise ValueError(
            f"expected {num_classes * per_class} indices, got {indices.size}")
    imgs = np.asarray(images, dtype=np.float64)[indices]
    labs = np.asarray(labels)[indices]
    c, h, w = imgs.shape[1:]
    data = np.empty((num_classes, per_class, c, h, w), dtype=np.float64)
    for cls in range(num_classes):
        rows = np.flatnonzero(labs == cls)
        if rows.size != per_class:
            raise ValueError(
                f"selection is not class-major: class {cls} has {rows.size} "
                f"picks, expected {per_class}")
        data[cls] = imgs[rows]
    return CondensedSet(data, FormationSpec("identity", 1))
