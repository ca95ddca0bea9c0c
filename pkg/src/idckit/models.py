"""Convolutional classifier used for condensation and evaluation.

Depth D means D blocks of [3x3 same conv -> instance norm -> relu -> 2x2
average pool], followed by global average pooling and a linear head.
Weights and biases are drawn from uniform(-b, b) with b = sqrt(1 / fan_in).
"""

from __future__ import annotations

import numpy as np

from . import tensor as T


class ConvNet:
    def __init__(self, in_shape, num_classes: int, depth: int = 3,
                 width: int = 64, seed: int = 0):
        c, h, w = (int(v) for v in in_shape)
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        if min(h, w) < 2 ** depth:
            raise ValueError(
                f"input {h}x{w} too small for depth {depth}; needs extents "
                f">= {2 ** depth}")
        if num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {num_classes}")
        self.in_shape = (c, h, w)
        self.num_classes = int(num_classes)
        self.depth = int(depth)
        self.width = int(width)
        self.seed = int(seed)
        self.params: list[T.Tensor] = []
        self.param_names: list[str] = []
        self._build(seed)

    def _build(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        self.params = []
        self.param_names = []
        cin = self.in_shape[0]
        for d in range(self.depth):
            self._add_param(f"conv{d + 1}_w", rng,
                            (self.width, cin, 3, 3), fan_in=cin * 9)
            self._add_param(f"conv{d + 1}_b", rng,
                            (self.width,), fan_in=cin * 9)
            cin = self.width
        self._add_param("fc_w", rng, (self.num_classes, self.width),
                        fan_in=self.width)
        self._add_param("fc_b", rng, (self.num_classes,), fan_in=self.width)

    def _add_param(self, name: str, rng: np.random.Generator,
                   shape, fan_in: int) -> None:
        bound = float(np.sqrt(1.0 / fan_in))
        data = rng.uniform(-bound, bound, size=shape)
        self.params.append(T.Tensor(data, requires_grad=True))
        self.param_names.append(name)

    def reinit(self, seed: int) -> None:
        """Replace all parameters with a fresh draw."""
        self.seed = int(seed)
        self._build(seed)

    def parameters(self) -> list[T.Tensor]:
        return self.params

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params))

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.params]

    def load_state(self, arrays) -> None:
        if len(arrays) != len(self.params):
            raise ValueError(
                f"state has {len(arrays)} tensors, model has {len(self.params)}")
        fresh = []
        for p, a in zip(self.params, arrays):
            if p.data.shape != a.shape:
                raise ValueError(
                    f"state shape {a.shape} does not match {p.data.shape}")
            fresh.append(T.Tensor(np.asarray(a, dtype=np.float64).copy(),
                                  requires_grad=True))
        self.params = fresh

    def _check_input(self, x) -> None:
        if x.shape[1:] != self.in_shape:
            raise T.ShapeError(
                f"ConvNet: input images {tuple(x.shape[1:])} do not match "
                f"model shape {self.in_shape}")

    def features(self, x: T.Tensor) -> T.Tensor:
        """Penultimate representation: (N, width) after global pooling."""
        self._check_input(x)
        h = x
        for d in range(self.depth):
            w, b = self.params[2 * d], self.params[2 * d + 1]
            h = T.conv2d(h, w, b)
            h = T.instance_norm(h)
            h = T.relu(h)
            h = T.avg_pool2d(h, 2)
        return T.global_avg_pool(h)

    def forward(self, x: T.Tensor) -> T.Tensor:
        feats = self.features(x)
        return T.linear(feats, self.params[-2], self.params[-1])

    def loss(self, x: T.Tensor, labels: np.ndarray) -> T.Tensor:
        """Mean soft cross-entropy; labels are (N, num_classes) rows
        summing to one."""
        return T.cross_entropy_soft(self.forward(x), labels)

    def network_gradient(self, x: T.Tensor, labels: np.ndarray,
                         create_graph: bool = False) -> list[T.Tensor]:
        """Per-parameter gradient of the classification loss. Must run under
        an active tape; with create_graph=True the result can be
        differentiated further (e.g. with respect to the input pixels)."""
        loss = self.loss(x, labels)
        return T.grad(loss, self.params, create_graph=create_graph)

    def predict(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Argmax class predictions for raw image arrays."""
        out = np.empty(images.shape[0], dtype=np.int64)
        with T.no_grad():
            for start in range(0, images.shape[0], batch_size):
                chunk = images[start:start + batch_size]
                logits = self.forward(T.Tensor(chunk))
                out[start:start + chunk.shape[0]] = np.argmax(logits.data, axis=1)
        return out

    def accuracy(self, images: np.ndarray, labels: np.ndarray,
                 batch_size: int = 256) -> float:
        pred = self.predict(images, batch_size=batch_size)
        return float(np.mean(pred == np.asarray(labels)))


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(
            f"labels out of range [0, {num_classes}): "
            f"[{labels.min()}, {labels.max()}]")
    out = np.zeros((labels.shape[0], num_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def sgd_step(params: list[T.Tensor], grads: list[T.Tensor], lr: float) -> list[T.Tensor]:
    """Plain SGD; returns fresh leaf tensors (the caller swaps them in)."""
    return [T.Tensor(p.data - lr * g.data, requires_grad=True)
            for p, g in zip(params, grads)]
