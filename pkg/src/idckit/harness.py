"""Training and analysis harnesses for condensed sets.

Evaluation trains fresh networks on the decoded set with crop + cutmix
augmentation, plain SGD, and a cosine learning-rate schedule that decays to
zero, then reports test accuracy over repetitions. The analysis helpers
produce the curves used to study why matching works: gradient-norm decay
along training paths, intra-class gradient coherence, and the achievable
matching loss as a function of the per-class budget.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import augment
from . import tensor as T
from .condense import CondenseConfig, run
from .data import Dataset
from .models import ConvNet, one_hot, sgd_step
from .multiform import CondensedSet, FormationSpec, decode_set
from .selectors import herding_select, random_select


@dataclass
class EvalReport:
    mean_accuracy: float
    std_accuracy: float
    accuracies: list[float]
    steps_per_rep: int
    seconds: float


def _cosine_lr(base: float, step: int, total: int) -> float:
    if total <= 0:
        return 0.0
    return base * 0.5 * (1.0 + np.cos(np.pi * step / total))


def _train_fresh_net(images: np.ndarray, labels: np.ndarray,
                     num_classes: int, total_steps: int, seed: int,
                     batch_size: int = 64, lr: float = 0.01,
                     depth: int = 3, width: int = 64,
                     with_cutmix: bool = True) -> ConvNet:
    """Train a fresh network for exactly total_steps optimizer steps with
    crop (+ optional cutmix) augmentation and cosine decay to zero."""
    rng = np.random.default_rng(seed)
    net = ConvNet(images.shape[1:], num_classes, depth=depth, width=width,
                  seed=int(rng.integers(2 ** 31)))
    n = images.shape[0]
    soft_all = one_hot(labels, num_classes)
    hw = images.shape[2], images.shape[3]
    crop_policy = augment.AugmentPolicy(use_color=False, use_cutout=False)
    step = 0
    while step < total_steps:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            if step >= total_steps:
                break
            take = order[start:start + batch_size]
            soft = soft_all[take]
            with T.Tape():
                x = T.Tensor(images[take])
                params = augment.sample_params(rng, hw, crop_policy)
                x = augment.apply(x, params)
                if with_cutmix:
                    x, soft, _ = augment.cutmix(x, soft, rng)
                loss = net.loss(x, soft)
                grads = T.grad(loss, net.params)
            net.params = sgd_step(net.params, grads,
                                  _cosine_lr(lr, step, total_steps))
            step += 1
    return net


def evaluate(s: CondensedSet, test: Dataset, epochs: int = 300,
             repetitions: int = 3, seed: int = 0, batch_size: int = 64,
             lr: float = 0.01, depth: int = 3, width: int = 64) -> EvalReport:
    """Train fresh networks on the decoded set and report test accuracy.

    Step accounting: ceil(n_decoded / batch_size) steps per epoch. With
    epochs=0 no training happens and the report reflects chance-level
    networks.
    """
    images, labels = decode_set(s)
    steps_per_epoch = int(np.ceil(images.shape[0] / batch_size))
    total_steps = epochs * steps_per_epoch
    return _evaluate_steps(images, labels, s.num_classes, test, total_steps,
                           repetitions, seed, batch_size, lr, depth, width)


def evaluate_fixed_steps(s: CondensedSet, test: Dataset, total_steps: int,
                         repetitions: int = 3, seed: int = 0,
                         batch_size: int = 64, lr: float = 0.01,
                         depth: int = 3, width: int = 64) -> EvalReport:
    """Like evaluate, but with the optimizer-step budget fixed directly so
    differently sized decoded sets get identical training budgets."""
    images, labels = decode_set(s)
    return _evaluate_steps(images, labels, s.num_classes, test, total_steps,
                           repetitions, seed, batch_size, lr, depth, width)


def _evaluate_steps(images, labels, num_classes, test: Dataset,
                    total_steps: int, repetitions: int, seed: int,
                    batch_size: int, lr: float, depth: int,
                    width: int) -> EvalReport:
    t0 = time.time()
    accs = []
    for rep in range(repetitions):
        net = _train_fresh_net(images, labels, num_classes, total_steps,
                               seed=seed * 1000 + rep, batch_size=batch_size,
                               lr=lr, depth=depth, width=width)
        accs.append(net.accuracy(test.images, test.labels))
    return EvalReport(float(np.mean(accs)), float(np.std(accs)),
                      [float(a) for a in accs], int(total_steps),
                      time.time() - t0)


# ---------------------------------------------------------------------------
# analysis

@dataclass
class GradNormPoint:
    step: int
    syn_norm: float
    real_norm: float


def grad_norm_curve(source: str, s: CondensedSet, real: Dataset,
                    steps: int = 500, seed: int = 0, batch_size: int = 64,
                    lr: float = 0.01, probe_size: int = 256,
                    depth: int = 3, width: int = 64,
                    record_every: int = 10) -> list[GradNormPoint]:
    """Track L1 norms of the network gradient on the decoded synthetic set
    and on a fixed real probe batch while a network trains on `source`
    (\"synthetic\" or \"real\").

    A gradient that collapses on the synthetic set but stays large on real
    data means training on the synthetic set has stalled while real signal
    remains: the motivation for matching gradients along real training paths.

    Training here is deliberately un-augmented plain SGD: the point is to
    measure how fast the source exhausts its own gradient signal, and
    augmentation would mask exactly that.
    """
    if source not in ("synthetic", "real"):
        raise ValueError(f"source must be synthetic or real, got {source!r}")
    rng = np.random.default_rng(seed)
    syn_images, syn_labels = decode_set(s)
    probe_idx = rng.choice(len(real), size=min(probe_size, len(real)),
                           replace=False)
    probe_images = real.images[probe_idx]
    probe_soft = one_hot(real.labels[probe_idx], real.num_classes)
    syn_soft = one_hot(syn_labels, s.num_classes)

    if source == "synthetic":
        train_images, train_labels = syn_images, syn_labels
    else:
        train_images, train_labels = real.images, real.labels
    train_soft_all = one_hot(train_labels, real.num_classes)

    net = ConvNet(real.image_shape, real.num_classes, depth=depth,
                  width=width, seed=int(rng.integers(2 ** 31)))

    def norms(step: int) -> GradNormPoint:
        with T.Tape():
            g_syn = T.grad(net.loss(T.Tensor(syn_images), syn_soft), net.params)
        with T.Tape():
            g_real = T.grad(net.loss(T.Tensor(probe_images), probe_soft),
                            net.params)
        return GradNormPoint(
            step,
            float(sum(np.abs(g.data).sum() for g in g_syn)),
            float(sum(np.abs(g.data).sum() for g in g_real)))

    points = [norms(0)]
    n = train_images.shape[0]
    step = 0
    while step < steps:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            if step >= steps:
                break
            take = order[start:start + batch_size]
            with T.Tape():
                loss = net.loss(T.Tensor(train_images[take]),
                                train_soft_all[take])
                grads = T.grad(loss, net.params)
            net.params = sgd_step(net.params, grads,
                                  _cosine_lr(lr, step, steps))
            step += 1
            if step % record_every == 0 or step == steps:
                points.append(norms(step))
    return points


@dataclass
class IntraClassStats:
    summed_norm: float          # L1 norm of the summed per-example gradient
    mean_pairwise_cosine: float
    count: int


def intra_class_grad_stats(net: ConvNet, images: np.ndarray,
                           class_id: int) -> IntraClassStats:
    """Per-example gradient coherence for one class batch (>= 2 images)."""
    k = images.shape[0]
    if k < 2:
        raise ValueError(f"need at least 2 images, got {k}")
    soft = one_hot(np.full(1, class_id), net.num_classes)
    flat = []
    for i in range(k):
        with T.Tape():
            grads = T.grad(net.loss(T.Tensor(images[i:i + 1]), soft),
                           net.params)
        flat.append(np.concatenate([g.data.reshape(-1) for g in grads]))
    g = np.stack(flat)                                  # (k, P)
    summed_norm = float(np.abs(g.sum(axis=0)).sum())
    norms = np.linalg.norm(g, axis=1)
    unit = g / np.maximum(norms, 1e-300)[:, None]
    cos = unit @ unit.T
    iu = np.triu_indices(k, 1)
    return IntraClassStats(summed_norm, float(cos[iu].mean()), k)


@dataclass
class SweepPoint:
    n_per_class: int
    factor: int
    final_distance: float


def loss_landscape_sweep(real: Dataset, counts: list[int],
                         factors: list[int], cfg: CondenseConfig,
                         mode: str = "uniform2d") -> list[SweepPoint]:
    """Run short condensations across per-class budgets and formation
    factors; the final distance is the mean matching distance over the last
    inner iteration. Larger budgets should reach lower distances."""
    points = []
    for n in counts:
        for f in factors:
            spec = (FormationSpec("identity", 1) if f == 1
                    else FormationSpec(mode, f))
            _, records = run(real.images, real.labels, real.num_classes,
                             n, spec, cfg)
            last_inner = max(r.inner for r in records)
            last_outer = max(r.outer for r in records)
            final = [r.distance for r in records
                     if r.inner == last_inner and r.outer == last_outer]
            points.append(SweepPoint(n, f, float(np.mean(final))))
    return points


# ---------------------------------------------------------------------------
# class-incremental continual learning

@dataclass
class StageResult:
    stage: int
    classes_seen: int
    memory_images: int
    accuracy: float


def continual_run(train: Dataset, test: Dataset, stages: int,
                  memory_per_class: int, method: str,
                  cfg: CondenseConfig | None = None,
                  formation: FormationSpec | None = None,
                  seed: int = 0, eval_epochs: int = 100,
                  eval_batch: int = 64, eval_lr: float = 0.01
                  ) -> list[StageResult]:
    """Memory-only class-incremental learning: classes arrive in label order
    over `stages` equal groups; after each arrival a per-class memory is
    built (random / herding / idc) and a fresh network is trained on the
    union of all memories, then tested on every class seen so far.
    """
    if method not in ("random", "herding", "idc"):
        raise ValueError(f"method must be random, herding, or idc, got {method!r}")
    if train.num_classes % stages:
        raise ValueError(
            f"{train.num_classes} classes do not split into {stages} stages")
    cfg = cfg or CondenseConfig()
    formation = formation or FormationSpec("uniform2d", 2)
    group = train.num_classes // stages
    rng = np.random.default_rng(seed)

    memory_images: list[np.ndarray] = []
    memory_labels: list[np.ndarray] = []
    results = []
    for stage in range(stages):
        new_classes = list(range(stage * group, (stage + 1) * group))
        mask = np.isin(train.labels, new_classes)
        stage_images = train.images[mask]
        stage_labels_local = train.labels[mask] - stage * group

        if method == "random":
            idx = random_select(stage_labels_local, group, memory_per_class,
                                seed=int(rng.integers(2 ** 31)))
            mem = stage_images[idx]
            mem_lab = stage_labels_local[idx] + stage * group
        elif method == "herding":
            idx = herding_select(stage_images, stage_labels_local, group,
                                 memory_per_class)
            mem = stage_images[idx]
            mem_lab = stage_labels_local[idx] + stage * group
        else:
            stage_cfg = CondenseConfig(
                **{**cfg.__dict__, "seed": int(rng.integers(2 ** 31))})
            s, _ = run(stage_images, stage_labels_local, group,
                       memory_per_class, formation, stage_cfg)
            mem, mem_lab_local = decode_set(s)
            mem_lab = mem_lab_local + stage * group

        memory_images.append(mem)
        memory_labels.append(np.asarray(mem_lab))

        seen = (stage + 1) * group
        all_images = np.concatenate(memory_images)
        all_labels = np.concatenate(memory_labels)
        steps = eval_epochs * int(np.ceil(all_images.shape[0] / eval_batch))
        net = _train_fresh_net(all_images, all_labels, seen, steps,
                               seed=int(rng.integers(2 ** 31)),
                               batch_size=eval_batch, lr=eval_lr,
                               depth=cfg.depth, width=cfg.width)
        test_mask = test.labels < seen
        acc = net.accuracy(test.images[test_mask], test.labels[test_mask])
        results.append(StageResult(stage, seen, int(all_images.shape[0]),
                                   float(acc)))
    return results
