"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or configuration error,
3 self-check violation.
"""

from __future__ import annotations

import argparse
import csv
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import harness, theory
from .condense import CondenseConfig, run
from .data import DataError, Dataset, load_idx, make_blobs
from .multiform import CondensedSet, FormationError, FormationSpec, budget
from .selectors import herding_select, random_select, subset_as_condensed
from .serial import (ConfigError, FileFormatError, RunConfig, load_condensed,
                     load_run_config, parse_run_config, save_condensed)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECK = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):          # usage problems exit 1, not 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_train(args) -> Dataset:
    return load_idx(args.train_images, args.train_labels)


def _load_test(args) -> Dataset:
    return load_idx(args.test_images, args.test_labels)


def _config_from_args(args) -> RunConfig:
    cfg = load_run_config(getattr(args, "config", None))
    for item in getattr(args, "set", None) or []:
        cfg = _apply_override(cfg, item)
    return cfg


def _apply_override(cfg: RunConfig, item: str) -> RunConfig:
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    # reuse the file parser so types and key validation stay in one place
    merged = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
    key, _, value = item.partition("=")
    probe = parse_run_config(f"{key.strip()} = {value.strip()}")
    merged[key.strip()] = getattr(probe, key.strip())
    return RunConfig(**merged)


def _condense_config(cfg: RunConfig) -> CondenseConfig:
    return CondenseConfig(
        data_lr=cfg.data_lr, net_lr=cfg.net_lr, inner_iters=cfg.inner_iters,
        outer_loops=cfg.outer_loops, reinit_period=cfg.reinit_period,
        batch_real=cfg.batch_real,
        batch_syn=cfg.batch_syn if cfg.batch_syn > 0 else None,
        objective=cfg.objective, regularization=cfg.regularization,
        net_source=cfg.net_source, pretrain_epochs=cfg.pretrain_epochs,
        depth=cfg.depth, width=cfg.width, seed=cfg.seed)


def _cmd_condense(args) -> int:
    cfg = _config_from_args(args)
    train = _load_train(args)
    if cfg.train_per_class > 0:
        train = train.restrict_per_class(cfg.train_per_class, seed=cfg.seed)
    spec = FormationSpec(cfg.mode, cfg.factor)
    s, records = run(train.images, train.labels, train.num_classes,
                     cfg.n_per_class, spec, _condense_config(cfg),
                     init=cfg.init, log_path=args.log)
    save_condensed(args.out, s)
    b = budget(spec, cfg.n_per_class, train.image_shape)
    print(f"wrote {args.out}: {train.num_classes} classes x "
          f"{cfg.n_per_class} stored ({b['n_decoded']} decoded/class), "
          f"final distance {records[-1].distance:.6g}")
    return EXIT_OK


def _cmd_select(args) -> int:
    train = _load_train(args)
    if args.method == "random":
        idx = random_select(train.labels, train.num_classes, args.per_class,
                            seed=args.seed)
    else:
        idx = herding_select(train.images, train.labels, train.num_classes,
                             args.per_class)
    s = subset_as_condensed(train.images, train.labels, idx,
                            train.num_classes, args.per_class)
    save_condensed(args.out, s)
    print(f"wrote {args.out}: {args.method} selection, "
          f"{args.per_class}/class from {len(train)} images")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    s = load_condensed(args.condensed)
    test = _load_test(args)
    report = harness.evaluate(s, test, epochs=args.epochs,
                              repetitions=args.reps, seed=args.seed,
                              batch_size=args.batch, lr=args.lr,
                              depth=args.depth, width=args.width)
    print(f"accuracy {report.mean_accuracy:.4f} +- {report.std_accuracy:.4f} "
          f"({args.reps} reps, {report.steps_per_rep} steps/rep, "
          f"{report.seconds:.1f}s)")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    if args.what == "gradnorm":
        if not args.condensed:
            raise ConfigError("analyze --what gradnorm needs --condensed")
        s = load_condensed(args.condensed)
        real = _load_train(args)
        rows = [("step", "syn_norm", "real_norm")]
        for p in harness.grad_norm_curve(args.source, s, real,
                                         steps=args.steps, seed=args.seed):
            rows.append((p.step, f"{p.syn_norm:.8g}", f"{p.real_norm:.8g}"))
    elif args.what == "landscape":
        real = _load_train(args)
        cfg = _config_from_args(args)
        counts = [int(v) for v in args.counts.split(",")]
        factors = [int(v) for v in args.factors.split(",")]
        points = harness.loss_landscape_sweep(real, counts, factors,
                                              _condense_config(cfg),
                                              mode=cfg.mode)
        rows = [("n_per_class", "factor", "final_distance")]
        for p in points:
            rows.append((p.n_per_class, p.factor, f"{p.final_distance:.8g}"))
    else:  # intraclass
        real = _load_train(args)
        from .models import ConvNet
        net = ConvNet(real.image_shape, real.num_classes, seed=args.seed)
        idx = np.flatnonzero(real.labels == args.class_id)[:args.count]
        if idx.size < 2:
            raise DataError(
                f"class {args.class_id} has {idx.size} images, need >= 2")
        st = harness.intra_class_grad_stats(net, real.images[idx],
                                            args.class_id)
        rows = [("summed_norm", "mean_pairwise_cosine", "count"),
                (f"{st.summed_norm:.8g}", f"{st.mean_pairwise_cosine:.8g}",
                 st.count)]
    _write_rows(args.out, rows)
    return EXIT_OK


def _write_rows(out: str | None, rows) -> None:
    if out:
        with open(out, "w", newline="") as f:
            csv.writer(f).writerows(rows)
        print(f"wrote {out} ({len(rows) - 1} rows)")
    else:
        w = csv.writer(sys.stdout)
        w.writerows(rows)


def _cmd_continual(args) -> int:
    cfg = _config_from_args(args)
    train = _load_train(args)
    test = _load_test(args)
    results = harness.continual_run(
        train, test, stages=args.stages, memory_per_class=args.memory,
        method=args.method, cfg=_condense_config(cfg),
        formation=FormationSpec(cfg.mode, cfg.factor), seed=cfg.seed,
        eval_epochs=cfg.eval_epochs, eval_batch=cfg.eval_batch,
        eval_lr=cfg.eval_lr)
    rows = [("stage", "classes_seen", "memory_images", "accuracy")]
    for r in results:
        rows.append((r.stage, r.classes_seen, r.memory_images,
                     f"{r.accuracy:.4f}"))
    _write_rows(args.out, rows)
    return EXIT_OK


def _cmd_check(args) -> int:
    """Cheap end-to-end self-check of the invariants the toolkit relies on."""
    from . import _kernels_np, backend
    from .tensor import grad_check, Tensor, Tape, grad
    from . import tensor as T

    failures: list[str] = []
    rng = np.random.default_rng(0)

    def check(name: str, ok: bool, detail: str = "") -> None:
        line = f"{'ok  ' if ok else 'FAIL'} {name}"
        if detail:
            line += f" ({detail})"
        print(line)
        if not ok:
            failures.append(name)

    # kernel backends agree
    x = rng.standard_normal((2, 3, 9, 7))
    ca = backend.im2col(x, 3, 3, 1, 1)
    cb = _kernels_np.im2col(x, 3, 3, 1, 1)
    check("kernel-parity", bool(np.allclose(ca, cb, atol=1e-12)),
          f"backend={backend.backend_name()}")

    # autodiff against finite differences, through the full block stack
    def f(img, w, b):
        h = T.avg_pool2d(T.relu(T.instance_norm(T.conv2d(img, w, b))), 2)
        return T.tsum(T.mul(h, h))

    rep = grad_check(f, [rng.standard_normal((2, 1, 6, 6)) * 0.5,
                         rng.standard_normal((3, 1, 3, 3)) * 0.4,
                         rng.standard_normal(3) * 0.1], eps=1e-6, tol=1e-4)
    check("autodiff-fd", rep.passed, f"max_rel={rep.max_rel_err:.2e}")

    # gradient-of-gradient
    w0 = rng.standard_normal((3, 1, 3, 3)) * 0.4

    def gg(img):
        w = Tensor(w0, requires_grad=True)
        h = T.relu(T.conv2d(img, w))
        (gw,) = grad(T.tsum(T.mul(h, h)), [w], create_graph=True)
        return T.tsum(T.mul(gw, gw))

    rep2 = grad_check(gg, [rng.standard_normal((1, 1, 5, 5)) * 0.5],
                      eps=1e-5, tol=1e-3)
    check("double-backward-fd", rep2.passed, f"max_rel={rep2.max_rel_err:.2e}")

    # patch identity for conv weight gradients
    worst = 0.0
    for _ in range(20):
        k = int(rng.integers(1, 8))
        wl = int(rng.integers(k, 24))
        pr = theory.patch_gradient_check(k, wl, seed=int(rng.integers(2**31)))
        worst = max(worst, pr.max_abs_diff)
        if pr.n_outputs != wl - k + 1:
            worst = np.inf
    check("patch-gradient", worst < 1e-10, f"max_abs={worst:.2e}")

    # distance axioms
    ax = theory.check_axioms(trials=500, seed=1)
    check("distance-axioms", ax.ok, f"violations={sum(ax.violations.values())}")

    # formation counting laws and budget invariance
    laws_ok = True
    shape = (1, 8, 8)
    for mode, factor, mult in (("identity", 1, 1), ("uniform2d", 2, 4),
                               ("multiscale2d", 2, 5), ("uniform1d", 2, 2)):
        b = budget(FormationSpec(mode, factor), 6, shape)
        laws_ok &= b["n_decoded"] == 6 * mult
        laws_ok &= b["floats_stored"] == 6 * 64
    check("formation-laws", bool(laws_ok))

    # formation gain on one toy instance
    tg = theory.toy_targets(4, np.random.default_rng(5))
    g = theory.formation_gain_check(tg, 2, seed=0, starts=10, steps=800)
    check("formation-gain", g.gap >= -1e-6,
          f"direct={g.min_direct:.4f} formed={g.min_formed:.4f}")

    # file format round trip
    with tempfile.TemporaryDirectory() as td:
        path = Path(td) / "probe.idc"
        s = CondensedSet(rng.random((3, 2, 1, 8, 8)),
                         FormationSpec("uniform2d", 2))
        save_condensed(path, s)
        s2 = load_condensed(path)
        same = (s2.spec == s.spec
                and np.allclose(s2.data, s.data, atol=1e-6))
        # single-precision payload: round-tripping again must be exact
        save_condensed(path, s2)
        s3 = load_condensed(path)
        check("condensed-roundtrip",
              bool(same and np.array_equal(s3.data, s2.data)))

    # synthetic blobs separability (nearest-prototype accuracy)
    ds = make_blobs(3, 30, (1, 8, 8), class_separation=5.0, seed=2)
    flat = ds.images.reshape(len(ds), -1)
    protos = np.stack([flat[ds.labels == c].mean(0) for c in range(3)])
    pred = np.argmin(
        ((flat[:, None, :] - protos[None]) ** 2).sum(-1), axis=1)
    check("blobs-separable", float((pred == ds.labels).mean()) >= 0.99)

    if failures:
        print(f"self-check failed: {', '.join(failures)}")
        return EXIT_CHECK
    print("all checks passed")
    return EXIT_OK


def _build_parser() -> _Parser:
    p = _Parser(prog="idckit",
                description="dataset condensation with multi-formation storage")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_train(sp):
        sp.add_argument("--train-images", required=True)
        sp.add_argument("--train-labels", required=True)

    def add_test(sp):
        sp.add_argument("--test-images", required=True)
        sp.add_argument("--test-labels", required=True)

    def add_cfg(sp):
        sp.add_argument("--config", help="key=value configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one configuration key")

    sp = sub.add_parser("condense", help="optimize a condensed set")
    add_train(sp)
    add_cfg(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--log", help="CSV iteration log")
    sp.set_defaults(func=_cmd_condense)

    sp = sub.add_parser("select", help="coreset selection baselines")
    add_train(sp)
    sp.add_argument("--method", choices=("random", "herding"), required=True)
    sp.add_argument("--per-class", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_select)

    sp = sub.add_parser("evaluate", help="train fresh nets on a condensed set")
    sp.add_argument("--condensed", required=True)
    add_test(sp)
    sp.add_argument("--epochs", type=int, default=300)
    sp.add_argument("--reps", type=int, default=3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--batch", type=int, default=64)
    sp.add_argument("--lr", type=float, default=0.01)
    sp.add_argument("--depth", type=int, default=3)
    sp.add_argument("--width", type=int, default=64)
    sp.set_defaults(func=_cmd_evaluate)

    sp = sub.add_parser("analyze", help="gradient and loss diagnostics")
    sp.add_argument("--what", choices=("gradnorm", "landscape", "intraclass"),
                    required=True)
    add_train(sp)
    add_cfg(sp)
    sp.add_argument("--condensed")
    sp.add_argument("--source", choices=("synthetic", "real"),
                    default="synthetic")
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--counts", default="1,10,50")
    sp.add_argument("--factors", default="1")
    sp.add_argument("--class-id", type=int, default=0)
    sp.add_argument("--count", type=int, default=32)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="CSV output path (default stdout)")
    sp.set_defaults(func=_cmd_analyze)

    sp = sub.add_parser("continual", help="class-incremental memory replay")
    add_train(sp)
    add_test(sp)
    add_cfg(sp)
    sp.add_argument("--stages", type=int, required=True)
    sp.add_argument("--memory", type=int, required=True)
    sp.add_argument("--method", choices=("random", "herding", "idc"),
                    required=True)
    sp.add_argument("--out", help="CSV output path (default stdout)")
    sp.set_defaults(func=_cmd_continual)

    sp = sub.add_parser("check", help="run the invariant self-checks")
    sp.set_defaults(func=_cmd_check)

    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        return args.func(args)
    except (DataError, FileFormatError, ConfigError, FormationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
