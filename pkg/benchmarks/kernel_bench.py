"""Compare the compiled kernels against the numpy fallback.

Runs each hot kernel on condensation-realistic shapes and prints per-call
times for both implementations. Usage:

    python benchmarks/kernel_bench.py [--repeats 30]
"""

import argparse
import time

import numpy as np

from idckit import _kernels_np

try:
    from idckit import _kernels
except ImportError:
    _kernels = None


def _time(fn, args, repeats):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=30)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    batch = rng.standard_normal((64, 64, 28, 28))     # conv input mid-net
    cols = _kernels_np.im2col(batch, 3, 3, 1, 1)
    blocks = rng.standard_normal((40, 1, 14, 14))     # stored f=2 blocks
    grads = rng.standard_normal((40, 1, 28, 28))

    cases = [
        ("im2col 64x64x28x28 k3p1", "im2col", (batch, 3, 3, 1, 1)),
        ("col2im (adjoint of above)", "col2im",
         (cols, 64, 64, 28, 28, 3, 3, 1, 1)),
        ("bilinear_up 14->28 x40", "bilinear_up", (blocks, 28, 28)),
        ("bilinear_up_adj 28->14 x40", "bilinear_up_adj", (grads, 14, 14)),
    ]

    if _kernels is None:
        print("compiled extension not installed; timing numpy only")

    header = f"{'kernel':<30} {'numpy':>10} {'cython':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, name, call_args in cases:
        t_np = _time(getattr(_kernels_np, name), call_args, args.repeats)
        if _kernels is not None:
            t_cy = _time(getattr(_kernels, name), call_args, args.repeats)
            ref = getattr(_kernels_np, name)(*call_args)
            out = getattr(_kernels, name)(*call_args)
            assert np.allclose(ref, out, atol=1e-12), f"{name} outputs differ"
            print(f"{label:<30} {t_np * 1e3:>8.2f}ms {t_cy * 1e3:>8.2f}ms "
                  f"{t_np / t_cy:>7.1f}x")
        else:
            print(f"{label:<30} {t_np * 1e3:>8.2f}ms {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
