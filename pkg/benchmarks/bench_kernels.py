"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 64] [--channels 32]

Reports the best-of-N wall time per kernel for each backend, the speedup and
whether the two outputs are bit-identical.
"""

import argparse
import time

import numpy as np

from dtrattunet.tensor import kernels


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(x):
    n, c, h, w = x.shape
    rng = np.random.default_rng(1)
    wmat = rng.standard_normal((c, 9 * c)).astype(np.float32)
    cols = rng.standard_normal((n * h * w, 9 * c)).astype(np.float32)
    pooled_grad = rng.standard_normal((n, c, h // 2, w // 2)).astype(np.float32)
    up_grad = rng.standard_normal((n, c, 2 * h, 2 * w)).astype(np.float32)
    return {
        "im2col3x3": lambda k: k.im2col3x3(x),
        "col2im3x3": lambda k: k.col2im3x3(cols, x.shape),
        "maxpool2x2": lambda k: k.maxpool2x2(x),
        "maxpool2x2_backward": lambda k: k.maxpool2x2_backward(pooled_grad, k.maxpool2x2(x)[1]),
        "upsample2x": lambda k: k.upsample2x(x),
        "upsample2x_backward": lambda k: k.upsample2x_backward(up_grad),
        "conv3x3_forward": lambda k: k.im2col3x3(x) @ wmat.T,
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(p, q) for p, q in zip(a, b))
    return a.dtype == b.dtype and np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--channels", type=int, default=32)
    ap.add_argument("--size", type=int, default=64)
    args = ap.parse_args(argv)

    compiled = kernels.compiled_backend
    if compiled is None:
        print("compiled extension not built; run `pip install --no-build-isolation -e .` first")
        return 1
    x = np.random.default_rng(0).standard_normal((args.batch, args.channels, args.size, args.size)).astype(np.float32)
    print(f"input {x.shape} float32, best of {args.repeat}")
    print(f"{'kernel':<22}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}  identical")
    for name, fn in cases(x).items():
        t_np = best_of(lambda: fn(kernels.numpy_backend), args.repeat)
        t_c = best_of(lambda: fn(compiled), args.repeat)
        ident = same(fn(kernels.numpy_backend), fn(compiled))
        print(f"{name:<22}{t_np * 1e3:>10.2f}{t_c * 1e3:>11.2f}{t_np / t_c:>8.2f}x  {ident}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
