"""Time the compiled and pure-Python kernel backends on block-sized inputs.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--shape N C T H W]
"""

import argparse
import timeit

import numpy as np

from resp3d import _kernels
from resp3d._kernels import _pykernels


def cases(x):
    N, C = x.shape[:2]
    mean, var = _pykernels.bn_stats(x)
    invstd = (1.0 / np.sqrt(var + 1e-5)).astype(x.dtype)
    gamma = np.ones(C, x.dtype)
    beta = np.zeros(C, x.dtype)
    cols = _pykernels.im2col(x, 1, 3, 3, 0, 1, 1, 1, 1)
    dy = np.random.default_rng(1).standard_normal(x.shape).astype(x.dtype)
    return {
        "im2col 1x3x3": lambda K: K.im2col(x, 1, 3, 3, 0, 1, 1, 1, 1),
        "im2col 3x1x1": lambda K: K.im2col(x, 3, 1, 1, 1, 0, 0, 1, 1),
        "col2im 1x3x3": lambda K: K.col2im(cols, x.shape, 1, 3, 3, 0, 1, 1, 1, 1),
        "bn_stats": lambda K: K.bn_stats(x),
        "bn_apply": lambda K: K.bn_apply(x, mean, invstd, gamma, beta),
        "bn_backward": lambda K: K.bn_backward(dy, x, mean, invstd, gamma),
        "feature_residual fwd": lambda K: K.feature_residual_forward(x),
        "feature_residual bwd": lambda K: K.feature_residual_backward(x, dy),
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--shape", type=int, nargs=5, default=(8, 16, 16, 28, 28))
    args = p.parse_args()
    x = np.random.default_rng(0).standard_normal(args.shape).astype(np.float32)
    backends = {"python": _pykernels}
    if "cython" in _kernels.available_backends():
        from resp3d._kernels import _ckernels
        backends["cython"] = _ckernels
    print(f"input {tuple(args.shape)} float32, best of {args.repeat}")
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, fn in cases(x).items():
        times = [min(timeit.repeat(lambda: fn(K), number=1, repeat=args.repeat)) for K in backends.values()]
        row = f"{name:<22}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
