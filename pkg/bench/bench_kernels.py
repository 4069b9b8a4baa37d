"""Time the compiled kernels against the numpy fallback.

    python bench/bench_kernels.py [--repeat 5]

Cases mirror the shapes the experiments hit: the shallow and deep GAN
heads on a training batch, the large paper-scale heads on a small batch,
and the Jacobi sweeps behind a condition-number probe.
"""
import argparse
import timeit

import numpy as np

from gaforest import _kernels_py

try:
    from gaforest import _kernels
except ImportError:
    _kernels = None


def tree_case(batch, trees, depth, seed=0):
    rng = np.random.default_rng(seed)
    n = 2 ** depth - 1
    return (rng.normal(size=(batch, trees, n)), rng.normal(size=(trees, n)),
            rng.normal(size=(trees, n + 1, 1)), 1.0)


def cases():
    out = []
    for shape in [(64, 64, 1), (128, 4, 4), (16, 8192, 1), (16, 16, 9)]:
        act, biases, leaves, alpha = tree_case(*shape)
        desc = f"{shape[0]:3d} x {shape[1]} trees, depth {shape[2]}"
        out.append((f"forward  {desc}", lambda k, a=act, b=biases, le=leaves, al=alpha: k.tree_forward(a, b, le, al)))
        label = f"backward {desc}"
        y, dec, mass = _kernels_py.tree_forward(act, biases, leaves, alpha)
        g = np.ones_like(y)
        out.append((label, lambda k, g=g, d=dec, m=mass, le=leaves, al=alpha: k.tree_backward(g, d, m, le, al)))
    for rows, cols in [(128, 65), (128, 192)]:
        m = np.random.default_rng(1).normal(size=(rows, cols))
        # the probe orthogonalises the smaller dimension
        small = m.T.copy() if cols < rows else m.copy()
        out.append((f"jacobi   {rows:3d} x {cols}", lambda k, s=small: k.jacobi_sweeps(s.copy(), 1e-15, 60)))
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _kernels is None:
        print("compiled kernels are not built; only the numpy fallback is available")
    print(f"{'case':36s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, fn in cases():
        py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if _kernels is None:
            print(f"{label:36s} {py:10.2f} {'-':>10s} {'-':>8s}")
            continue
        cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:36s} {py:10.2f} {cy:10.2f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
