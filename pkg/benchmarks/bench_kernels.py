"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import os
import sys
import timeit

import numpy as np

if os.environ.get("KANDGCNN_BACKEND"):
    sys.exit("unset KANDGCNN_BACKEND so both backends are importable")

from kandgcnn import kernels
from kandgcnn.basis import BasisSpec, _jacobi_arrays
from kandgcnn.model import Model, ModelConfig


def cases(rng):
    cloud = rng.standard_normal((1024, 3))
    a, b, c = _jacobi_arrays(4, 1.0, 1.0)
    slope, intercept = 2.0, 0.0
    gamma = np.tanh(rng.standard_normal(16 * 1024 * 6))
    index = rng.integers(0, 1024, size=1024 * 20)
    src = rng.standard_normal((index.size, 64))
    return {
        "knn_indices N=1024 k=20": lambda impl: kernels.knn_indices(cloud, 20, impl=impl),
        "recurrence_table jacobi n=4 (98k inputs)": lambda impl: kernels.recurrence_table(
            gamma, a, b, c, slope, intercept, 4, impl=impl),
        "scatter_add_rows 20k x 64": lambda impl: kernels.scatter_add_rows(
            np.zeros((1024, 64)), index, src, impl=impl),
    }


def bench_model(repeat, rng):
    cfg = ModelConfig(basis=BasisSpec(degree=3), k=5, edge_hidden=32, embedding=128, num_classes=4)
    model = Model(cfg, np.random.default_rng(0))
    clouds = rng.standard_normal((4, 256, 3))

    def step():
        logits = model.forward(clouds)
        model.backward(np.ones_like(logits) / logits.size)

    return min(timeit.repeat(step, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    found = kernels.backends()
    names = list(found)
    print(f"{'kernel':44}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases(rng).items():
        times = [min(timeit.repeat(lambda: fn(found[n]), number=1, repeat=args.repeat)) for n in names]
        row = f"{label:44}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) > 1:
            row += f"{times[1] / times[0]:11.1f}x"
        print(row)
    print(f"\nmodel forward+backward (active backend {kernels.BACKEND}): "
          f"{bench_model(args.repeat, rng) * 1e3:.1f} ms per batch of 4 x 256 points")


if __name__ == "__main__":
    main()
