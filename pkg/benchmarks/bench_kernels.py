"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on identical inputs in both backends; outputs are checked
for equality before timing.
"""

import argparse
import random
import timeit

import numpy as np

from treegrowth import _pykernels as py
from treegrowth import kernels
from treegrowth.growth import marchal_tree
from treegrowth.plane_tree import leaf_labelled


def _cases():
    tree = marchal_tree(4000, 1.5, 1)
    small = marchal_tree(60, 1.5, 2)
    labels = list(range(1, 61))
    random.Random(3).shuffle(labels)
    lt = leaf_labelled(small, labels)
    deg = np.asarray(lt.tree.degrees, dtype=np.int64)
    leaf_label = np.zeros(len(deg), dtype=np.int64)
    for v, s in lt.labels.items():
        leaf_label[v] = next(iter(s))
    system = py.dendritic_from_tree(deg, leaf_label)
    return {
        "counter_uniform x1e4": lambda k: [k.counter_uniform(9, s, 0) for s in range(10_000)],
        "marchal_grow n=4000": lambda k: k.marchal_grow(4000, 1.5, 7, [4000]),
        "mean_leaf_depth n=4000": lambda k: k.mean_leaf_depth(np.asarray(tree.degrees, dtype=np.int64)),
        "dendritic_from_tree n=60": lambda k: k.dendritic_from_tree(deg, leaf_label),
        "dendritic_violations n=60": lambda k: k.dendritic_violations(*system),
        "dendritic_to_tree n=60": lambda k: k.dendritic_to_tree(*system),
    }


def _same(a, b) -> bool:
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.array_equal(np.asarray(a), np.asarray(b))
    return a == b


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    c = kernels.compiled_backend
    if c is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'kernel':28s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    for name, fn in _cases().items():
        if not _same(fn(c), fn(py)):
            raise SystemExit(f"{name}: backends disagree")
        tp = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat))
        tc = min(timeit.repeat(lambda: fn(c), number=1, repeat=args.repeat))
        print(f"{name:28s} {tp:10.4f} {tc:10.4f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
