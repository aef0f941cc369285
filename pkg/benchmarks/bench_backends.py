"""Timing of the compiled kernels against the pure-Python fallback.

Three measurements, each reported as the best of ``--repeat`` runs:

* VP-tree build plus a k-nearest-neighbour query for every point, per backend
  and per manifold family;
* one Barnes-Hut gradient evaluation on R^2, per backend;
* Barnes-Hut (active backend) against the exact dense gradient.

Run ``python3 benchmarks/bench_backends.py --help`` for the size options.
"""

import argparse
import sys
import time

import numpy as np

from riesne import DatasetTable, ManifoldDescriptor, TargetSpace, build_p
from riesne._backend import BACKENDS, use_backend
from riesne.embedding import EmbeddingState, kl_gradient_bh, kl_gradient_exact
from riesne.neighbors import vp_build, vp_query


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def make_table(family, n, seed=0):
    rng = np.random.default_rng(seed)
    if family == "euclidean":
        return DatasetTable(rng.standard_normal((n, 10)), ManifoldDescriptor.euclidean(10))
    if family == "sphere":
        x = rng.standard_normal((n, 10))
        return DatasetTable(x / np.linalg.norm(x, axis=1, keepdims=True), ManifoldDescriptor.sphere(10))
    a = rng.standard_normal((n, 4, 4))
    return DatasetTable(a @ a.transpose(0, 2, 1) + 0.5 * np.eye(4), ManifoldDescriptor.spd(4))


def blobs(n, seed=0):
    rng = np.random.default_rng(seed)
    half = n // 2
    return np.vstack([rng.standard_normal((half, 2)), rng.standard_normal((n - half, 2)) + [8.0, 0.0]])


def bench_knn(n, k, repeat):
    print(f"\nVP-tree kNN, n={n}, k={k} (build + query every point)")
    print(f"{'family':<10}" + "".join(f"{name:>12}" for name in sorted(BACKENDS)) + f"{'speedup':>10}")
    for family in ("euclidean", "sphere", "spd"):
        table = make_table(family, n)
        row = {}
        for name in sorted(BACKENDS):
            with use_backend(name):
                def run():
                    tree = vp_build(table, seed=0)
                    for i in range(n):
                        vp_query(tree, i, k)
                row[name] = best_of(run, repeat)
        speed = row["python"] / row["compiled"] if "compiled" in row else float("nan")
        print(f"{family:<10}" + "".join(f"{row[name]:>11.3f}s" for name in sorted(BACKENDS)) + f"{speed:>9.1f}x")


def bench_bh(n, repeat):
    y = blobs(n)
    P = build_p(DatasetTable(y, ManifoldDescriptor.euclidean(2)), 30.0, mode="sparse")
    state = EmbeddingState(y, TargetSpace.euclidean(2))
    print(f"\nBarnes-Hut gradient, n={n}, theta=0.5")
    row = {}
    for name in sorted(BACKENDS):
        with use_backend(name):
            row[name] = best_of(lambda: kl_gradient_bh(P, state, 0.5), repeat)
        print(f"  {name:<10}{row[name]:>10.3f}s")
    if "compiled" in row:
        print(f"  speedup   {row['python'] / row['compiled']:>10.1f}x")
    exact = best_of(lambda: kl_gradient_exact(P, state, TargetSpace.euclidean(2)), repeat)
    fastest = min(row.values())
    print(f"  exact     {exact:>10.3f}s   (Barnes-Hut is {exact / fastest:.1f}x faster)")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0],
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--knn-n", type=int, default=1000, help="points per kNN fixture")
    parser.add_argument("--k", type=int, default=10, help="neighbours per query")
    parser.add_argument("--bh-n", type=int, default=5000, help="points in the Barnes-Hut fixture")
    parser.add_argument("--repeat", type=int, default=3, help="runs per timing; the best is reported")
    args = parser.parse_args(argv)
    if "compiled" not in BACKENDS:
        print("compiled extension not built; only the python backend is timed", file=sys.stderr)
    bench_knn(args.knn_n, args.k, args.repeat)
    bench_bh(args.bh_n, args.repeat)


if __name__ == "__main__":
    main()
