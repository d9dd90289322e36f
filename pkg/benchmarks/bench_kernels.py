"""Compare the compiled and numpy kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--nodes 781] [--repeat 5]

Times one lift epoch and the pairwise distance matrix on each backend and
checks that both produce the same heights.
"""

import argparse
import time

import numpy as np

from coneembed.graphs import gen_complete_kary_tree
from coneembed.kernels import get_backend
from coneembed.training import NegativeSampler


def _best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(depth=4, k=5, dim=10, repeat=5, seed=0):
    g = gen_complete_kary_tree(k, depth)
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(g.num_nodes, dim))
    edges = np.ascontiguousarray(g.edges)
    negs = NegativeSampler(g).sample(edges[:, 0], 10, rng)
    us, vs = np.ascontiguousarray(edges[:, 0]), np.ascontiguousarray(edges[:, 1])
    h0 = rng.uniform(0.4, 0.6, g.num_nodes)

    rows, heights = [], {}
    for name in ("python", "cython"):
        try:
            kern = get_backend(name)
        except ImportError:
            print(f"{name}: not available")
            continue
        D = kern.pairwise_euclidean(X)
        t_pair = _best_of(lambda: kern.pairwise_euclidean(X), repeat)

        def epoch():
            h = h0.copy()
            kern.lift_epoch(h, D, us, vs, negs, 2.0, 0.1, 1e-3, 32)
            return h

        heights[name] = epoch()
        t_epoch = _best_of(epoch, repeat)
        rows.append((name, t_pair, t_epoch))

    print(f"graph: {g.num_nodes} nodes, {g.num_edges} edges, base dim {dim}")
    print(f"{'backend':8s} {'pairwise (ms)':>14s} {'lift epoch (ms)':>16s}")
    for name, tp, te in rows:
        print(f"{name:8s} {tp * 1e3:14.3f} {te * 1e3:16.3f}")
    if len(rows) == 2:
        print(f"lift epoch speedup: {rows[0][2] / rows[1][2]:.1f}x")
        diff = np.max(np.abs(heights['python'] - heights['cython']))
        print(f"max height difference between backends: {diff:.2e}")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--depth", type=int, default=4)
    ap.add_argument("--dim", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    run(args.depth, args.k, args.dim, args.repeat)


if __name__ == "__main__":
    main()
