"""Time the compiled kernels against their NumPy fallbacks.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``.
"""
import argparse
import timeit

import numpy as np
import scipy.sparse as sp

from kglink import _fallback, kernels


def walk_case(n=20_000, degree=5, seed=0):
    rng = np.random.default_rng(seed)
    rows = np.repeat(np.arange(n), degree)
    A = sp.csr_matrix((np.ones(n * degree), (rows, rng.integers(n, size=n * degree))), shape=(n, n))
    prob = rng.random(n)
    return A.indptr.astype(np.intc), A.indices.astype(np.intc), prob / prob.sum()


def transe_case(ne=2_000, nr=20, h=32, n=5_000, seed=0):
    rng = np.random.default_rng(seed)
    E = rng.normal(size=(ne, h))
    E /= np.linalg.norm(E, axis=1, keepdims=True)
    R = rng.normal(size=(nr, h))
    pos = np.column_stack([rng.integers(ne, size=n), rng.integers(nr, size=n),
                           rng.integers(ne, size=n)]).astype(np.int64)
    neg = pos.copy()
    neg[:, 2] = rng.integers(ne, size=n)
    return E, R, pos, neg


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    impls = {"python": _fallback}
    if kernels.compiled_impl is not None:
        impls["cython"] = kernels.compiled_impl
    else:
        print("compiled extension not built; timing the fallback only")

    indptr, indices, prob = walk_case()
    E, R, pos, neg = transe_case()
    rows = []
    for name, impl in impls.items():
        walk = bench(lambda: impl.walk_step(indptr, indices, prob), args.repeat)
        epoch = bench(lambda: impl.transe_margin_epoch(E.copy(), R.copy(), pos, neg,
                                                       0.01, 0.0, 1.0, False, True), args.repeat)
        rows.append((name, walk, epoch))

    print(f"{'backend':<8} {'walk_step (ms)':>15} {'transe epoch (ms)':>18}")
    for name, walk, epoch in rows:
        print(f"{name:<8} {walk * 1e3:>15.2f} {epoch * 1e3:>18.2f}")
    if len(rows) == 2:
        (_, pw, pe), (_, cw, ce) = rows
        print(f"speedup  {pw / cw:>14.1f}x {pe / ce:>17.1f}x")


if __name__ == "__main__":
    main()
