"""Compiled vs pure-Python kernels, plus one ADMM epoch under each.

    python benchmarks/bench_kernels.py [--nodes 4000] [--width 128] [--repeat 20]

Both backends are checked for identical output before timing.
"""

import argparse
import time
from unittest import mock

import numpy as np

from admm_gcn import engine, kernels
from admm_gcn.data import SbmSpec, generate_sbm
from admm_gcn.graph import normalize_adjacency
from admm_gcn.partition import partition_graph
from admm_gcn.problem import build_problem


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def epoch_time(problem, hp, backend, repeat):
    state = engine.init_state(problem, hp, seed=0)
    impl = kernels._module(backend)
    with mock.patch.object(kernels, "_impl", impl):
        engine.outer_iteration(state, problem, hp)  # warm up
        return best_of(lambda: engine.outer_iteration(state, problem, hp), repeat)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=4000)
    ap.add_argument("--width", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)} (active: {kernels.BACKEND})")
    per_block = max(args.nodes // 4, 1)
    ds = generate_sbm(SbmSpec(nodes_per_community=per_block, p_in=min(1.0, 40 / per_block),
                              p_out=min(1.0, 1 / per_block), feature_dim=args.width))
    A = normalize_adjacency(ds.graph)
    x = np.random.default_rng(0).standard_normal((A.cols, args.width))
    pre = np.random.default_rng(1).standard_normal((A.rows, args.width))
    print(f"graph: n={A.rows} nnz={A.nnz} width={args.width}")

    ref_spmm = kernels.csr_spmm(A.row_offsets, A.col_indices, A.values, x, backend="python")
    ref_relu = kernels.relu_residual(x, pre, backend="python")
    results = {}
    for b in backends:
        got = kernels.csr_spmm(A.row_offsets, A.col_indices, A.values, x, backend=b)
        assert np.array_equal(got, ref_spmm), f"{b} spmm differs from the reference"
        for g, r in zip(kernels.relu_residual(x, pre, backend=b), ref_relu):
            assert np.array_equal(g, r), f"{b} relu_residual differs from the reference"
        results[b] = (
            best_of(lambda: kernels.csr_spmm(A.row_offsets, A.col_indices, A.values, x, backend=b), args.repeat),
            best_of(lambda: kernels.relu_residual(x, pre, backend=b), args.repeat),
        )

    hp = engine.Hyperparams(nu=1e-3, rho=1e-3, hidden=(args.width,))
    problem = build_problem(A, ds.features, ds.labels, ds.train_mask, partition_graph(ds.graph, 3),
                            hidden=hp.hidden, test_mask=ds.test_mask)
    print(f"{'backend':<10}{'spmm ms':>10}{'relu ms':>10}{'epoch ms':>10}")
    for b in backends:
        ep = epoch_time(problem, hp, b, max(args.repeat // 4, 1))
        s, r = results[b]
        print(f"{b:<10}{1e3 * s:>10.3f}{1e3 * r:>10.3f}{1e3 * ep:>10.2f}")


if __name__ == "__main__":
    main()
