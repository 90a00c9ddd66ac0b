import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from admm_gcn.graph import Graph, extract_block, normalize_adjacency
from admm_gcn.partition import (
    BALANCE_SLACK,
    Partition,
    export_partition,
    import_partition,
    neighbor_sets,
    partition_graph,
)

from .conftest import random_graph


def brute_neighbors(g, assignment, M):
    out = [set() for _ in range(M)]
    for u, v in g.edges():
        a, b = assignment[u], assignment[v]
        if a != b:
            out[a].add(b)
            out[b].add(a)
    return tuple(tuple(sorted(s)) for s in out)


def two_cliques(k):
    edges = [(i, j) for i in range(k) for j in range(i + 1, k)]
    edges += [(i + k, j + k) for i, j in edges]
    return Graph.from_edges(2 * k, edges)


class TestPartitionGraph:
    def test_single_community(self, rng):
        g = random_graph(10, 0.3, rng)
        p = partition_graph(g, 1)
        assert p.M == 1 and np.all(p.assignment == 0) and p.neighbor_sets == ((),)

    def test_singletons(self, rng):
        g = random_graph(8, 0.4, rng)
        p = partition_graph(g, 8)
        assert sorted(p.sizes.tolist()) == [1] * 8
        for m in range(8):
            (u,) = p.members[m]
            expected = sorted(int(p.assignment[v]) for v in g.neighbors(u))
            assert list(p.neighbor_sets[m]) == expected

    def test_two_cliques_zero_cut(self):
        g = two_cliques(5)
        for seed in range(5):
            p = partition_graph(g, 2, seed=seed)
            assert p.cut_edges(g) == 0
            assert p.neighbor_sets == ((), ())

    def test_disconnected_blocks_zero_cut(self):
        g = Graph.from_edges(9, [(0, 1), (1, 2), (3, 4), (4, 5), (6, 7), (7, 8)])
        p = partition_graph(g, 3)
        assert p.cut_edges(g) == 0

    def test_m_greater_than_n(self, rng):
        with pytest.raises(ValueError, match="M"):
            partition_graph(random_graph(4, 0.5, rng), 5)

    def test_deterministic(self, rng):
        g = random_graph(30, 0.15, rng)
        assert partition_graph(g, 3, seed=7) == partition_graph(g, 3, seed=7)

    def test_numbered_by_smallest_member(self, rng):
        p = partition_graph(random_graph(30, 0.15, rng), 4, seed=1)
        firsts = [int(m[0]) for m in p.members]
        assert firsts == sorted(firsts) and firsts[0] == 0

    def test_empty_graph_backfilled(self):
        g = Graph.from_edges(5, [])
        p = partition_graph(g, 5)
        assert np.all(p.sizes == 1)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.floats(0, 0.6), st.integers(0, 10_000), st.data())
def test_partition_invariants(n, prob, seed, data):
    g = random_graph(n, prob, np.random.default_rng(seed))
    M = data.draw(st.integers(1, n))
    p = partition_graph(g, M, seed=seed)
    p.validate(g)
    # disjoint cover
    assert np.array_equal(np.sort(p.perm), np.arange(n))
    assert all(s >= 1 for s in p.sizes)
    assert p.sizes.max() <= math.ceil(n / M) * (1 + BALANCE_SLACK)
    # symmetric neighbor relation, no self
    for m, nb in enumerate(p.neighbor_sets):
        assert m not in nb
        for r in nb:
            assert m in p.neighbor_sets[r]
    assert p.neighbor_sets == brute_neighbors(g, p.assignment, M)
    # no edge is lost between the blocks
    A = normalize_adjacency(g)
    assert sum(extract_block(A, a, b).nnz for a in p.members for b in p.members) == A.nnz


def test_neighbor_sets_brute_force(rng):
    for _ in range(20):
        g = random_graph(12, 0.3, rng)
        assignment = rng.integers(3, size=12)
        assignment[:3] = [0, 1, 2]
        assert neighbor_sets(g, assignment, 3) == brute_neighbors(g, assignment, 3)


def test_three_community_example():
    # a-b-c-d in community 0, e-f in 1, g-h in 2; c and d connect to g
    g = Graph.from_edges(8, [(0, 1), (1, 2), (2, 3), (4, 5), (6, 7), (2, 6), (3, 6), (5, 7)])
    assignment = [0, 0, 0, 0, 1, 1, 2, 2]
    p = Partition.from_assignment(g, assignment)
    assert p.neighbor_sets == ((2,), (2,), (0, 1))


def test_no_cut_edges_means_no_neighbors():
    g = two_cliques(3)
    p = Partition.from_assignment(g, [0, 0, 0, 1, 1, 1])
    assert p.neighbor_sets == ((), ())


class TestFromAssignment:
    def test_wrong_length(self, rng):
        with pytest.raises(ValueError, match="entries"):
            Partition.from_assignment(random_graph(4, 0.5, rng), [0, 1])

    def test_empty_community(self, rng):
        with pytest.raises(ValueError, match="community 1 is empty"):
            Partition.from_assignment(random_graph(3, 0.5, rng), [0, 2, 2])

    def test_out_of_range(self, rng):
        with pytest.raises(ValueError, match="out of range"):
            Partition.from_assignment(random_graph(3, 0.5, rng), [0, 1, 2], M=2)


class TestImportExport:
    def test_round_trip(self, tmp_path, rng):
        g = random_graph(25, 0.2, rng)
        p = partition_graph(g, 4)
        export_partition(p, tmp_path / "p.txt")
        assert import_partition(tmp_path / "p.txt", g) == p
        assert (tmp_path / "p.txt").read_text().endswith("\n")

    def test_all_zeros(self, tmp_path, rng):
        g = random_graph(5, 0.5, rng)
        (tmp_path / "p.txt").write_text("0\n" * 5)
        assert import_partition(tmp_path / "p.txt", g).M == 1

    def test_alternating_path(self, tmp_path):
        g = Graph.from_edges(6, [(i, i + 1) for i in range(5)])
        (tmp_path / "p.txt").write_text("".join(f"{i % 2}\n" for i in range(6)))
        p = import_partition(tmp_path / "p.txt", g)
        assert p.neighbor_sets == ((1,), (0,))

    @pytest.mark.parametrize("text,match", [
        ("0\n0\n", "expected 3 lines"),
        ("0\nx\n0\n", "not an integer"),
        ("0\n-1\n0\n", ":2: community id -1 out of range"),
        ("0\n2\n0\n", "community 1 is empty"),
    ])
    def test_errors_name_violation(self, tmp_path, text, match):
        g = Graph.from_edges(3, [(0, 1), (1, 2)])
        (tmp_path / "p.txt").write_text(text)
        with pytest.raises(ValueError, match=match):
            import_partition(tmp_path / "p.txt", g)
