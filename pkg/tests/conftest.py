from pathlib import Path

import numpy as np
import pytest

from admm_gcn import engine
from admm_gcn.data import SbmSpec, generate_sbm
from admm_gcn.graph import Graph, normalize_adjacency
from admm_gcn.partition import Partition, partition_graph
from admm_gcn.problem import build_problem

FIXTURES = Path(__file__).parent / "fixtures"


def random_graph(n, p, rng):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return Graph.from_edges(n, np.stack([iu[keep], ju[keep]], axis=1))


def random_instance(rng, n=12, M=3, dims=(5, 4, 3), p=0.3, train_frac=0.5, assignment=None):
    """Small random graph, features, one-hot labels and a partition."""
    g = random_graph(n, p, rng)
    if assignment is None:
        part = partition_graph(g, M, seed=int(rng.integers(1 << 30)))
    else:
        part = Partition.from_assignment(g, assignment)
    X = rng.standard_normal((n, dims[0]))
    Y = np.eye(dims[-1])[rng.integers(dims[-1], size=n)]
    train = np.flatnonzero(rng.random(n) < train_frac)
    if train.size == 0:
        train = np.array([0])
    A = normalize_adjacency(g)
    prob = build_problem(A, X, Y, train, part, hidden=dims[1:-1])
    return g, A, prob


def random_state(prob, rng, scale=1.0):
    """Arbitrary (not forward-consistent) iterate for the given problem."""
    dims = prob.dims
    L = len(dims) - 1
    W = [rng.standard_normal((dims[l], dims[l + 1])) * scale for l in range(L)]
    Z = [[c.features.copy() for c in prob.communities]]
    for l in range(1, L + 1):
        Z.append([rng.standard_normal((c.size, dims[l])) for c in prob.communities])
    U = [rng.standard_normal((c.size, dims[-1])) for c in prob.communities]
    return engine.ModelState(W=W, Z=Z, U=U, tau=[1.0] * L,
                             theta=[[1.0] * prob.M for _ in range(L - 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_sbm():
    return generate_sbm(SbmSpec(nodes_per_community=30))


@pytest.fixture(scope="session")
def small_sbm_A(small_sbm):
    return normalize_adjacency(small_sbm.graph)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.REPORT:
            terminalreporter.write_line(line)
