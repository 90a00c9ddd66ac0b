"""Static, partitioned training data shared read-only by every agent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import SparseMatrix, extract_block, spmm
from .partition import Partition


@dataclass(frozen=True, eq=False)
class Community:
    """Everything agent ``index`` owns before training starts.

    ``A_in[r]`` is the block with rows in this community and columns in
    community ``r`` (``r`` ranges over the community itself and its
    neighbors); ``A_out[r]`` is the transposed orientation, rows in ``r``.
    """

    index: int
    nodes: np.ndarray
    neighbors: tuple
    A_in: dict
    A_out: dict
    features: np.ndarray
    labels: np.ndarray
    train_rows: np.ndarray
    offset: int

    @property
    def size(self):
        return int(self.nodes.shape[0])

    @property
    def closed_neighbors(self):
        """``N_m`` together with ``m``, ascending."""
        return tuple(sorted(self.neighbors + (self.index,)))


@dataclass(frozen=True, eq=False)
class Problem:
    A: SparseMatrix
    partition: Partition
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    test_mask: np.ndarray
    dims: tuple
    communities: tuple
    A_perm: SparseMatrix
    AZ0_perm: np.ndarray
    train_rows_perm: np.ndarray
    _inverse: np.ndarray = field(repr=False)

    @property
    def M(self):
        return self.partition.M

    @property
    def layers(self):
        return len(self.dims) - 1

    @property
    def train_count(self):
        return int(self.train_mask.shape[0])

    def stack(self, blocks):
        """Concatenate per-community blocks in community order."""
        return np.concatenate(blocks, axis=0) if len(blocks) > 1 else blocks[0]

    def split(self, stacked):
        offs = self.partition.offsets
        return [stacked[offs[m]:offs[m + 1]] for m in range(self.M)]

    def to_original(self, stacked):
        return stacked[self._inverse]

    def from_original(self, full):
        return full[self.partition.perm]


def build_problem(A: SparseMatrix, features, labels, train_mask, partition: Partition,
                  hidden=(), test_mask=None) -> Problem:
    features = np.ascontiguousarray(features, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.float64)
    n = A.rows
    if features.shape[0] != n or labels.shape[0] != n:
        raise ValueError("features/labels row count must equal node count")
    if partition.assignment.shape[0] != n:
        raise ValueError("partition does not match graph size")
    train_mask = np.unique(np.asarray(train_mask, dtype=np.int64))
    test_mask = np.unique(np.asarray([] if test_mask is None else test_mask, dtype=np.int64))
    dims = (features.shape[1], *map(int, hidden), labels.shape[1])

    is_train = np.zeros(n, dtype=bool)
    is_train[train_mask] = True
    comms = []
    for m in range(partition.M):
        nodes = partition.members[m]
        nbrs = partition.neighbor_sets[m]
        A_in = {r: extract_block(A, nodes, partition.members[r]) for r in sorted(nbrs + (m,))}
        A_out = {r: extract_block(A, partition.members[r], nodes) for r in nbrs}
        comms.append(Community(
            index=m,
            nodes=nodes,
            neighbors=tuple(nbrs),
            A_in=A_in,
            A_out=A_out,
            features=features[nodes],
            labels=labels[nodes],
            train_rows=np.flatnonzero(is_train[nodes]),
            offset=int(partition.offsets[m]),
        ))

    perm = partition.perm
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.shape[0])
    A_perm = extract_block(A, perm, perm)
    return Problem(
        A=A,
        partition=partition,
        features=features,
        labels=labels,
        train_mask=train_mask,
        test_mask=test_mask,
        dims=dims,
        communities=tuple(comms),
        A_perm=A_perm,
        AZ0_perm=spmm(A_perm, features[perm]),
        train_rows_perm=np.flatnonzero(is_train[perm]),
        _inverse=inverse,
    )
