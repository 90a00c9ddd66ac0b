"""Sparse graph storage, renormalized adjacency and block extraction."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import kernels


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Immutable CSR matrix in double precision.

    Column indices inside each row are strictly increasing, which fixes the
    accumulation order of every product computed from it.
    """

    rows: int
    cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", np.ascontiguousarray(self.row_offsets, dtype=np.int64))
        object.__setattr__(self, "col_indices", np.ascontiguousarray(self.col_indices, dtype=np.int64))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        for arr in (self.row_offsets, self.col_indices, self.values):
            arr.setflags(write=False)
        self._validate()

    def _validate(self):
        indptr, indices = self.row_offsets, self.col_indices
        if self.rows < 0 or self.cols < 0:
            raise ValueError("negative matrix dimension")
        if indptr.shape != (self.rows + 1,):
            raise ValueError(f"row_offsets must have length rows+1={self.rows + 1}, got {indptr.shape[0]}")
        if indptr[0] != 0 or np.any(np.diff(indptr) < 0):
            raise ValueError("row_offsets must start at 0 and be non-decreasing")
        if indptr[-1] != indices.shape[0]:
            raise ValueError("last row offset must equal the number of stored entries")
        if self.values.shape != indices.shape:
            raise ValueError("values and col_indices differ in length")
        if indices.size:
            if indices.min() < 0 or indices.max() >= self.cols:
                raise ValueError("column index out of range")
            # strictly increasing within a row: every in-row step is positive
            step = np.diff(indices)
            row_start = np.zeros(indices.shape[0], dtype=bool)
            row_start[indptr[:-1][np.diff(indptr) > 0]] = True
            if np.any(step[~row_start[1:]] <= 0):
                raise ValueError("column indices must be strictly increasing within each row")

    # -- construction -----------------------------------------------------
    @classmethod
    def from_coo(cls, rows, cols, r, c, v=None):
        """Build from coordinate triplets; duplicate coordinates are summed."""
        r = np.asarray(r, dtype=np.int64)
        c = np.asarray(c, dtype=np.int64)
        v = np.ones(r.shape[0]) if v is None else np.asarray(v, dtype=np.float64)
        if r.size and (r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols):
            raise ValueError("coordinate out of range")
        mat = sp.coo_matrix((v, (r, c)), shape=(rows, cols)).tocsr()
        mat.sum_duplicates()
        mat.sort_indices()
        return cls(rows, cols, mat.indptr, mat.indices, mat.data)

    @classmethod
    def from_dense(cls, arr):
        arr = np.asarray(arr, dtype=np.float64)
        r, c = np.nonzero(arr)
        return cls.from_coo(arr.shape[0], arr.shape[1], r, c, arr[r, c])

    @classmethod
    def from_scipy(cls, mat):
        mat = sp.csr_matrix(mat, dtype=np.float64)
        mat.sum_duplicates()
        mat.sort_indices()
        return cls(mat.shape[0], mat.shape[1], mat.indptr, mat.indices, mat.data)

    @classmethod
    def identity(cls, n):
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))

    # -- views --------------------------------------------------------------
    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nnz(self):
        return int(self.col_indices.shape[0])

    @cached_property
    def row_ids(self):
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(self.row_offsets))

    def to_scipy(self):
        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets), shape=self.shape)

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.row_ids, self.col_indices] = self.values
        return out

    def transpose(self):
        return SparseMatrix.from_scipy(self.to_scipy().T)

    def is_symmetric(self):
        if self.rows != self.cols:
            return False
        t = self.transpose()
        return (
            np.array_equal(t.row_offsets, self.row_offsets)
            and np.array_equal(t.col_indices, self.col_indices)
            and np.array_equal(t.values, self.values)
        )

    def __matmul__(self, x):
        return spmm(self, x)

    def __repr__(self):
        return f"SparseMatrix({self.rows}x{self.cols}, nnz={self.nnz})"


def spmm(a: SparseMatrix, x: np.ndarray, backend=None) -> np.ndarray:
    """Sparse-dense product ``a @ x`` in double precision."""
    x = np.asarray(x, dtype=np.float64)
    vector = x.ndim == 1
    if vector:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != a.cols:
        raise ValueError(f"dimension mismatch: {a.shape} @ {x.shape}")
    out = kernels.csr_spmm(a.row_offsets, a.col_indices, a.values, x, backend=backend)
    return out[:, 0] if vector else out


def extract_block(m: SparseMatrix, row_ids, col_ids) -> SparseMatrix:
    """Return ``B`` with ``B[i, j] = m[row_ids[i], col_ids[j]]``."""
    row_ids = np.asarray(row_ids, dtype=np.int64).ravel()
    col_ids = np.asarray(col_ids, dtype=np.int64).ravel()
    for name, ids, bound in (("row", row_ids, m.rows), ("column", col_ids, m.cols)):
        bad = np.flatnonzero((ids < 0) | (ids >= bound))
        if bad.size:
            raise IndexError(f"{name} index {ids[bad[0]]} out of range [0, {bound})")
        if np.unique(ids).size != ids.size:
            raise ValueError(f"duplicate {name} indices")

    col_map = np.full(m.cols, -1, dtype=np.int64)
    col_map[col_ids] = np.arange(col_ids.size)

    starts = m.row_offsets[row_ids]
    lengths = m.row_offsets[row_ids + 1] - starts
    total = int(lengths.sum())
    # flat positions of all entries in the selected rows, row by row
    offsets = np.repeat(starts - np.cumsum(lengths) + lengths, lengths)
    pos = offsets + np.arange(total, dtype=np.int64)
    new_rows = np.repeat(np.arange(row_ids.size, dtype=np.int64), lengths)
    new_cols = col_map[m.col_indices[pos]]
    keep = new_cols >= 0
    new_rows, new_cols, vals = new_rows[keep], new_cols[keep], m.values[pos][keep]
    order = np.lexsort((new_cols, new_rows))
    new_rows, new_cols, vals = new_rows[order], new_cols[order], vals[order]
    indptr = np.zeros(row_ids.size + 1, dtype=np.int64)
    np.cumsum(np.bincount(new_rows, minlength=row_ids.size), out=indptr[1:])
    return SparseMatrix(row_ids.size, col_ids.size, indptr, new_cols, vals)


class Graph:
    """Undirected, unweighted graph stored as a symmetric 0/1 adjacency.

    Use :meth:`from_edges` for edge lists and :meth:`from_adjacency` for a
    possibly directed matrix; the plain constructor insists on a valid
    adjacency already.
    """

    def __init__(self, adjacency: SparseMatrix):
        if adjacency.rows != adjacency.cols:
            raise ValueError("adjacency must be square")
        if not adjacency.is_symmetric():
            raise ValueError("adjacency must be symmetric")
        if np.any(adjacency.row_ids == adjacency.col_indices):
            raise ValueError("self-loops are not stored; the +I shift happens in normalization")
        if np.any(adjacency.values != 1.0):
            raise ValueError("adjacency must be unweighted")
        self.adjacency = adjacency

    @property
    def n(self):
        return self.adjacency.rows

    @property
    def num_edges(self):
        return self.adjacency.nnz // 2

    def degrees(self):
        return np.diff(self.adjacency.row_offsets)

    def edges(self):
        """Each undirected edge once, as an ``(E, 2)`` array with ``u < v``."""
        r, c = self.adjacency.row_ids, self.adjacency.col_indices
        keep = r < c
        return np.stack([r[keep], c[keep]], axis=1)

    def neighbors(self, u):
        a = self.adjacency
        return a.col_indices[a.row_offsets[u]:a.row_offsets[u + 1]]

    @classmethod
    def from_edges(cls, n, edges):
        """Build from undirected ``(u, v)`` pairs; duplicates collapse."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError(f"edge endpoint out of range for n={n}")
        loops = edges[:, 0] == edges[:, 1]
        if np.any(loops):
            warnings.warn(f"dropping {int(loops.sum())} self-loop(s)", stacklevel=2)
            edges = edges[~loops]
        r = np.concatenate([edges[:, 0], edges[:, 1]])
        c = np.concatenate([edges[:, 1], edges[:, 0]])
        return cls(_binary(n, r, c))

    @classmethod
    def from_adjacency(cls, mat: SparseMatrix):
        """Accept any square pattern; asymmetric input is symmetrized."""
        r, c = mat.row_ids, mat.col_indices
        nz = mat.values != 0
        r, c = r[nz], c[nz]
        off = r != c
        if not np.all(off):
            warnings.warn("dropping self-loops from adjacency", stacklevel=2)
            r, c = r[off], c[off]
        fwd = set(zip(r.tolist(), c.tolist()))
        if any((v, u) not in fwd for u, v in fwd):
            warnings.warn("directed input symmetrized", stacklevel=2)
        return cls(_binary(mat.rows, np.concatenate([r, c]), np.concatenate([c, r])))


def _binary(n, r, c):
    mat = SparseMatrix.from_coo(n, n, r, c)
    return SparseMatrix(n, n, mat.row_offsets, mat.col_indices, np.ones(mat.nnz))


def normalize_adjacency(g: Graph) -> SparseMatrix:
    """Renormalized propagation matrix ``(D+I)^-1/2 (A+I) (D+I)^-1/2``."""
    a = g.adjacency
    if not a.is_symmetric():
        raise ValueError("normalize_adjacency needs a symmetric adjacency")
    n = g.n
    deg = g.degrees().astype(np.float64)
    idx = np.arange(n, dtype=np.int64)
    shifted = SparseMatrix.from_coo(
        n, n, np.concatenate([a.row_ids, idx]), np.concatenate([a.col_indices, idx])
    )
    du = deg[shifted.row_ids] + 1.0
    dv = deg[shifted.col_indices] + 1.0
    # product commutes exactly, so (u,v) and (v,u) get identical bits
    vals = 1.0 / np.sqrt(du * dv)
    return SparseMatrix(n, n, shifted.row_offsets, shifted.col_indices, vals)


def read_edge_list(path, n=None) -> Graph:
    """Read ``u<TAB>v`` lines (0-based ids, ``#`` comments).

    ``n`` defaults to one more than the largest id seen.
    """
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two node ids, got {line!r}")
            pairs.append((int(parts[0]), int(parts[1])))
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if n is None:
        n = int(edges.max()) + 1 if edges.size else 0
    return Graph.from_edges(n, edges)


def write_edge_list(g: Graph, path):
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"# {g.n} nodes, {g.num_edges} edges\n")
        for u, v in g.edges():
            fh.write(f"{u}\t{v}\n")
