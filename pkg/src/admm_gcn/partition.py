"""Balanced community partitioning that keeps every inter-community edge."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .graph import Graph

BALANCE_SLACK = 0.1


@dataclass(frozen=True, eq=False)
class Partition:
    """Node-to-community assignment plus the derived block structure.

    ``perm`` lists the members of community 0, then community 1, and so on;
    it is the row order of every stacked matrix handled by the engine.
    """

    M: int
    assignment: np.ndarray
    members: tuple
    neighbor_sets: tuple
    perm: np.ndarray
    offsets: np.ndarray

    @classmethod
    def from_assignment(cls, g: Graph, assignment, M=None):
        assignment = np.asarray(assignment, dtype=np.int64)
        if assignment.shape != (g.n,):
            raise ValueError(f"assignment has {assignment.shape[0]} entries, graph has {g.n} nodes")
        if assignment.size and assignment.min() < 0:
            raise ValueError(f"negative community id {assignment.min()}")
        if M is None:
            M = int(assignment.max()) + 1 if assignment.size else 0
        elif assignment.size and assignment.max() >= M:
            raise ValueError(f"community id {assignment.max()} out of range [0, {M})")
        counts = np.bincount(assignment, minlength=M)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            raise ValueError(f"community {empty[0]} is empty")
        members = tuple(np.flatnonzero(assignment == m) for m in range(M))
        for arr in members:
            arr.setflags(write=False)
        perm = np.concatenate(members) if M else np.zeros(0, dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        assignment = assignment.copy()
        assignment.setflags(write=False)
        return cls(M, assignment, members, neighbor_sets(g, assignment, M), perm, offsets)

    @property
    def sizes(self):
        return np.diff(self.offsets)

    def validate(self, g: Graph):
        """Re-derive everything from the assignment and compare."""
        other = Partition.from_assignment(g, self.assignment, self.M)
        if other.neighbor_sets != self.neighbor_sets:
            raise ValueError("neighbor sets inconsistent with graph")
        for m in range(self.M):
            if not np.array_equal(other.members[m], self.members[m]):
                raise ValueError(f"members of community {m} inconsistent with assignment")

    def cut_edges(self, g: Graph) -> int:
        e = g.edges()
        return int(np.count_nonzero(self.assignment[e[:, 0]] != self.assignment[e[:, 1]]))

    def __eq__(self, other):
        return (
            isinstance(other, Partition)
            and self.M == other.M
            and np.array_equal(self.assignment, other.assignment)
            and self.neighbor_sets == other.neighbor_sets
        )


def neighbor_sets(g: Graph, assignment, M) -> tuple:
    """Communities sharing at least one edge with each community, sorted."""
    assignment = np.asarray(assignment)
    a = g.adjacency
    cu = assignment[a.row_ids]
    cv = assignment[a.col_indices]
    cross = cu != cv
    pairs = np.unique(np.stack([cu[cross], cv[cross]], axis=1), axis=0) if np.any(cross) else np.zeros((0, 2), int)
    out = [[] for _ in range(M)]
    for m, r in pairs.tolist():
        out[m].append(r)
    return tuple(tuple(sorted(x)) for x in out)


def partition_graph(g: Graph, M: int, seed: int = 0, slack: float = BALANCE_SLACK) -> Partition:
    """Grow M regions from spread-out seeds, then refine once.

    The smallest open region absorbs its frontier node with the most edges
    into it (lowest id on ties).

    Regions are capped at ``ceil(n/M)`` nodes while growing; the refinement
    pass may move boundary nodes up to ``ceil(n/M) * (1 + slack)``.
    Communities are numbered by their smallest node id.
    """
    n = g.n
    if not 1 <= M <= n:
        raise ValueError(f"need 1 <= M <= n, got M={M}, n={n}")
    rng = np.random.default_rng(seed)
    cap = math.ceil(n / M)
    assign = np.full(n, -1, dtype=np.int64)

    seeds = _spread_seeds(g, M, int(rng.integers(n)))
    sizes = np.zeros(M, dtype=np.int64)
    # links[m, v]: edges from unassigned v into region m; frontier heaps hold
    # (-links, v) and are cleaned lazily
    links = np.zeros((M, n), dtype=np.int64)
    frontiers = [[] for _ in range(M)]

    def take(u, m):
        assign[u] = m
        sizes[m] += 1
        for v in g.neighbors(u):
            if assign[v] == -1:
                links[m, v] += 1
                heapq.heappush(frontiers[m], (-int(links[m, v]), int(v)))

    for m, s in enumerate(seeds):
        take(s, m)

    remaining = n - M
    while remaining:
        grown = False
        for m in np.lexsort((np.arange(M), sizes)):
            if sizes[m] >= cap:
                continue
            front = frontiers[m]
            while front and (assign[front[0][1]] != -1 or -front[0][0] != links[m, front[0][1]]):
                heapq.heappop(front)
            if not front:
                continue
            take(heapq.heappop(front)[1], m)
            remaining -= 1
            grown = True
            break
        if not grown:
            # frontier exhausted (new component or all open regions full)
            u = int(np.flatnonzero(assign == -1)[0])
            take(u, int(np.lexsort((np.arange(M), sizes))[0]))
            remaining -= 1

    _refine(g, assign, sizes, math.floor(cap * (1 + slack)))
    _backfill(assign, sizes)

    # canonical numbering: community order follows smallest member id
    firsts = np.array([np.flatnonzero(assign == m)[0] for m in range(M)])
    relabel = np.empty(M, dtype=np.int64)
    relabel[np.argsort(firsts, kind="stable")] = np.arange(M)
    return Partition.from_assignment(g, relabel[assign], M)


def _spread_seeds(g, M, first):
    """Farthest-first seeds; unreachable nodes count as infinitely far."""
    n = g.n
    seeds = [first]
    dist = _bfs(g, first)
    for _ in range(M - 1):
        d = np.where(dist < 0, n + 1, dist).astype(np.int64)
        d[seeds] = -1
        nxt = int(np.flatnonzero(d == d.max())[0])
        seeds.append(nxt)
        dn = _bfs(g, nxt)
        both = (dist >= 0) & (dn >= 0)
        dist = np.where(both, np.minimum(dist, dn), np.maximum(dist, dn))
    return seeds


def _bfs(g, src):
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[src] = 0
    frontier = [src]
    while frontier:
        nxt = []
        for u in frontier:
            for v in g.neighbors(u):
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    nxt.append(int(v))
        frontier = nxt
    return dist


def _refine(g, assign, sizes, max_size):
    """One ascending-id sweep of cut-reducing boundary moves."""
    M = sizes.shape[0]
    for u in range(g.n):
        nbrs = g.neighbors(u)
        if nbrs.size == 0:
            continue
        own = assign[u]
        counts = np.bincount(assign[nbrs], minlength=M)
        if sizes[own] <= 1:
            continue
        gains = counts - counts[own]
        gains[own] = 0
        gains[sizes + 1 > max_size] = 0
        best = int(np.argmax(gains))
        if gains[best] > 0:
            assign[u] = best
            sizes[own] -= 1
            sizes[best] += 1


def _backfill(assign, sizes):
    for m in np.flatnonzero(sizes == 0):
        donor = int(np.argmax(sizes))
        u = int(np.flatnonzero(assign == donor)[-1])
        assign[u] = m
        sizes[donor] -= 1
        sizes[m] += 1


def export_partition(p: Partition, path):
    with open(path, "w") as fh:
        fh.write("".join(f"{c}\n" for c in p.assignment.tolist()))


def import_partition(path, g: Graph) -> Partition:
    ids = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                raise ValueError(f"{path}:{lineno}: empty line")
            try:
                ids.append(int(s))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not an integer community id: {s!r}") from None
    if len(ids) != g.n:
        raise ValueError(f"{path}: expected {g.n} lines, found {len(ids)}")
    arr = np.array(ids, dtype=np.int64)
    bad = np.flatnonzero(arr < 0)
    if bad.size:
        raise ValueError(f"{path}:{bad[0] + 1}: community id {arr[bad[0]]} out of range")
    return Partition.from_assignment(g, arr)
