"""Datasets on disk, the synthetic block-model generator, and a converter
for the public Amazon co-purchase archives.

Directory layout::

    edges.tsv      undirected edge list (see ``graph.read_edge_list``)
    features.csv   one node per line, comma separated
    labels.csv     one-hot rows, one node per line
    split.json     {"train": [ids], "test": [ids]}
    manifest.json  {"nodes", "train", "test", "classes", "features"}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, SparseMatrix, read_edge_list, write_edge_list
from .seeding import substream

MANIFEST_KEYS = ("nodes", "train", "test", "classes", "features")

# Published node/split/class/feature counts of the two Amazon graphs.
AMAZON_COUNTS = {
    "computers": {"nodes": 13752, "train": 1000, "test": 1000, "classes": 10, "features": 767},
    "photo": {"nodes": 7650, "train": 800, "test": 1000, "classes": 8, "features": 745},
}


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    test_mask: np.ndarray
    name: str = ""

    def __post_init__(self):
        n = self.graph.n
        for key in ("features", "labels"):
            arr = np.array(getattr(self, key), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, key, arr)
        for key in ("train_mask", "test_mask"):
            arr = np.array(getattr(self, key), dtype=np.int64).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, key, arr)
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DatasetError(f"features must have {n} rows, got shape {self.features.shape}")
        if self.labels.ndim != 2 or self.labels.shape[0] != n:
            raise DatasetError(f"labels must have {n} rows, got shape {self.labels.shape}")
        if not np.all(np.isfinite(self.features)):
            bad = int(np.flatnonzero(~np.isfinite(self.features).all(axis=1))[0])
            raise DatasetError(f"non-finite feature in row {bad}")
        onehot = np.all((self.labels == 0) | (self.labels == 1), axis=1) & (self.labels.sum(axis=1) == 1)
        if not onehot.all():
            raise DatasetError(f"label row {int(np.flatnonzero(~onehot)[0])} is not one-hot")
        for key in ("train_mask", "test_mask"):
            mask = getattr(self, key)
            if mask.size and (mask.min() < 0 or mask.max() >= n):
                raise DatasetError(f"{key} holds ids outside [0, {n})")
            if np.unique(mask).size != mask.size:
                raise DatasetError(f"{key} has repeated ids")
        both = np.intersect1d(self.train_mask, self.test_mask)
        if both.size:
            raise DatasetError(f"train and test masks overlap ({both.size} nodes, first {int(both[0])})")

    @property
    def n(self):
        return self.graph.n

    @property
    def num_classes(self):
        return self.labels.shape[1]

    def class_ids(self):
        return np.argmax(self.labels, axis=1)

    def manifest(self):
        return {
            "nodes": self.n,
            "train": int(self.train_mask.size),
            "test": int(self.test_mask.size),
            "classes": int(self.labels.shape[1]),
            "features": int(self.features.shape[1]),
        }


def _read_matrix(path, n):
    rows = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    if rows.shape[0] != n:
        raise DatasetError(f"{Path(path).name}: expected {n} rows, found {rows.shape[0]}")
    return rows


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    for name in ("edges.tsv", "features.csv", "labels.csv", "split.json", "manifest.json"):
        if not (d / name).is_file():
            raise DatasetError(f"missing {name} in {d}")
    manifest = json.loads((d / "manifest.json").read_text())
    missing = [k for k in MANIFEST_KEYS if k not in manifest]
    if missing:
        raise DatasetError(f"manifest.json lacks {', '.join(missing)}")
    n = int(manifest["nodes"])
    split = json.loads((d / "split.json").read_text())
    ds = Dataset(
        graph=read_edge_list(d / "edges.tsv", n=n),
        features=_read_matrix(d / "features.csv", n),
        labels=_read_matrix(d / "labels.csv", n),
        train_mask=np.asarray(split.get("train", []), dtype=np.int64),
        test_mask=np.asarray(split.get("test", []), dtype=np.int64),
        name=manifest.get("name", d.name),
    )
    found = ds.manifest()
    for key in MANIFEST_KEYS:
        if int(manifest[key]) != found[key]:
            raise DatasetError(f"count mismatch for {key}: manifest {manifest[key]}, data {found[key]}")
    return ds


def save_dataset(ds: Dataset, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_edge_list(ds.graph, d / "edges.tsv")
    np.savetxt(d / "features.csv", ds.features, delimiter=",", fmt="%.17g")
    np.savetxt(d / "labels.csv", ds.labels, delimiter=",", fmt="%d")
    split = {"train": ds.train_mask.tolist(), "test": ds.test_mask.tolist()}
    (d / "split.json").write_text(json.dumps(split))
    (d / "manifest.json").write_text(json.dumps({**ds.manifest(), "name": ds.name}, indent=1))


# -- synthetic block model -------------------------------------------------

@dataclass(frozen=True)
class SbmSpec:
    """Blocks of equal size; block id is the label.

    Node features are ``signal * e_c + N(0, I)`` where ``e_c`` is the unit
    vector of the node's class. ``train_frac``/``test_frac`` of each block
    go to the two masks.
    """

    communities: int = 4
    nodes_per_community: int = 50
    p_in: float = 0.2
    p_out: float = 0.01
    feature_dim: int = 16
    signal: float = 2.0
    seed: int = 0
    train_frac: float = 0.2
    test_frac: float = 0.5

    def __post_init__(self):
        if self.communities < 1 or self.nodes_per_community < 1:
            raise DatasetError("block model needs at least one block with one node")
        if not (0 <= self.p_out <= 1 and 0 <= self.p_in <= 1):
            raise DatasetError("edge probabilities must lie in [0, 1]")
        if self.communities > 1 and not self.p_in > self.p_out:
            raise DatasetError("intra-block probability must exceed inter-block probability")
        if self.feature_dim < self.communities:
            raise DatasetError("feature_dim must be at least the number of blocks")
        if self.train_frac < 0 or self.test_frac < 0 or self.train_frac + self.test_frac > 1:
            raise DatasetError("train/test fractions must be non-negative and sum to at most 1")

    @property
    def n(self):
        return self.communities * self.nodes_per_community


ACCEPTANCE_SBM = SbmSpec()
SMALL_SBM = SbmSpec(nodes_per_community=30)


def generate_sbm(spec: SbmSpec) -> Dataset:
    k, b, n = spec.communities, spec.nodes_per_community, spec.n
    block = np.repeat(np.arange(k), b)
    rng = substream(spec.seed, "sbm")
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(block[iu] == block[ju], spec.p_in, spec.p_out)
    keep = rng.random(iu.size) < prob
    r, c = iu[keep], ju[keep]
    adj = SparseMatrix.from_coo(n, n, np.concatenate([r, c]), np.concatenate([c, r]))
    features = rng.standard_normal((n, spec.feature_dim))
    features[np.arange(n), block] += spec.signal
    labels = np.eye(k)[block]

    split_rng = substream(spec.seed, "split")
    n_train = int(round(spec.train_frac * b))
    n_test = int(round(spec.test_frac * b))
    train, test = [], []
    for blk in range(k):
        ids = split_rng.permutation(np.flatnonzero(block == blk))
        train.append(ids[:n_train])
        test.append(ids[n_train:n_train + n_test])
    return Dataset(
        graph=Graph(adj),
        features=features,
        labels=labels,
        train_mask=np.sort(np.concatenate(train)),
        test_mask=np.sort(np.concatenate(test)),
        name=f"sbm-{k}x{b}",
    )


# -- Amazon archive converter ----------------------------------------------

def _csr_from_npz(z, prefix):
    import scipy.sparse as sp

    return sp.csr_matrix(
        (z[f"{prefix}_data"], z[f"{prefix}_indices"], z[f"{prefix}_indptr"]),
        shape=tuple(z[f"{prefix}_shape"]),
    )


def convert_amazon_npz(src, directory, name=None, train=None, test=None, seed=0) -> Dataset:
    """Convert an ``amazon_electronics_*.npz`` archive into the directory layout.

    The archive stores the adjacency and attributes in CSR pieces and
    class ids in ``labels``. A split shipped in the archive
    (``train_idx``/``test_idx``) is kept; otherwise ``train``/``test``
    nodes are drawn uniformly from the ``split`` stream of ``seed``, with
    counts defaulting to the published ones for the matching ``name``.
    """
    with np.load(src, allow_pickle=False) as z:
        adj = _csr_from_npz(z, "adj")
        if "attr_data" in z:
            feats = _csr_from_npz(z, "attr").toarray()
        else:
            feats = np.asarray(z["attr_matrix"], dtype=np.float64)
        classes = np.asarray(z["labels"], dtype=np.int64)
        shipped = ("train_idx" in z and "test_idx" in z)
        if shipped:
            train_ids, test_ids = np.asarray(z["train_idx"]), np.asarray(z["test_idx"])

    adj = adj.maximum(adj.T).tocoo()
    off = adj.row != adj.col
    n = adj.shape[0]
    graph = Graph(SparseMatrix.from_coo(n, n, adj.row[off], adj.col[off], np.ones(int(off.sum()))))
    labels = np.eye(int(classes.max()) + 1)[classes]

    name = name or Path(src).stem.replace("amazon_electronics_", "")
    if not shipped:
        counts = AMAZON_COUNTS.get(name, {})
        train = counts.get("train", 1000) if train is None else train
        test = counts.get("test", 1000) if test is None else test
        if train + test > n:
            raise DatasetError(f"split of {train}+{test} exceeds {n} nodes")
        order = substream(seed, "split").permutation(n)
        train_ids, test_ids = order[:train], order[train:train + test]
    ds = Dataset(graph, feats, labels, np.sort(train_ids), np.sort(test_ids), name=name)
    save_dataset(ds, directory)
    return ds

