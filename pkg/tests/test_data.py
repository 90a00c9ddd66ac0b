import json
import shutil

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from admm_gcn.data import (
    AMAZON_COUNTS,
    Dataset,
    DatasetError,
    SbmSpec,
    convert_amazon_npz,
    generate_sbm,
    load_dataset,
    save_dataset,
)
from admm_gcn.graph import Graph
from admm_gcn.partition import partition_graph
from admm_gcn.training import RunConfig, train_baseline

from .conftest import FIXTURES

TOY = FIXTURES / "toy"


def edge_list(g):
    return sorted(map(tuple, g.edges().tolist()))


def same_graph(a, b):
    return np.array_equal(a.edges(), b.edges()) and a.n == b.n


@pytest.fixture
def toy(tmp_path):
    d = tmp_path / "toy"
    shutil.copytree(TOY, d)
    return d


class TestLoad:
    def test_toy_exact(self):
        ds = load_dataset(TOY)
        assert ds.n == 3 and ds.name == "toy"
        assert edge_list(ds.graph) == [(0, 1), (1, 2)]
        np.testing.assert_array_equal(ds.features, [[1, 0], [0.5, 0.5], [0, 1]])
        np.testing.assert_array_equal(ds.class_ids(), [0, 0, 1])
        assert ds.train_mask.tolist() == [0, 2] and ds.test_mask.tolist() == [1]
        assert ds.manifest() == {"nodes": 3, "train": 2, "test": 1, "classes": 2, "features": 2}

    def test_immutable(self):
        ds = load_dataset(TOY)
        with pytest.raises(ValueError):
            ds.features[0, 0] = 9.0

    def test_missing_file(self, toy):
        (toy / "labels.csv").unlink()
        with pytest.raises(DatasetError, match="missing labels.csv"):
            load_dataset(toy)

    def test_count_mismatch(self, toy):
        m = json.loads((toy / "manifest.json").read_text())
        m["classes"] = 3
        (toy / "manifest.json").write_text(json.dumps(m))
        with pytest.raises(DatasetError, match="count mismatch for classes"):
            load_dataset(toy)

    def test_manifest_key_missing(self, toy):
        (toy / "manifest.json").write_text('{"nodes": 3}')
        with pytest.raises(DatasetError, match="lacks train"):
            load_dataset(toy)

    def test_non_one_hot(self, toy):
        (toy / "labels.csv").write_text("1,0\n1,1\n0,1\n")
        with pytest.raises(DatasetError, match="label row 1 is not one-hot"):
            load_dataset(toy)

    def test_overlapping_masks(self, toy):
        (toy / "split.json").write_text('{"train": [0, 1], "test": [1]}')
        with pytest.raises(DatasetError, match="overlap"):
            load_dataset(toy)

    def test_row_count(self, toy):
        (toy / "features.csv").write_text("1,0\n0,1\n")
        with pytest.raises(DatasetError, match="expected 3 rows"):
            load_dataset(toy)

    def test_non_finite_feature(self):
        with pytest.raises(DatasetError, match="non-finite feature in row 1"):
            Dataset(Graph.from_edges(2, []), [[0.0], [np.nan]], np.eye(2), [0], [1])

    def test_mask_out_of_range(self):
        with pytest.raises(DatasetError, match="outside"):
            Dataset(Graph.from_edges(2, []), np.zeros((2, 1)), np.eye(2), [5], [])

    def test_save_load_round_trip(self, tmp_path, small_sbm):
        save_dataset(small_sbm, tmp_path / "d")
        back = load_dataset(tmp_path / "d")
        assert back.name == small_sbm.name
        np.testing.assert_array_equal(back.features, small_sbm.features)
        np.testing.assert_array_equal(back.labels, small_sbm.labels)
        assert same_graph(back.graph, small_sbm.graph)
        assert np.array_equal(back.train_mask, small_sbm.train_mask)


class TestSbm:
    def test_deterministic(self):
        a, b = generate_sbm(SbmSpec(seed=4)), generate_sbm(SbmSpec(seed=4))
        assert same_graph(a.graph, b.graph) and np.array_equal(a.features, b.features)
        assert not same_graph(generate_sbm(SbmSpec(seed=5)).graph, a.graph)

    def test_two_cliques(self):
        ds = generate_sbm(SbmSpec(communities=2, nodes_per_community=3, p_in=1.0, p_out=0.0, feature_dim=2))
        assert edge_list(ds.graph) == [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]

    def test_disconnected_blocks_zero_cut(self):
        ds = generate_sbm(SbmSpec(communities=3, nodes_per_community=10, p_in=0.5, p_out=0.0))
        assert partition_graph(ds.graph, 3).cut_edges(ds.graph) == 0

    def test_split_per_block(self):
        ds = generate_sbm(SbmSpec())
        assert ds.train_mask.size == 40 and ds.test_mask.size == 100
        assert np.bincount(ds.class_ids()[ds.train_mask]).tolist() == [10] * 4

    def test_feature_signal(self):
        ds = generate_sbm(SbmSpec(nodes_per_community=400, signal=3.0))
        means = np.array([ds.features[ds.class_ids() == c].mean(axis=0) for c in range(4)])
        np.testing.assert_allclose(means[:, :4], 3.0 * np.eye(4), atol=0.2)

    @pytest.mark.parametrize("kw", [dict(nodes_per_community=0), dict(p_in=0.01, p_out=0.2),
                                    dict(p_in=1.5), dict(feature_dim=2), dict(train_frac=0.8, test_frac=0.5)])
    def test_degenerate_spec(self, kw):
        with pytest.raises(DatasetError):
            SbmSpec(**kw)

    def test_gd_baseline_accuracy(self):
        res = train_baseline(generate_sbm(SbmSpec()), RunConfig(optimizer="gd", hidden=(64,), epochs=50))
        assert res.metrics.last().test_acc >= 0.9


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 12), st.floats(0.05, 1.0), st.floats(0, 1), st.integers(0, 99))
def test_generated_datasets_valid(k, b, p_in, frac, seed):
    spec = SbmSpec(communities=k, nodes_per_community=b, p_in=p_in, p_out=p_in / 4,
                   feature_dim=k + 1, seed=seed, train_frac=frac / 2, test_frac=frac / 2)
    ds = generate_sbm(spec)
    assert ds.n == k * b
    assert np.all(ds.graph.edges()[:, 0] < ds.graph.edges()[:, 1])
    assert np.intersect1d(ds.train_mask, ds.test_mask).size == 0


class TestConverter:
    def _archive(self, path, n=30, d=5, classes=3, split=False, seed=0):
        rng = np.random.default_rng(seed)
        adj = sp.random(n, n, density=0.15, random_state=seed, format="csr")
        adj.data[:] = 1.0
        adj.setdiag(1.0)  # self-loops must be dropped
        adj = adj.tocsr()
        attr = sp.random(n, d, density=0.4, random_state=seed + 1, format="csr")
        arrays = dict(adj_data=adj.data, adj_indices=adj.indices, adj_indptr=adj.indptr, adj_shape=adj.shape,
                      attr_data=attr.data, attr_indices=attr.indices, attr_indptr=attr.indptr,
                      attr_shape=attr.shape, labels=rng.integers(classes, size=n))
        if split:
            arrays.update(train_idx=np.arange(5), test_idx=np.arange(5, 12))
        np.savez(path, **arrays)
        return adj, attr, arrays["labels"]

    def test_converts_and_symmetrizes(self, tmp_path):
        adj, attr, classes = self._archive(tmp_path / "amazon_electronics_toy.npz")
        ds = convert_amazon_npz(tmp_path / "amazon_electronics_toy.npz", tmp_path / "out", train=6, test=8)
        assert ds.name == "toy" and ds.n == 30
        sym = ((adj + adj.T) > 0).toarray()
        np.fill_diagonal(sym, False)
        expected = sorted((int(u), int(v)) for u, v in zip(*np.nonzero(np.triu(sym))))
        assert edge_list(ds.graph) == expected
        np.testing.assert_array_equal(ds.features, attr.toarray())
        np.testing.assert_array_equal(ds.class_ids(), classes)
        assert ds.train_mask.size == 6 and ds.test_mask.size == 8
        back = load_dataset(tmp_path / "out")
        assert np.array_equal(back.train_mask, ds.train_mask)

    def test_shipped_split_kept(self, tmp_path):
        self._archive(tmp_path / "a.npz", split=True)
        ds = convert_amazon_npz(tmp_path / "a.npz", tmp_path / "out")
        assert ds.train_mask.tolist() == list(range(5)) and ds.test_mask.tolist() == list(range(5, 12))

    def test_seeded_split_reproducible(self, tmp_path):
        self._archive(tmp_path / "a.npz")
        a = convert_amazon_npz(tmp_path / "a.npz", tmp_path / "o1", train=4, test=4, seed=1)
        b = convert_amazon_npz(tmp_path / "a.npz", tmp_path / "o2", train=4, test=4, seed=1)
        assert np.array_equal(a.train_mask, b.train_mask) and np.array_equal(a.test_mask, b.test_mask)

    def test_split_too_large(self, tmp_path):
        self._archive(tmp_path / "a.npz")
        with pytest.raises(DatasetError, match="exceeds"):
            convert_amazon_npz(tmp_path / "a.npz", tmp_path / "out", train=20, test=20)

    def test_published_counts(self):
        assert AMAZON_COUNTS["computers"] == {"nodes": 13752, "train": 1000, "test": 1000,
                                              "classes": 10, "features": 767}
        assert AMAZON_COUNTS["photo"] == {"nodes": 7650, "train": 800, "test": 1000,
                                          "classes": 8, "features": 745}
