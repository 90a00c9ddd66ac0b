import os
import subprocess
import sys

import numpy as np
import pytest

from admm_gcn import kernels
from admm_gcn.graph import normalize_adjacency

from .conftest import random_graph

BACKENDS = kernels.available_backends()


@pytest.mark.parametrize("backend", BACKENDS)
def test_spmm_backends_bitwise_equal(backend, rng):
    A = normalize_adjacency(random_graph(40, 0.2, rng))
    x = rng.standard_normal((40, 7))
    ref = A.to_scipy() @ x
    got = kernels.csr_spmm(A.row_offsets, A.col_indices, A.values, x, backend=backend)
    np.testing.assert_array_equal(got, ref)


@pytest.mark.parametrize("backend", BACKENDS)
def test_spmm_non_contiguous_input(backend, rng):
    A = normalize_adjacency(random_graph(10, 0.3, rng))
    x = np.asfortranarray(rng.standard_normal((10, 3)))
    got = kernels.csr_spmm(A.row_offsets, A.col_indices, A.values, x, backend=backend)
    np.testing.assert_allclose(got, A.to_dense() @ x, rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("backend", BACKENDS)
def test_relu_residual(backend, rng):
    target = rng.standard_normal((6, 5))
    pre = rng.standard_normal((6, 5))
    pre[0, 0] = 0.0
    resid, masked = kernels.relu_residual(target, pre, backend=backend)
    np.testing.assert_array_equal(resid, target - np.maximum(pre, 0))
    np.testing.assert_array_equal(masked, resid * (pre > 0))
    assert masked[0, 0] == 0.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_empty_inputs(backend):
    resid, masked = kernels.relu_residual(np.zeros((0, 3)), np.zeros((0, 3)), backend=backend)
    assert resid.shape == masked.shape == (0, 3)
    out = kernels.csr_spmm(np.zeros(1, np.int64), np.zeros(0, np.int64), np.zeros(0), np.zeros((0, 2)),
                           backend=backend)
    assert out.shape == (0, 2)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.relu_residual(np.zeros((1, 1)), np.zeros((1, 1)), backend="fortran")


def test_pure_env_selects_fallback():
    env = dict(os.environ, ADMM_GCN_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from admm_gcn import kernels; print(kernels.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"
