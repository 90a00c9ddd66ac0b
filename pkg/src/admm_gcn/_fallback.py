"""Reference kernels built on scipy.sparse and numpy.

Used when the compiled extension is unavailable, and as the second route
in the backend-agreement tests.
"""

import numpy as np
import scipy.sparse as sp


def csr_spmm(indptr, indices, data, x, out):
    n_rows = indptr.shape[0] - 1
    mat = sp.csr_matrix((data, indices, indptr), shape=(n_rows, x.shape[0]))
    out[...] = mat @ x


def relu_residual(target, pre, resid, masked):
    np.subtract(target, np.maximum(pre, 0.0), out=resid)
    np.multiply(resid, pre > 0.0, out=masked)
