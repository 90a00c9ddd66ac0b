# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: CSR times dense, and the fused ReLU residual.

Both kernels run without the GIL so community agents on separate threads
can overlap. Accumulation order matches the scipy fallback exactly: one
row at a time, stored entries in ascending position, ``out += v * x``.
"""

from libc.stdint cimport int64_t


def csr_spmm(const int64_t[::1] indptr,
             const int64_t[::1] indices,
             const double[::1] data,
             const double[:, ::1] x,
             double[:, ::1] out):
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t k = x.shape[1]
    cdef Py_ssize_t i, c
    cdef int64_t jj, j
    cdef double v
    with nogil:
        for i in range(n_rows):
            for c in range(k):
                out[i, c] = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                j = indices[jj]
                v = data[jj]
                for c in range(k):
                    out[i, c] += v * x[j, c]


def relu_residual(const double[:, ::1] target,
                  const double[:, ::1] pre,
                  double[:, ::1] resid,
                  double[:, ::1] masked):
    cdef Py_ssize_t size = target.shape[0] * target.shape[1]
    cdef Py_ssize_t i
    cdef const double* t
    cdef const double* p
    cdef double* r
    cdef double* mk
    cdef double a
    if size == 0:
        return
    t = &target[0, 0]
    p = &pre[0, 0]
    r = &resid[0, 0]
    mk = &masked[0, 0]
    with nogil:
        # branch-free so the loop vectorizes
        for i in range(size):
            a = t[i] - (p[i] if p[i] > 0.0 else 0.0)
            r[i] = a
            mk[i] = a if p[i] > 0.0 else 0.0
