# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: tableau simplex pivoting and Dykstra projection.

Mirrors ``_pykernels`` exactly; see there for the contract.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

DEF OPTIMAL = 0
DEF UNBOUNDED = 1
DEF ITERATION_LIMIT = 2
DEF TIE_PIV_FRAC = 1e-3


def pivot_loop(double[:, ::1] T, cnp.int64_t[::1] basis, Py_ssize_t n_enter,
               Py_ssize_t max_iter, double tol, double piv_tol, Py_ssize_t bland_after):
    cdef Py_ssize_t m = T.shape[0] - 1
    cdef Py_ssize_t rhs = T.shape[1] - 1
    cdef Py_ssize_t ncols = T.shape[1]
    cdef Py_ssize_t it, j, i, e, r, k, nnz_c, nnz_r
    cdef Py_ssize_t degenerate_run = 0
    cdef double best, ratio, v, piv, f, scale
    cdef cnp.ndarray[cnp.intp_t, ndim=1] colidx = np.empty(ncols, dtype=np.intp)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] rowidx = np.empty(m + 1, dtype=np.intp)
    cdef cnp.intp_t[::1] cidx = colidx
    cdef cnp.intp_t[::1] ridx = rowidx

    for it in range(max_iter):
        e = -1
        if degenerate_run >= bland_after:
            for j in range(n_enter):
                if T[m, j] < -tol:
                    e = j
                    break
        else:
            best = -tol
            for j in range(n_enter):
                if T[m, j] < best:
                    best = T[m, j]
                    e = j
        if e < 0:
            return OPTIMAL, it

        r = -1
        best = 0.0
        for i in range(m):
            v = T[i, e]
            if v > piv_tol:
                ratio = T[i, rhs] / v
                if r < 0 or ratio < best:
                    r = i
                    best = ratio
        if r < 0:
            return UNBOUNDED, it
        # among tied rows take the lowest basis index, skipping pivots far
        # smaller than the largest tied one (they wreck the tableau)
        scale = best + 1e-12 * max(1.0, fabs(best))
        piv = 0.0
        for i in range(m):
            v = T[i, e]
            if v > piv_tol and T[i, rhs] / v <= scale and v > piv:
                piv = v
        piv *= TIE_PIV_FRAC
        r = -1
        for i in range(m):
            v = T[i, e]
            if v > piv_tol and v >= piv and T[i, rhs] / v <= scale and (r < 0 or basis[i] < basis[r]):
                r = i

        if T[r, rhs] <= tol:
            degenerate_run += 1
        else:
            degenerate_run = 0

        piv = T[r, e]
        nnz_c = 0
        for j in range(ncols):
            if T[r, j] != 0.0:
                T[r, j] /= piv
                cidx[nnz_c] = j
                nnz_c += 1
        nnz_r = 0
        for i in range(m + 1):
            if i != r and T[i, e] != 0.0:
                ridx[nnz_r] = i
                nnz_r += 1
        for k in range(nnz_r):
            i = ridx[k]
            f = T[i, e]
            for j in range(nnz_c):
                T[i, cidx[j]] -= f * T[r, cidx[j]]
            T[i, e] = 0.0
        basis[r] = e
    return ITERATION_LIMIT, max_iter


def dykstra(double[:, ::1] A, double[::1] b, x0, Py_ssize_t sweeps, double tol):
    cdef Py_ssize_t k = A.shape[0]
    cdef Py_ssize_t n = A.shape[1]
    cdef Py_ssize_t sweep, i, j
    cdef double viol, change, nrm, step, y, new
    cdef cnp.ndarray[double, ndim=1] xa = np.array(x0, dtype=np.float64)
    cdef double[::1] x = xa
    cdef cnp.ndarray[double, ndim=2] inca = np.zeros((k, n), dtype=np.float64)
    cdef double[:, ::1] incr = inca
    cdef cnp.ndarray[double, ndim=1] norma = np.einsum("ij,ij->i", np.asarray(A), np.asarray(A))
    cdef double[::1] norms = norma

    for sweep in range(sweeps):
        change = 0.0
        for i in range(k):
            nrm = norms[i]
            if nrm == 0.0:
                continue
            viol = -b[i]
            for j in range(n):
                viol += A[i, j] * (x[j] + incr[i, j])
            if viol > 0.0:
                step = viol / nrm
            else:
                step = 0.0
            for j in range(n):
                y = x[j] + incr[i, j]
                new = y - step * A[i, j]
                incr[i, j] = y - new
                change += (new - x[j]) * (new - x[j])
                x[j] = new
        if change <= tol * tol:
            return xa, sweep + 1
    return xa, sweeps
