# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled polynomial evaluation kernels (see ``_kernels_py`` for the contract)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def legendre_table(x, Py_ssize_t n, int nderiv):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t m = xv.shape[0]
    out_arr = np.zeros((nderiv + 1, n + 1, m))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t q, j
    cdef double t, a, b
    for q in range(m):
        t = 2.0 * xv[q] - 1.0
        out[0, 0, q] = 1.0
        if n >= 1:
            out[0, 1, q] = t
            if nderiv >= 1:
                out[1, 1, q] = 2.0
        for j in range(1, n):
            a = 2 * j + 1
            b = j + 1
            out[0, j + 1, q] = (a * t * out[0, j, q] - j * out[0, j - 1, q]) / b
            if nderiv >= 1:
                out[1, j + 1, q] = (a * (2.0 * out[0, j, q] + t * out[1, j, q])
                                    - j * out[1, j - 1, q]) / b
            if nderiv >= 2:
                out[2, j + 1, q] = (a * (4.0 * out[1, j, q] + t * out[2, j, q])
                                    - j * out[2, j - 1, q]) / b
    return out_arr


def tensor_products(px_arr, py_arr, ax_arr, ay_arr, int nderiv):
    cdef const double[:, :, ::1] px = np.ascontiguousarray(px_arr, dtype=np.float64)
    cdef const double[:, :, ::1] py = np.ascontiguousarray(py_arr, dtype=np.float64)
    cdef const cnp.intp_t[::1] ax = np.ascontiguousarray(ax_arr, dtype=np.intp)
    cdef const cnp.intp_t[::1] ay = np.ascontiguousarray(ay_arr, dtype=np.intp)
    cdef Py_ssize_t nb = ax.shape[0]
    cdef Py_ssize_t m = px.shape[2]
    cdef int ncomp = 1 if nderiv == 0 else (3 if nderiv == 1 else 6)
    out_arr = np.empty((ncomp, nb, m))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, q, a, b
    for i in range(nb):
        a = ax[i]
        b = ay[i]
        for q in range(m):
            out[0, i, q] = px[0, a, q] * py[0, b, q]
            if nderiv >= 1:
                out[1, i, q] = px[1, a, q] * py[0, b, q]
                out[2, i, q] = px[0, a, q] * py[1, b, q]
            if nderiv >= 2:
                out[3, i, q] = px[2, a, q] * py[0, b, q]
                out[4, i, q] = px[1, a, q] * py[1, b, q]
                out[5, i, q] = px[0, a, q] * py[2, b, q]
    return out_arr
