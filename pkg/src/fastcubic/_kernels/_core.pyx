# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: dense Nesterov iteration and rank-one SVRG epochs."""
import numpy as np
from libc.math cimport sqrt, isfinite


cdef inline void _matvec(const double[:, ::1] H, const double[::1] y, double shift,
                         double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, d = H.shape[0]
    cdef double s
    for i in range(d):
        s = 0.0
        for j in range(d):
            s += H[i, j] * y[j]
        out[i] = s + shift * y[i]


cdef int _agd(const double[:, ::1] H, double shift, const double[::1] b, double step,
              double beta, long max_iter, double tol, double[::1] x, double[::1] xp,
              double[::1] y, double[::1] g, long* iters) noexcept nogil:
    cdef Py_ssize_t d = H.shape[0], i
    cdef long k
    cdef double rn
    for i in range(d):
        x[i] = 0.0
        xp[i] = 0.0
    for k in range(max_iter):
        for i in range(d):
            y[i] = x[i] + beta * (x[i] - xp[i])
        _matvec(H, y, shift, g)
        rn = 0.0
        for i in range(d):
            g[i] -= b[i]
            rn += g[i] * g[i]
        rn = sqrt(rn)
        if not isfinite(rn):
            iters[0] = k + 1
            return -1
        if rn <= tol:
            for i in range(d):
                x[i] = y[i]
            iters[0] = k + 1
            return 1
        for i in range(d):
            xp[i] = x[i]
            x[i] = y[i] - step * g[i]
    iters[0] = max_iter
    return 0


def agd_dense(const double[:, ::1] H, double shift, const double[::1] b,
              double step, double beta, long max_iter, double tol):
    """Constant-momentum Nesterov on 0.5 x'(H+shift I)x - b'x from x = 0.

    Returns (x, iterations, status) with status 1 = residual below tol,
    0 = iteration budget used, -1 = non-finite iterate.
    """
    cdef Py_ssize_t d = H.shape[0]
    cdef long k = 0
    cdef int status
    x_np = np.zeros(d)
    cdef double[::1] x = x_np
    cdef double[::1] xp = np.zeros(d)
    cdef double[::1] y = np.zeros(d)
    cdef double[::1] g = np.zeros(d)
    with nogil:
        status = _agd(H, shift, b, step, beta, max_iter, tol, x, xp, y, g, &k)
    return x_np, k, status


def power_dense(const double[:, ::1] H, double shift, const double[::1] w0, long K,
                double step, double beta, long max_iter, double tol):
    """K normalized inexact solves with H + shift I, then one more solve.

    Each solve is agd_dense with right-hand side the current unit vector.
    Returns (w, z, total_iterations, status) where z approximates
    (H + shift I)^{-1} w and status is the worst solve status.
    """
    cdef Py_ssize_t d = H.shape[0], i
    cdef long k, it = 0, total = 0, r
    cdef int status = 1, st
    cdef double zn
    w_np = np.array(w0, dtype=np.float64, copy=True)
    z_np = np.zeros(d)
    cdef double[::1] w = w_np
    cdef double[::1] z = z_np
    cdef double[::1] xp = np.zeros(d)
    cdef double[::1] y = np.zeros(d)
    cdef double[::1] g = np.zeros(d)
    with nogil:
        zn = 0.0
        for i in range(d):
            zn += w[i] * w[i]
        zn = sqrt(zn)
        for i in range(d):
            w[i] /= zn
        for r in range(K + 1):
            st = _agd(H, shift, w, step, beta, max_iter, tol, z, xp, y, g, &it)
            total += it
            if st < status:
                status = st
            if st < 0 or r == K:
                break
            zn = 0.0
            for i in range(d):
                zn += z[i] * z[i]
            zn = sqrt(zn)
            if zn == 0.0:
                break
            for i in range(d):
                w[i] = z[i] / zn
    return w_np, z_np, total, status


def svrg_rank1_epoch(const double[:, ::1] A, const double[::1] c, double shift,
                     const double[::1] snapshot, const double[::1] full_grad,
                     const long[::1] idx, double step):
    """One SVRG epoch for components c_i a_i a_i' + shift I.

    The variance-reduced direction for component i at x is
    c_i (a_i'(x - s)) a_i + shift (x - s) + full_grad, with s the snapshot.
    """
    cdef Py_ssize_t d = A.shape[1], j, t, m = idx.shape[0]
    cdef long i
    cdef double proj, coef
    x_np = np.array(snapshot, dtype=np.float64, copy=True)
    diff_np = np.zeros(d)
    cdef double[::1] x = x_np
    cdef double[::1] diff = diff_np
    with nogil:
        for t in range(m):
            i = idx[t]
            proj = 0.0
            for j in range(d):
                diff[j] = x[j] - snapshot[j]
                proj += A[i, j] * diff[j]
            coef = c[i] * proj
            for j in range(d):
                x[j] -= step * (coef * A[i, j] + shift * diff[j] + full_grad[j])
    return x_np
