# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: stabilized Sinkhorn and prefix LIS alignment.

Same algorithms as ``_pykernels``; results agree to floating-point
summation order.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY

cnp.import_array()

cdef double _ABSORB = 1e50
cdef double _STAGE_TOL = 1e-3
cdef int _STAGE_ITERS = 10
cdef double _EPS_DECAY = 0.25


cdef int _lis(long[::1] seq, Py_ssize_t n, long[::1] tails) noexcept nogil:
    cdef Py_ssize_t i, lo, hi, mid, size = 0
    cdef long x
    for i in range(n):
        x = seq[i]
        lo = 0
        hi = size
        while lo < hi:
            mid = (lo + hi) >> 1
            if tails[mid] < x:
                lo = mid + 1
            else:
                hi = mid
        tails[lo] = x
        if lo == size:
            size += 1
    return <int>size


def lis_length(seq):
    cdef long[::1] s = np.ascontiguousarray(seq, dtype=np.int64)
    cdef Py_ssize_t n = s.shape[0]
    if n == 0:
        return 0
    cdef long[::1] tails = np.empty(n, dtype=np.int64)
    return _lis(s, n, tails)


cdef void _argmin_rows(const double[:, ::1] C, Py_ssize_t n, long[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, best
    cdef double bv
    for i in range(n):
        best = 0
        bv = C[i, 0]
        for j in range(1, n):
            if C[i, j] < bv:
                bv = C[i, j]
                best = j
        out[i] = best


def prefix_nn_indices(C, Py_ssize_t n):
    cdef const double[:, ::1] Cv = np.ascontiguousarray(C, dtype=np.float64)
    out = np.empty(n, dtype=np.int64)
    cdef long[::1] ov = out
    _argmin_rows(Cv, n, ov)
    return out


def prefix_alignment(C, Py_ssize_t n):
    cdef const double[:, ::1] Cv = np.ascontiguousarray(C, dtype=np.float64)
    cdef long[::1] p = np.empty(n, dtype=np.int64)
    cdef long[::1] tails = np.empty(n, dtype=np.int64)
    _argmin_rows(Cv, n, p)
    return _lis(p, n, tails)


cdef void _build_kernel(const double[:, ::1] C, double[::1] f, double[::1] g, double eps,
                        double[:, ::1] K) noexcept nogil:
    cdef Py_ssize_t i, j, n = C.shape[0]
    for i in range(n):
        for j in range(n):
            K[i, j] = exp((f[i] + g[j] - C[i, j]) / eps)


cdef double _iterate(double[:, ::1] K, double[::1] u, double[::1] v, double[::1] Kv,
                     double a) noexcept nogil:
    """One full Sinkhorn sweep; returns the max row-marginal error afterwards."""
    cdef Py_ssize_t i, j, n = K.shape[0]
    cdef double s, err = 0.0
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += K[i, j] * v[j]
        u[i] = a / s
    for j in range(n):
        v[j] = 0.0
    for i in range(n):
        for j in range(n):
            v[j] += K[i, j] * u[i]
    for j in range(n):
        v[j] = a / v[j]
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += K[i, j] * v[j]
        s = fabs(u[i] * s - a)
        if s > err:
            err = s
    return err


cdef bint _needs_absorb(double[::1] u, double[::1] v) noexcept nogil:
    cdef Py_ssize_t i, n = u.shape[0]
    for i in range(n):
        if u[i] > _ABSORB or v[i] > _ABSORB or u[i] < 1.0 / _ABSORB or v[i] < 1.0 / _ABSORB:
            return True
    return False


cdef void _absorb(double[::1] f, double[::1] g, double[::1] u, double[::1] v, double eps) noexcept nogil:
    cdef Py_ssize_t i, n = u.shape[0]
    for i in range(n):
        f[i] += eps * log(u[i])
        g[i] += eps * log(v[i])
        u[i] = 1.0
        v[i] = 1.0


def sinkhorn_potentials(C, double eps, int max_iters, double tol):
    cdef const double[:, ::1] Cv = np.ascontiguousarray(C, dtype=np.float64)
    cdef Py_ssize_t n = Cv.shape[0], i
    cdef double a = 1.0 / n
    f_arr = np.zeros(n)
    g_arr = np.zeros(n)
    bf_arr = np.zeros(n)
    bg_arr = np.zeros(n)
    cdef double[::1] f = f_arr, g = g_arr, bf = bf_arr, bg = bg_arr
    cdef double[::1] u = np.ones(n), v = np.ones(n), Kv = np.empty(n)
    cdef double[:, ::1] K = np.empty((n, n))
    cdef double cmax = np.max(np.asarray(Cv))
    cdef double cur = cmax if cmax > eps else eps
    cdef double err, best = INFINITY
    cdef int iters = 0, stage
    cdef bint last = False
    with nogil:
        while True:
            last = cur <= eps
            if last:
                cur = eps
            _build_kernel(Cv, f, g, cur, K)
            for i in range(n):
                u[i] = 1.0
                v[i] = 1.0
            stage = 0
            while iters < max_iters:
                err = _iterate(K, u, v, Kv, a)
                iters += 1
                stage += 1
                if last and err < best:
                    best = err
                    for i in range(n):
                        bf[i] = f[i] + cur * log(u[i])
                        bg[i] = g[i] + cur * log(v[i])
                if last and err < tol:
                    break
                if not last and (err < _STAGE_TOL or stage >= _STAGE_ITERS):
                    break
                if _needs_absorb(u, v):
                    _absorb(f, g, u, v, cur)
                    _build_kernel(Cv, f, g, cur, K)
            _absorb(f, g, u, v, cur)
            if last or iters >= max_iters:
                break
            cur = cur * _EPS_DECAY
            if cur < eps:
                cur = eps
    if not last or best == INFINITY:
        P = np.exp((f_arr[:, None] + g_arr[None, :] - np.asarray(Cv)) / cur)
        err = float(np.max(np.abs(P.sum(axis=1) - a)))
        return f_arr, g_arr, err, iters, False, cur
    return bf_arr, bg_arr, best, iters, best < tol, eps
