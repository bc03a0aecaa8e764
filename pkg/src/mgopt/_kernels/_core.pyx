# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Semantics mirror ``_pure`` exactly; see that module for documentation.
"""

import numpy as np

cimport cython
from libc.math cimport fabs, sqrt


cdef inline double _clip(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef void _grad(const double[:, ::1] A, const double[::1] x, const double[::1] b,
                double[::1] out) nogil:
    cdef Py_ssize_t i, j, n = A.shape[0]
    cdef double acc
    for i in range(n):
        acc = b[i]
        for j in range(n):
            acc += A[i, j] * x[j]
        out[i] = acc


cdef double _natural_residual(const double[::1] x, const double[::1] g,
                              const double[::1] lo, const double[::1] up) nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double r = 0.0, dev
    for i in range(n):
        dev = fabs(x[i] - _clip(x[i] - g[i], lo[i], up[i]))
        if dev > r:
            r = dev
    return r


cdef long _pg_loop(const double[:, ::1] A, const double[::1] b,
                   const double[::1] lo, const double[::1] up,
                   double[::1] x, double[::1] g,
                   double step, double tol, long max_iter,
                   double* residual_out) nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef long iters = 0
    cdef double residual
    _grad(A, x, b, g)
    residual = _natural_residual(x, g, lo, up)
    while residual > tol and iters < max_iter:
        for i in range(n):
            x[i] = _clip(x[i] - step * g[i], lo[i], up[i])
        _grad(A, x, b, g)
        residual = _natural_residual(x, g, lo, up)
        iters += 1
    residual_out[0] = residual
    return iters


def boxqp_pg(A, b, lower, upper, x0, double step, double tol, long max_iter):
    A = np.ascontiguousarray(A, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    lower = np.ascontiguousarray(lower, dtype=np.float64)
    upper = np.ascontiguousarray(upper, dtype=np.float64)
    x = np.clip(np.asarray(x0, dtype=np.float64), lower, upper)
    g = np.empty_like(x)
    cdef double residual = 0.0
    cdef long iters
    cdef double[:, ::1] Av = A
    cdef double[::1] bv = b, lov = lower, upv = upper, xv = x, gv = g
    with nogil:
        iters = _pg_loop(Av, bv, lov, upv, xv, gv, step, tol, max_iter, &residual)
    return x, residual, iters


def boxqp_track(A, B, lower, upper, x0, double step, double tol, long max_iter):
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    lower = np.ascontiguousarray(lower, dtype=np.float64)
    upper = np.ascontiguousarray(upper, dtype=np.float64)
    cdef Py_ssize_t T = B.shape[0], n = B.shape[1], k, i
    X = np.empty((T, n))
    residuals = np.empty(T)
    iterations = np.empty(T, dtype=np.int64)
    x = np.asarray(x0, dtype=np.float64).copy()
    g = np.empty(n)
    cdef double[:, ::1] Av = A, Bv = B, lov = lower, upv = upper, Xv = X
    cdef double[::1] xv = x, gv = g, resv = residuals
    cdef long[::1] itv = iterations
    cdef double residual = 0.0
    with nogil:
        for k in range(T):
            for i in range(n):
                xv[i] = _clip(xv[i], lov[k, i], upv[k, i])
            itv[k] = _pg_loop(Av, Bv[k], lov[k], upv[k], xv, gv,
                              step, tol, max_iter, &residual)
            resv[k] = residual
            for i in range(n):
                Xv[k, i] = xv[i]
    return X, residuals, iterations


def pogd_run(A, B, lower, upper, x0, double h):
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    lower = np.ascontiguousarray(lower, dtype=np.float64)
    upper = np.ascontiguousarray(upper, dtype=np.float64)
    cdef Py_ssize_t T = B.shape[0], n = B.shape[1], k, i
    X = np.empty((T, n))
    x = np.asarray(x0, dtype=np.float64).copy()
    g = np.empty(n)
    cdef double[:, ::1] Av = A, Bv = B, lov = lower, upv = upper, Xv = X
    cdef double[::1] xv = x, gv = g
    with nogil:
        for k in range(T):
            _grad(Av, xv, Bv[k], gv)
            for i in range(n):
                xv[i] = _clip(xv[i] - h * gv[i], lov[k, i], upv[k, i])
                Xv[k, i] = xv[i]
    return X


def cb_run(F, G, row, A, B, lower, upper, x0, W0, double rho, project):
    F = np.ascontiguousarray(F, dtype=np.float64)
    G = np.ascontiguousarray(G, dtype=np.float64)
    row = np.ascontiguousarray(row, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    lower = np.ascontiguousarray(lower, dtype=np.float64)
    upper = np.ascontiguousarray(upper, dtype=np.float64)
    cdef Py_ssize_t T = B.shape[0], n = B.shape[1], m = G.shape[0]
    cdef Py_ssize_t k, i, a, c
    X_raw = np.empty((T, n))
    X_feas = np.empty((T, n))
    W = np.asarray(W0, dtype=np.float64).copy()
    W2 = np.empty_like(W)
    x_raw = np.asarray(x0, dtype=np.float64).copy()
    if project:
        x_raw = np.clip(x_raw, lower[0], upper[0])
    x_feas = x_raw.copy()
    drive = np.empty(n)
    cdef double[:, ::1] Fv = F, Av = A, Bv = B, lov = lower, upv = upper
    cdef double[:, ::1] Wv = W, W2v = W2, Xrv = X_raw, Xfv = X_feas
    cdef double[::1] Gv = G, rowv = row, xrv = x_raw, xfv = x_feas, dv = drive
    cdef bint proj = bool(project)
    cdef double acc
    with nogil:
        for k in range(T):
            for i in range(n):
                acc = Bv[k, i]
                for c in range(n):
                    acc += Av[i, c] * xfv[c]
                if rho != 0.0:
                    acc -= rho * (xfv[i] - xrv[i])
                dv[i] = acc
            for a in range(m):
                for i in range(n):
                    acc = Gv[a] * dv[i]
                    for c in range(m):
                        acc += Fv[a, c] * Wv[c, i]
                    W2v[a, i] = acc
            for a in range(m):
                for i in range(n):
                    Wv[a, i] = W2v[a, i]
            for i in range(n):
                acc = 0.0
                for a in range(m):
                    acc += rowv[a] * Wv[a, i]
                xrv[i] = acc
                if proj:
                    xfv[i] = _clip(acc, lov[k, i], upv[k, i])
                else:
                    xfv[i] = acc
                Xrv[k, i] = xrv[i]
                Xfv[k, i] = xfv[i]
    return X_raw, X_feas, W


cdef int _cholesky_ok(const double[:, ::1] M, double[:, ::1] work) nogil:
    cdef Py_ssize_t i, j, t, m = M.shape[0]
    cdef double acc
    for i in range(m):
        for j in range(m):
            work[i, j] = M[i, j]
    for j in range(m):
        acc = work[j, j]
        for t in range(j):
            acc -= work[j, t] * work[j, t]
        if acc <= 0.0:
            return 0
        work[j, j] = sqrt(acc)
        for i in range(j + 1, m):
            acc = work[i, j]
            for t in range(j):
                acc -= work[i, t] * work[j, t]
            work[i, j] = acc / work[j, j]
    return 1


def rls_update(d_hat, P, phi, double target, double alpha, double reinit_delta):
    d_hat = np.ascontiguousarray(d_hat, dtype=np.float64)
    P = np.ascontiguousarray(P, dtype=np.float64)
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    cdef Py_ssize_t i, j, m = d_hat.shape[0]
    d_new = np.empty(m)
    P_new = np.empty((m, m))
    Pphi = np.empty(m)
    work = np.empty((m, m))
    cdef double[::1] dv = d_hat, phv = phi, dnv = d_new, ppv = Pphi
    cdef double[:, ::1] Pv = P, Pnv = P_new, wv = work
    cdef double s, innovation, acc, a_post
    cdef int ok
    cdef int reinitialized = 0
    with nogil:
        s = alpha
        innovation = target
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += Pv[i, j] * phv[j]
            ppv[i] = acc
            s += phv[i] * acc
            innovation -= phv[i] * dv[i]
        for i in range(m):
            dnv[i] = dv[i] + (ppv[i] / s) * innovation
        for i in range(m):
            for j in range(m):
                Pnv[i, j] = (Pv[i, j] - ppv[i] * ppv[j] / s) / alpha
        for i in range(m):
            for j in range(i + 1, m):
                acc = 0.5 * (Pnv[i, j] + Pnv[j, i])
                Pnv[i, j] = acc
                Pnv[j, i] = acc
        ok = _cholesky_ok(Pnv, wv)
        if not ok:
            for i in range(m):
                for j in range(m):
                    Pnv[i, j] = reinit_delta if i == j else 0.0
            reinitialized = 1
        a_post = target
        for i in range(m):
            a_post -= phv[i] * dnv[i]
        a_post = fabs(a_post)
    return d_new, P_new, a_post, reinitialized
