# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: full-batch gradient descent and one-sided Jacobi SVD.

Both routines mirror :mod:`shallow_landscape._fallback` operation for
operation; the two are checked against each other in the test suite.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, tanh, erf, sqrt, fabs, isfinite
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

# activation codes shared with activations.KIND_CODES
cdef enum:
    ACT_QUAD = 0
    ACT_SOFTPLUS = 1
    ACT_SIGMOID = 2
    ACT_ERF = 3
    ACT_TANH = 4

cdef enum:
    ST_CONVERGED = 0
    ST_STATIONARY = 1
    ST_BUDGET = 2
    ST_DIVERGED = 3

cdef double SQRT2 = 1.4142135623730951
cdef double TWO_OVER_SQRTPI = 1.1283791670955126

STATUS_CONVERGED = ST_CONVERGED
STATUS_STATIONARY = ST_STATIONARY
STATUS_BUDGET = ST_BUDGET
STATUS_DIVERGED = ST_DIVERGED


cdef inline void _act(int code, double b, double z, double* f, double* fp) noexcept nogil:
    cdef double t, e
    if code == ACT_QUAD:
        f[0] = z * z
        fp[0] = 2.0 * z
    elif code == ACT_SOFTPLUS:
        t = b * z
        if t > 30.0:
            f[0] = z
            fp[0] = 1.0
        elif t < -30.0:
            f[0] = 0.0
            fp[0] = exp(t)
        else:
            e = exp(t)
            f[0] = log1p(e) / b
            fp[0] = e / (1.0 + e)
    elif code == ACT_SIGMOID:
        t = b * z
        if t >= 0:
            e = exp(-t)
            f[0] = 1.0 / (1.0 + e)
        else:
            e = exp(t)
            f[0] = e / (1.0 + e)
        fp[0] = b * f[0] * (1.0 - f[0])
    elif code == ACT_ERF:
        f[0] = SQRT2 * erf(z / SQRT2)
        fp[0] = TWO_OVER_SQRTPI * exp(-0.5 * z * z)
    else:
        t = tanh(z)
        f[0] = t
        fp[0] = 1.0 - t * t


def gd_loop(double[:, ::1] W, double[::1] v, const double[:, ::1] X,
            const double[::1] y, int code, double b, double alpha,
            long max_iters, double loss_tol, double grad_tol, bint train_v,
            long record_every, double[::1] trace):
    """Run gradient descent in place on ``W`` and ``v``.

    Returns ``(iters, loss, grad_norm, status, n_recorded)``; ``trace`` receives
    the loss at iterations 0, record_every, 2*record_every, ... and always the
    final iterate.
    """
    cdef Py_ssize_t k = W.shape[0], d = W.shape[1], n = X.shape[1]
    cdef Py_ssize_t l, j, i
    cdef long it = 0, nrec = 0, cap = trace.shape[0]
    cdef double loss = 0.0, gnorm2, acc, vl, inv_n = 1.0 / n, g
    cdef int status = ST_BUDGET
    cdef int ni = <int>n, ki = <int>k, di = <int>d
    cdef char tn = b'N', tt = b'T'
    cdef double one = 1.0, zero = 0.0
    cdef double[:, ::1] Z = np.empty((k, n))
    cdef double[:, ::1] A = np.empty((k, n))
    cdef double[:, ::1] S = np.empty((k, n))
    cdef double[:, ::1] GW = np.empty((k, d))
    cdef double[::1] gv = np.empty(k)
    cdef double[::1] r = np.empty(n)

    with nogil:
        while True:
            # Z = W X, written as the column-major product X^T-view times W^T-view
            dgemm(&tn, &tn, &ni, &ki, &di, &one, &X[0, 0], &ni, &W[0, 0], &di,
                  &zero, &Z[0, 0], &ni)
            for l in range(k):
                for i in range(n):
                    _act(code, b, Z[l, i], &A[l, i], &S[l, i])
            loss = 0.0
            for i in range(n):
                acc = -y[i]
                for l in range(k):
                    acc += v[l] * A[l, i]
                r[i] = acc
                loss += acc * acc
            loss = 0.5 * loss * inv_n
            if not isfinite(loss):
                status = ST_DIVERGED
                break
            if record_every > 0 and it % record_every == 0 and nrec < cap:
                trace[nrec] = loss
                nrec += 1
            if loss <= loss_tol:
                status = ST_CONVERGED
                break
            for l in range(k):
                for i in range(n):
                    S[l, i] = S[l, i] * r[i]
            # GW = (S o r) X^T, as the column-major product X^T-view^T times S^T-view
            dgemm(&tt, &tn, &di, &ki, &ni, &one, &X[0, 0], &ni, &S[0, 0], &ni,
                  &zero, &GW[0, 0], &di)
            gnorm2 = 0.0
            for l in range(k):
                vl = v[l] * inv_n
                for j in range(d):
                    g = vl * GW[l, j]
                    GW[l, j] = g
                    gnorm2 += g * g
                if train_v:
                    acc = 0.0
                    for i in range(n):
                        acc += A[l, i] * r[i]
                    gv[l] = acc * inv_n
                    gnorm2 += gv[l] * gv[l]
            if sqrt(gnorm2) <= grad_tol:
                status = ST_STATIONARY
                break
            if it >= max_iters:
                status = ST_BUDGET
                break
            for l in range(k):
                for j in range(d):
                    W[l, j] -= alpha * GW[l, j]
                if train_v:
                    v[l] -= alpha * gv[l]
            it += 1

    if record_every > 0 and nrec < cap and (nrec == 0 or (it % record_every) != 0):
        trace[nrec] = loss
        nrec += 1
    return it, loss, sqrt(gnorm2) if status != ST_CONVERGED else float("nan"), status, nrec


def jacobi_svd(double[:, ::1] A, double tol, int max_sweeps):
    """One-sided Jacobi on the columns of ``A`` (m x p, m >= p), in place.

    On return the columns of ``A`` hold U * sigma and the returned ``V`` is the
    accumulated right rotation. Returns ``(V, sweeps, converged)``.
    """
    cdef Py_ssize_t m = A.shape[0], p = A.shape[1]
    cdef Py_ssize_t i, a, c
    cdef double alpha, beta, gamma, zeta, t, cs, sn, x, yv, off, scale, floor
    cdef int sweep = 0
    cdef bint converged = False
    V_arr = np.eye(p)
    cdef double[:, ::1] V = V_arr

    with nogil:
        # columns below this squared norm are rounding noise and count as zero
        floor = 0.0
        for a in range(p):
            for i in range(m):
                floor += A[i, a] * A[i, a]
        floor *= (m * 2.220446049250313e-16) ** 2
        while sweep < max_sweeps:
            off = 0.0
            for a in range(p - 1):
                for c in range(a + 1, p):
                    alpha = 0.0
                    beta = 0.0
                    gamma = 0.0
                    for i in range(m):
                        alpha += A[i, a] * A[i, a]
                        beta += A[i, c] * A[i, c]
                        gamma += A[i, a] * A[i, c]
                    if gamma == 0.0 or alpha <= floor or beta <= floor:
                        continue
                    scale = sqrt(alpha * beta)
                    if scale == 0.0 or fabs(gamma) / scale <= tol:
                        continue
                    if fabs(gamma) / scale > off:
                        off = fabs(gamma) / scale
                    zeta = (beta - alpha) / (2.0 * gamma)
                    if zeta >= 0:
                        t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                    else:
                        t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                    cs = 1.0 / sqrt(1.0 + t * t)
                    sn = cs * t
                    for i in range(m):
                        x = A[i, a]
                        yv = A[i, c]
                        A[i, a] = cs * x - sn * yv
                        A[i, c] = sn * x + cs * yv
                    for i in range(p):
                        x = V[i, a]
                        yv = V[i, c]
                        V[i, a] = cs * x - sn * yv
                        V[i, c] = sn * x + cs * yv
            sweep += 1
            if off <= tol:
                converged = True
                break
    return V_arr, sweep, converged
