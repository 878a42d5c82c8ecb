"""Pure numpy versions of the routines in ``_core.pyx``.

Used when the compiled extension is unavailable or when
``SHALLOW_LANDSCAPE_PURE=1`` is set. Signatures and return values match the
compiled kernels exactly.
"""
import numpy as np
from scipy.special import erf

STATUS_CONVERGED = 0
STATUS_STATIONARY = 1
STATUS_BUDGET = 2
STATUS_DIVERGED = 3

_SQRT2 = np.sqrt(2.0)
_TWO_OVER_SQRTPI = 2.0 / np.sqrt(np.pi)


def act_value_and_slope(code, b, Z):
    """Return ``(phi(Z), phi'(Z))`` for an activation code."""
    if code == 0:
        return Z * Z, 2.0 * Z
    if code == 1:
        t = b * Z
        mid = np.abs(t) <= 30.0
        e = np.exp(np.where(mid, t, 0.0))
        f = np.where(t > 30.0, Z, np.where(mid, np.log1p(e) / b, 0.0))
        fp = np.where(t > 30.0, 1.0, np.where(mid, e / (1.0 + e), np.exp(np.minimum(t, 0.0))))
        return f, fp
    if code == 2:
        t = b * Z
        e = np.exp(-np.abs(t))
        f = np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return f, b * f * (1.0 - f)
    if code == 3:
        return _SQRT2 * erf(Z / _SQRT2), _TWO_OVER_SQRTPI * np.exp(-0.5 * Z * Z)
    t = np.tanh(Z)
    return t, 1.0 - t * t


def gd_loop(W, v, X, y, code, b, alpha, max_iters, loss_tol, grad_tol,
            train_v, record_every, trace):
    n = X.shape[1]
    it = 0
    nrec = 0
    cap = trace.shape[0]
    gnorm2 = 0.0
    status = STATUS_BUDGET
    while True:
        A, S = act_value_and_slope(code, b, W @ X)
        r = v @ A - y
        loss = 0.5 * float(r @ r) / n
        if not np.isfinite(loss):
            status = STATUS_DIVERGED
            break
        if record_every > 0 and it % record_every == 0 and nrec < cap:
            trace[nrec] = loss
            nrec += 1
        if loss <= loss_tol:
            status = STATUS_CONVERGED
            break
        GW = (v / n)[:, None] * ((S * r) @ X.T)
        gnorm2 = float(np.sum(GW * GW))
        if train_v:
            gv = (A @ r) / n
            gnorm2 += float(gv @ gv)
        if np.sqrt(gnorm2) <= grad_tol:
            status = STATUS_STATIONARY
            break
        if it >= max_iters:
            status = STATUS_BUDGET
            break
        W -= alpha * GW
        if train_v:
            v -= alpha * gv
        it += 1
    if record_every > 0 and nrec < cap and (nrec == 0 or it % record_every != 0):
        trace[nrec] = loss
        nrec += 1
    gnorm = np.sqrt(gnorm2) if status != STATUS_CONVERGED else float("nan")
    return it, loss, gnorm, status, nrec


def jacobi_svd(A, tol, max_sweeps):
    m, p = A.shape
    V = np.eye(p)
    sweep = 0
    converged = False
    # columns below this squared norm are rounding noise and count as zero
    floor = float(np.sum(A * A)) * (m * np.finfo(float).eps) ** 2
    while sweep < max_sweeps:
        off = 0.0
        for a in range(p - 1):
            for c in range(a + 1, p):
                ca = A[:, a]
                cc = A[:, c]
                alpha = ca @ ca
                beta = cc @ cc
                gamma = ca @ cc
                if gamma == 0.0 or alpha <= floor or beta <= floor:
                    continue
                scale = np.sqrt(alpha * beta)
                if scale == 0.0 or abs(gamma) / scale <= tol:
                    continue
                off = max(off, abs(gamma) / scale)
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0:
                    t = 1.0 / (zeta + np.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + np.sqrt(1.0 + zeta * zeta))
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = cs * t
                xa = ca.copy()
                A[:, a] = cs * xa - sn * cc
                A[:, c] = sn * xa + cs * cc
                va = V[:, a].copy()
                V[:, a] = cs * va - sn * V[:, c]
                V[:, c] = sn * va + cs * V[:, c]
        sweep += 1
        if off <= tol:
            converged = True
            break
    return V, sweep, converged
