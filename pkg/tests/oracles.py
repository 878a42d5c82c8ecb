"""Independent reference implementations used only by the tests.

Each oracle is written from the defining formula with plain loops or a
different algorithm from the package, so agreement is meaningful.
"""
import math

import numpy as np


def jacobi_eigvalsh(S, tol=1e-14, max_sweeps=100):
    """Eigenvalues of a symmetric matrix by the classical two-sided Jacobi method."""
    A = np.array(S, dtype=float)
    n = A.shape[0]
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(A ** 2) - np.sum(np.diag(A) ** 2))
        if off <= tol * max(1.0, np.linalg.norm(A)):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                R = np.eye(n)
                R[p, p] = R[q, q] = c
                R[p, q] = s
                R[q, p] = -s
                A = R.T @ A @ R
    return np.sort(np.diag(A))


def jacobi_singular_values(A):
    """Singular values from the Jacobi eigenvalues of ``A^T A`` (or ``A A^T``)."""
    A = np.asarray(A, dtype=float)
    G = A.T @ A if A.shape[0] >= A.shape[1] else A @ A.T
    ev = jacobi_eigvalsh(G)
    return np.sqrt(np.clip(ev, 0.0, None))[::-1]


def naive_loss(v, W, X, y, phi):
    """``(1/2n) sum_i (sum_l v_l phi(w_l . x_i) - y_i)^2`` by explicit loops."""
    k, d = W.shape
    n = X.shape[1]
    total = 0.0
    for i in range(n):
        f = 0.0
        for l in range(k):
            z = 0.0
            for j in range(d):
                z += W[l, j] * X[j, i]
            f += v[l] * float(phi(z))
        total += (f - y[i]) ** 2
    return total / (2.0 * n)


def fd_gradient(fun, x, h_rel=1e-6):
    """Central differences with step ``h_rel * (1 + |x_j|)``."""
    x = np.array(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        h = h_rel * (1.0 + abs(x.flat[j]))
        xp = x.copy()
        xm = x.copy()
        xp.flat[j] += h
        xm.flat[j] -= h
        g.flat[j] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g


def fd_hessian(fun, x, h=1e-4):
    x = np.array(x, dtype=float)
    m = x.size
    H = np.empty((m, m))
    for a in range(m):
        for b in range(m):
            e_a = np.zeros(m)
            e_b = np.zeros(m)
            e_a[a] = h
            e_b[b] = h
            H[a, b] = (fun(x + e_a + e_b) - fun(x + e_a - e_b)
                       - fun(x - e_a + e_b) + fun(x - e_a - e_b)) / (4.0 * h * h)
    return H


def second_difference(fun, h=1e-4):
    return (fun(h) - 2.0 * fun(0.0) + fun(-h)) / (h * h)


def monte_carlo_moments(deriv1, deriv2, sigma, samples=400_000, seed=12345):
    g = np.random.default_rng(seed).standard_normal(samples)
    a = deriv1(sigma * g)
    b = deriv2(sigma * g)
    return (float(a.mean()), float(a.std() / math.sqrt(samples)),
            float(b.mean()), float(b.std() / math.sqrt(samples)))


def newton_logistic(x, s, t, iters=100):
    """Unregularized Bernoulli-logistic MLE by plain Newton, for non-separated data."""
    x = np.asarray(x, float)
    s = np.asarray(s, float)
    t = np.asarray(t, float)
    b = np.zeros(2)
    Xd = np.column_stack([np.ones_like(x), x])
    for _ in range(iters):
        p = 1.0 / (1.0 + np.exp(-(Xd @ b)))
        grad = Xd.T @ (s - t * p)
        H = (Xd * (t * p * (1 - p))[:, None]).T @ Xd
        b = b + np.linalg.solve(H, grad)
    return b
