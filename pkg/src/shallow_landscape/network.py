"""One-hidden-layer network ``x -> v^T phi(W x)``: loss, derivatives, certificates.

Parameters are laid out as ``[v; vect(W)]`` whenever a flat vector is needed,
with ``vect`` the row-stacking flattening from :mod:`.linalg`. The loss is

    L(v, W) = 1/(2n) sum_i (v^T phi(W x_i) - y_i)^2

and the residual is ``r_i = v^T phi(W x_i) - y_i``.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import linalg
from .activations import QUADRATIC, ActivationSpec
from .errors import DimensionError, SizeCapError, UnsupportedActivationError

HESSIAN_CAP = 2500
CERT_TOL = 1e-8
CURV_TOL = 1e-9


def _as_vector(a, name):
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise DimensionError(f"{name} must be a non-empty 1-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class NetworkParams:
    """Output weights ``v`` (length k) and input weights ``W`` (k x d)."""

    v: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        v = _as_vector(self.v, "v")
        W = linalg.as_matrix(self.W, "W")
        if W.shape[0] != v.shape[0]:
            raise DimensionError(f"v has length {v.shape[0]} but W has {W.shape[0]} rows")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "W", W)

    @property
    def k(self):
        return self.W.shape[0]

    @property
    def d(self):
        return self.W.shape[1]

    def flat(self):
        """Parameters as ``[v; vect(W)]``."""
        return np.concatenate([self.v, linalg.vect(self.W)])

    @classmethod
    def from_flat(cls, theta, k, d):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (k + k * d,):
            raise DimensionError(f"flat vector has shape {theta.shape}, expected ({k + k * d},)")
        return cls(theta[:k].copy(), theta[k:].reshape(k, d).copy())

    def copy(self):
        return NetworkParams(self.v.copy(), self.W.copy())


@dataclass(frozen=True)
class PlantedModel:
    """Ground-truth weights that generated a dataset's labels."""

    v: np.ndarray
    W: np.ndarray
    activation: ActivationSpec

    @property
    def params(self):
        return NetworkParams(self.v, self.W)


@dataclass(frozen=True)
class Dataset:
    """Inputs ``X`` (d x n, one sample per column) and labels ``y`` (length n)."""

    X: np.ndarray
    y: np.ndarray
    planted: Optional[PlantedModel] = None

    def __post_init__(self):
        X = linalg.as_matrix(self.X, "X")
        y = _as_vector(self.y, "y")
        if X.shape[1] != y.shape[0]:
            raise DimensionError(f"X has {X.shape[1]} columns but y has {y.shape[0]} entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.planted is not None:
            p = self.planted
            params = NetworkParams(p.v, p.W)
            object.__setattr__(self, "planted", PlantedModel(params.v, params.W, p.activation))
            if params.d != X.shape[0]:
                raise DimensionError("planted W does not match the input dimension")
            yhat = forward(params, X, p.activation)
            scale = 1.0 + float(np.max(np.abs(y)))
            if np.max(np.abs(yhat - y)) > 1e-10 * scale:
                raise ValueError("labels are inconsistent with the planted model")

    @property
    def d(self):
        return self.X.shape[0]

    @property
    def n(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class LossEval:
    loss: float
    residuals: np.ndarray


def _check(params, X):
    if params.d != X.shape[0]:
        raise DimensionError(f"W has {params.d} columns but inputs have dimension {X.shape[0]}")


def _require_derivs(spec):
    if not spec.differentiable:
        raise UnsupportedActivationError(f"{spec.kind} is not twice differentiable")


def forward(params, X, spec):
    """Network outputs ``v^T phi(W x_i)`` for each column of ``X``."""
    X = np.asarray(X, dtype=float)
    _check(params, X)
    return params.v @ spec.value(params.W @ X)


def loss_and_residuals(params, data, spec):
    _check(params, data.X)
    r = forward(params, data.X, spec) - data.y
    return LossEval(loss=0.5 * float(r @ r) / data.n, residuals=r)


def loss(params, data, spec):
    return loss_and_residuals(params, data, spec).loss


def _pieces(params, data, spec):
    """Pre-activations, activations, slopes and residuals."""
    _check(params, data.X)
    Z = params.W @ data.X
    A = spec.value(Z)
    S = spec.deriv1(Z)
    r = params.v @ A - data.y
    return Z, A, S, r


def grad_W(params, data, spec):
    """``D_v (1/n) sum_i r_i phi'(W x_i) x_i^T``."""
    _require_derivs(spec)
    _, _, S, r = _pieces(params, data, spec)
    return params.v[:, None] * ((S * r) @ data.X.T) / data.n


def grad_v(params, data, spec):
    """``(1/n) phi(W X) r``."""
    _check(params, data.X)
    A = spec.value(params.W @ data.X)
    r = params.v @ A - data.y
    return A @ r / data.n


def gradient(params, data, spec):
    """Full gradient as ``[grad_v; vect(grad_W)]``."""
    _require_derivs(spec)
    _, A, S, r = _pieces(params, data, spec)
    gW = params.v[:, None] * ((S * r) @ data.X.T) / data.n
    return np.concatenate([A @ r / data.n, linalg.vect(gW)])


def jacobian(params, data, spec):
    """``J = D_v phi'(W X) * X`` (Khatri-Rao), of shape kd x n.

    Column ``i`` stacks the blocks ``v_l phi'(w_l^T x_i) x_i`` for l = 1..k, so
    ``vect(grad_W) == J @ r / n``.
    """
    _require_derivs(spec)
    _, _, S, _ = _pieces(params, data, spec)
    return linalg.khatri_rao(params.v[:, None] * S, data.X)


def hessian_quadform_W(params, data, spec, U):
    """``vect(U)^T (Hessian in W) vect(U)`` without forming the Hessian.

    Equals ``(1/n) sum_i r_i x_i^T U^T D_v D_phi''(W x_i) U x_i
    + (1/n) sum_i (v^T D_phi'(W x_i) U x_i)^2``.
    """
    _require_derivs(spec)
    U = np.asarray(U, dtype=float)
    if U.shape != params.W.shape:
        raise DimensionError(f"U has shape {U.shape}, expected {params.W.shape}")
    Z, _, S, r = _pieces(params, data, spec)
    T = spec.deriv2(Z)
    UX = U @ data.X
    v = params.v
    curv = float(np.sum(r * (v @ (T * UX * UX))))
    lin = v @ (S * UX)
    return (curv + float(lin @ lin)) / data.n


def hessian_v(params, data, spec):
    """``(1/n) phi(W X) phi(W X)^T``; always positive semidefinite."""
    _check(params, data.X)
    A = spec.value(params.W @ data.X)
    return A @ A.T / data.n


def hessian_size(k, d):
    return k + k * d


def full_hessian(params, data, spec, cap=HESSIAN_CAP):
    """Dense Hessian in the ``[v; vect(W)]`` layout.

    Raises :class:`SizeCapError` when ``k + kd`` exceeds ``cap``.
    """
    _require_derivs(spec)
    k, d = params.k, params.d
    size = hessian_size(k, d)
    if size > cap:
        raise SizeCapError(f"Hessian of size {size} exceeds the assembly cap {cap}")
    Z, A, S, r = _pieces(params, data, spec)
    X = data.X
    n = data.n
    v = params.v
    T = spec.deriv2(Z)
    J = linalg.khatri_rao(v[:, None] * S, X)
    H = np.empty((size, size))
    HWW = J @ J.T / n
    for l in range(k):
        blk = slice(l * d, (l + 1) * d)
        HWW[blk, blk] += (X * (r * v[l] * T[l])) @ X.T / n
    H[k:, k:] = HWW
    H[:k, :k] = A @ A.T / n
    cross = A @ J.T / n
    for l in range(k):
        cross[l, l * d:(l + 1) * d] += X @ (r * S[l]) / n
    H[:k, k:] = cross
    H[k:, :k] = cross.T
    return H


def full_hessian_W(params, data, spec, cap=HESSIAN_CAP):
    """Dense Hessian with respect to ``W`` alone (kd x kd)."""
    _require_derivs(spec)
    k, d = params.k, params.d
    if k * d > cap:
        raise SizeCapError(f"Hessian of size {k * d} exceeds the assembly cap {cap}")
    Z, _, S, r = _pieces(params, data, spec)
    X = data.X
    n = data.n
    v = params.v
    T = spec.deriv2(Z)
    J = linalg.khatri_rao(v[:, None] * S, X)
    H = J @ J.T / n
    for l in range(k):
        H[l * d:(l + 1) * d, l * d:(l + 1) * d] += (X * (r * v[l] * T[l])) @ X.T / n
    return H


# Closed forms for the quadratic activation phi(z) = z^2.

def residual_moment_matrix(params, data):
    """``G = (1/n) sum_i r_i x_i x_i^T`` under the quadratic activation."""
    r = loss_and_residuals(params, data, QUADRATIC).residuals
    return (data.X * r) @ data.X.T / data.n


def grad_W_quadratic(params, data):
    """``2 D_v W G``."""
    G = residual_moment_matrix(params, data)
    return 2.0 * params.v[:, None] * (params.W @ G)


def jacobian_quadratic(params, data):
    """``2 D_v (W X) * X``."""
    return linalg.khatri_rao(2.0 * params.v[:, None] * (params.W @ data.X), data.X)


def hessian_quadform_W_quadratic(params, data, U):
    """``(2/n) sum_i r_i x_i^T U^T D_v U x_i + (4/n) sum_i (x_i^T W^T D_v U x_i)^2``.

    The factor 4 on the second term follows from ``phi' = 2z`` squared; a
    factor of 2 there would disagree with finite differences.
    """
    U = np.asarray(U, dtype=float)
    G = residual_moment_matrix(params, data)
    v = params.v
    first = 2.0 * float(np.sum(G * (U.T @ (v[:, None] * U))))
    q = np.einsum("ij,ij->j", params.W @ data.X, v[:, None] * (U @ data.X))
    return first + 4.0 * float(q @ q) / data.n


@dataclass(frozen=True)
class GlobalCertificate:
    is_global: bool
    residual_matrix_norm: float
    threshold: float


def quadratic_global_certificate(params, data, cert_tol=CERT_TOL):
    """Check ``(1/n) sum_i r_i x_i x_i^T = 0``, which certifies a global optimum.

    The loss is convex in ``M = W^T D_v W`` and ``G`` is its gradient, so a
    vanishing ``G`` means no feasible ``M`` does better.
    """
    G = residual_moment_matrix(params, data)
    Y = (data.X * data.y) @ data.X.T / data.n
    norm = float(np.linalg.norm(G))
    threshold = cert_tol * (1.0 + float(np.linalg.norm(Y)))
    return GlobalCertificate(is_global=norm <= threshold, residual_matrix_norm=norm,
                             threshold=threshold)


@dataclass(frozen=True)
class CurvatureDirection:
    """Outcome of the negative-curvature search.

    ``U`` and ``curvature`` are None unless ``found``. ``reason`` is one of
    ``found``, ``global_optimum``, ``no_null_direction`` or
    ``nonnegative_curvature``.
    """

    U: Optional[np.ndarray]
    curvature: Optional[float]
    reason: str
    sign_set: Optional[str] = None

    @property
    def found(self):
        return self.reason == "found"


def _null_vectors(M):
    """Orthonormal basis of the null space of ``M^T`` for a p x d matrix ``M``."""
    p = M.shape[0]
    if not np.any(M):
        return np.eye(p)
    res = linalg.svd(M.T)
    s = res.singular_values
    tol = 1e-10 * max(1.0, float(s[0])) * max(M.shape)
    rank = int(np.sum(s > tol))
    if p <= M.shape[1]:
        return res.V[:, rank:]
    # M^T is d x p with p > d: the thin SVD only spans the row space, so
    # complete it to recover every null direction
    V = res.V[:, :rank]
    Q, _ = np.linalg.qr(np.hstack([V, np.eye(p)]))
    return Q[:, rank:p]


def negative_curvature_direction(params, data, curv_tol=CURV_TOL, cert_tol=CERT_TOL):
    """Build ``U = a b^T`` with ``W^T D_v a = 0`` and negative curvature (quadratic phi).

    For such ``a`` the second Hessian term vanishes and the quadform reduces
    to ``2 (a^T D_v a) b^T G b``. ``a`` is drawn from the null space of the
    rows of ``D_v W`` on one sign set, which fixes the sign of ``a^T D_v a``,
    and ``b`` is the eigenvector making ``b^T G b`` as negative as possible
    after that sign is applied.
    """
    cert = quadratic_global_certificate(params, data, cert_tol)
    if cert.is_global:
        return CurvatureDirection(None, None, "global_optimum")
    v, W = params.v, params.W
    G = residual_moment_matrix(params, data)
    DW = v[:, None] * W
    best = None
    any_null = False
    for name, idx in (("positive", np.flatnonzero(v > 0)), ("negative", np.flatnonzero(v < 0))):
        if idx.size == 0:
            continue
        N = _null_vectors(DW[idx])
        if N.shape[1] == 0:
            continue
        any_null = True
        a = np.zeros(params.k)
        a[idx] = N[:, 0]
        q = float(a @ (v * a))
        sign = 1.0 if q > 0 else -1.0
        evals, evecs = np.linalg.eigh(sign * G)
        b = evecs[:, 0]
        curvature = 2.0 * abs(q) * float(evals[0])
        if best is None or curvature < best[1]:
            best = (np.outer(a, b), curvature, name)
    if not any_null:
        return CurvatureDirection(None, None, "no_null_direction")
    U, curvature, name = best
    if curvature > -curv_tol:
        return CurvatureDirection(None, None, "nonnegative_curvature")
    return CurvatureDirection(U, curvature, "found", name)
