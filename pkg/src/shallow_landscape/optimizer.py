"""Gradient descent, local-convergence constants, initializations, and
approximate-local-minimum classification.
"""
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from . import kernels, linalg, network
from .activations import ActivationSpec
from .errors import ConvergenceError, DivergenceError, SizeCapError, UnsupportedActivationError
from .network import Dataset, NetworkParams
from .rng import Stream

DEFAULT_LOSS_TOL = 1e-10
DEFAULT_GRAD_TOL = 1e-8
DEFAULT_MAX_ITERS = 100_000
DEFAULT_RECORD_EVERY = 100
# minimum Hessian eigenvalue below which a stationary point counts as a saddle
SADDLE_TOL = 1e-6
STEP_RULES = ("auto", "hessian", "adaptive")


@dataclass(frozen=True)
class CalibratedConstants:
    """Stand-ins for the unnamed absolute constants in the local convergence theory.

    ``c`` and ``C`` bound the Jacobian spectrum at the planted point,
    ``sigma_min(J) >= c sigma_min(W*) d`` and ``sigma_max(J) <= C sigma_max(W*) sqrt(nk)``;
    ``C_pert`` is the Jacobian perturbation constant that sets the trust
    radius; ``C0`` scales the initialization radii. Defaults come from the
    ``calibrate`` command (see :func:`shallow_landscape.landscape.calibrate_constants`).
    """

    c: float = 0.01576
    C: float = 0.7499
    C_pert: float = 0.7499
    C0: float = 1.0


CONSTANTS = CalibratedConstants()


@dataclass(frozen=True)
class GdConfig:
    """Gradient descent settings.

    ``step_size`` is a positive float, ``"auto"`` (``1/beta``),
    ``"hessian"`` (``step_scale / lambda_max`` of the Hessian at the starting
    point) or ``"adaptive"`` (the same rule re-evaluated at the current
    iterate every ``adapt_every`` updates). An adaptive segment that ends with
    a larger loss than it started with is undone and retried with half the
    scale, so the recorded loss never increases across segments.
    """

    step_size: Union[float, str] = "auto"
    max_iters: int = DEFAULT_MAX_ITERS
    loss_tol: float = DEFAULT_LOSS_TOL
    grad_tol: float = DEFAULT_GRAD_TOL
    record_every: int = DEFAULT_RECORD_EVERY
    step_scale: float = 0.5
    adapt_every: int = 2000

    def __post_init__(self):
        if isinstance(self.step_size, str):
            if self.step_size not in STEP_RULES:
                raise ValueError(f"step_size must be a number or one of {STEP_RULES}, got {self.step_size!r}")
        elif not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not (self.loss_tol > 0 and self.grad_tol > 0):
            raise ValueError("loss_tol and grad_tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")
        if not self.step_scale > 0:
            raise ValueError("step_scale must be positive")
        if self.adapt_every < 1:
            raise ValueError("adapt_every must be at least 1")


@dataclass(frozen=True)
class ConvergenceConstants:
    beta: float
    m_L: float
    m_U: float
    m_tilde_U: float
    R: float
    constants: CalibratedConstants = field(default_factory=CalibratedConstants)


@dataclass
class TrialRecord:
    seed: Optional[int]
    init_kind: str
    final_loss: float
    iters_used: int
    loss_trace: list
    reached_global: bool
    classification: str
    step_size: float
    grad_norm: float = float("nan")
    min_hessian_eig: Optional[float] = None
    params: Optional[NetworkParams] = field(default=None, repr=False, compare=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("params")
        d["loss_trace"] = [[int(t), float(x)] for t, x in self.loss_trace]
        return d


@dataclass(frozen=True)
class ApproxMinReport:
    eps_g: float
    eps_H: float
    grad_norm: float
    min_hessian_eig: float
    loss_value: float
    is_approx_min: bool
    thm2_rhs: Optional[float] = None


def _derivative_bound(spec, planted, data):
    """``(B, L)``; for the quadratic activation ``B`` is measured on the data."""
    B, L = spec.deriv1_bound, spec.deriv2_bound
    if spec.kind == "quadratic":
        if data is None:
            raise UnsupportedActivationError("quadratic beta needs data to bound phi'")
        B = float(np.max(np.abs(spec.deriv1(planted.W @ data.X))))
    if not (math.isfinite(B) and math.isfinite(L)):
        raise UnsupportedActivationError(f"{spec.kind} has unbounded derivatives")
    return B, L


def compute_beta(planted, spec, k=None, data=None, constants=CONSTANTS):
    """Smoothness constant on the local region around the planted weights.

    ``beta = (3 C^2 s_max^2(W*) + 8 v_max^2 B L + 4 B^2 w_max^2 + 2 phi(0)^2) k``
    with ``v_max = max |v*_l|`` and ``w_max = max ||w*_l||``.
    """
    k = planted.k if k is None else k
    B, L = _derivative_bound(spec, planted, data)
    smax = linalg.sigma_max(planted.W) if np.any(planted.W) else 0.0
    v_max = float(np.max(np.abs(planted.v)))
    w_max = float(np.max(np.linalg.norm(planted.W, axis=1)))
    inner = (3.0 * constants.C ** 2 * smax ** 2 + 8.0 * v_max ** 2 * B * L
             + 4.0 * B ** 2 * w_max ** 2 + 2.0 * spec.phi0 ** 2)
    return inner * k


def convergence_constants(planted, spec, n, data=None, constants=CONSTANTS):
    """``beta``, the gradient-domination constants and the trust radius ``R``.

    Under the zero-curvature moment class ``sigma_min(W*)`` is replaced by 1.
    """
    k, d = planted.k, planted.d
    B, _ = _derivative_bound(spec, planted, data)
    res = linalg.svd(planted.W)
    smin = 1.0 if spec.moment_class == "mu_nonzero_gamma_zero" else res.sigma_min
    w_max = float(np.max(np.linalg.norm(planted.W, axis=1)))
    c, C = constants.c, constants.C
    return ConvergenceConstants(
        beta=compute_beta(planted, spec, k, data, constants),
        m_L=0.5 * c ** 2 * smin ** 2 * d ** 2 / n,
        m_U=4.5 * C ** 2 * res.sigma_max ** 2 * k,
        m_tilde_U=4.0 * spec.phi0 ** 2 + 128.0 * B ** 2 + 128.0 * B ** 2 * w_max ** 2,
        R=c / (4.0 * constants.C_pert) * smin * math.sqrt(d / n),
        constants=constants,
    )


def hessian_vector_product(params, data, spec, dv, dW):
    """Exact Hessian-vector product for the direction ``(dv, dW)``."""
    v, W, X, n = params.v, params.W, data.X, data.n
    Z = W @ X
    A = spec.value(Z)
    S = spec.deriv1(Z)
    T = spec.deriv2(Z)
    r = v @ A - data.y
    dZ = dW @ X
    dA = S * dZ
    df = dv @ A + v @ dA
    hv = (dA @ r + A @ df) / n
    M = dv[:, None] * (S * r) + v[:, None] * (T * dZ * r + S * df)
    hW = M @ X.T / n
    return hv, hW


def _hessian_operator(params, data, spec, train_v):
    k, d = params.k, params.d
    size = k * d + (k if train_v else 0)

    def matvec(x):
        x = np.asarray(x, dtype=float).ravel()
        if train_v:
            dv, dW = x[:k], x[k:].reshape(k, d)
        else:
            dv, dW = np.zeros(k), x.reshape(k, d)
        hv, hW = hessian_vector_product(params, data, spec, dv, dW)
        out = linalg.vect(hW)
        return np.concatenate([hv, out]) if train_v else out

    return LinearOperator((size, size), matvec=matvec, dtype=float)


def _dense_hessian(params, data, spec, train_v, cap):
    if train_v:
        return network.full_hessian(params, data, spec, cap)
    return network.full_hessian_W(params, data, spec, cap)


def _extreme_eig(params, data, spec, tol, train_v, cap, which):
    try:
        H = _dense_hessian(params, data, spec, train_v, cap)
    except SizeCapError:
        op = _hessian_operator(params, data, spec, train_v)
        try:
            vals = eigsh(op, k=1, which=which, tol=tol, maxiter=20 * op.shape[0],
                         return_eigenvectors=False)
        except ArpackNoConvergence as exc:
            raise ConvergenceError(f"Lanczos did not converge: {exc}") from None
        return float(vals[0])
    vals = linalg.symmetric_eigvalsh(H)
    return float(vals[0] if which == "SA" else vals[-1])


def min_hessian_eig(params, data, spec, tol=1e-8, train_v=True, cap=network.HESSIAN_CAP):
    """Smallest Hessian eigenvalue: dense below the assembly cap, Lanczos above it."""
    return _extreme_eig(params, data, spec, tol, train_v, cap, "SA")


def max_hessian_eig(params, data, spec, tol=1e-8, train_v=True, cap=network.HESSIAN_CAP):
    return _extreme_eig(params, data, spec, tol, train_v, cap, "LA")


def _grad_norm(params, data, spec, train_v):
    g = network.gradient(params, data, spec)
    if not train_v:
        g = g[params.k:]
    return float(np.linalg.norm(g))


def resolve_step_size(cfg, params0, data, spec, train_v=True):
    if not isinstance(cfg.step_size, str):
        return float(cfg.step_size)
    if cfg.step_size in ("hessian", "adaptive"):
        lam = max_hessian_eig(params0, data, spec, train_v=train_v)
        return cfg.step_scale / lam
    planted = data.planted.params if data.planted is not None else params0
    return 1.0 / compute_beta(planted, spec, data=data)


_STATUS_NAMES = {
    kernels.STATUS_CONVERGED: "global",
    kernels.STATUS_BUDGET: "budget_exhausted",
}


def _run_segment(W, v, data, spec, cfg, alpha, iters, train_v, trace):
    return kernels.gd_loop(
        W, v, data.X, data.y, spec.code, float(spec.b), alpha, int(iters),
        float(cfg.loss_tol), float(cfg.grad_tol), bool(train_v), int(cfg.record_every), trace)


def gd_run(params0, data, spec, cfg=GdConfig(), train_v=True, seed=None,
           init_kind="random", classify=True):
    """Full-batch gradient descent with simultaneous updates of ``v`` and ``W``.

    Stops when the loss drops to ``loss_tol`` (classified ``global``), the
    gradient norm drops to ``grad_tol`` (classified ``saddle_with_neg_curv``
    or ``approx_local_min`` by the Hessian's smallest eigenvalue), or after
    ``max_iters`` updates (``budget_exhausted``). Raises
    :class:`DivergenceError` on a non-finite loss.

    ``step_size`` in the returned record is the first step used.
    """
    W = np.ascontiguousarray(params0.W, dtype=float).copy()
    v = np.ascontiguousarray(params0.v, dtype=float).copy()
    data = Dataset(np.ascontiguousarray(data.X), np.ascontiguousarray(data.y), data.planted)
    alpha = resolve_step_size(cfg, params0, data, spec, train_v)
    trace = np.empty(cfg.max_iters // cfg.record_every + 2)
    if cfg.step_size != "adaptive":
        it, loss, gnorm, status, nrec = _run_segment(W, v, data, spec, cfg, alpha,
                                                     cfg.max_iters, train_v, trace)
        if status == kernels.STATUS_DIVERGED:
            raise DivergenceError("loss became non-finite", it)
        steps = [j * cfg.record_every for j in range(nrec)]
        if nrec and it % cfg.record_every != 0:
            steps[-1] = it
        history = list(zip(steps, trace[:nrec].tolist()))
    else:
        it, loss, gnorm, status, history = _adaptive_run(W, v, data, spec, cfg, alpha, train_v)
    return _finish(NetworkParams(v, W), data, spec, cfg, train_v, seed, init_kind, classify,
                   it, loss, gnorm, status, history, alpha)


def _adaptive_run(W, v, data, spec, cfg, alpha0, train_v):
    seg_len = cfg.adapt_every - cfg.adapt_every % cfg.record_every or cfg.record_every
    scale = cfg.step_scale
    alpha = alpha0
    done = 0
    history = []
    trace = np.empty(seg_len // cfg.record_every + 2)
    start_loss = network.loss(NetworkParams(v, W), data, spec)
    halvings = 0
    while True:
        W_keep, v_keep = W.copy(), v.copy()
        budget = min(seg_len, cfg.max_iters - done)
        it, loss, gnorm, status, nrec = _run_segment(W, v, data, spec, cfg, alpha,
                                                     budget, train_v, trace)
        if status == kernels.STATUS_DIVERGED or (loss > start_loss and status == kernels.STATUS_BUDGET):
            W[:], v[:] = W_keep, v_keep
            halvings += 1
            if halvings > 30:
                raise DivergenceError("no stable step found", done + it)
            scale *= 0.5
            alpha = scale / max_hessian_eig(NetworkParams(v, W), data, spec, train_v=train_v)
            continue
        for j in range(nrec):
            step = done + (j * cfg.record_every if j < nrec - 1 or it % cfg.record_every == 0 else it)
            if not history or step > history[-1][0]:
                history.append((step, float(trace[j])))
        done += it
        start_loss = loss
        if status != kernels.STATUS_BUDGET or done >= cfg.max_iters:
            return done, loss, gnorm, status, history
        alpha = scale / max_hessian_eig(NetworkParams(v, W), data, spec, train_v=train_v)


def _finish(final, data, spec, cfg, train_v, seed, init_kind, classify,
            it, loss, gnorm, status, history, alpha):
    min_eig = None
    if status == kernels.STATUS_STATIONARY:
        if classify:
            min_eig = min_hessian_eig(final, data, spec, train_v=train_v)
            label = "saddle_with_neg_curv" if min_eig < -SADDLE_TOL else "approx_local_min"
        else:
            label = "approx_local_min"
    else:
        label = _STATUS_NAMES[status]
    return TrialRecord(
        seed=seed, init_kind=init_kind, final_loss=float(loss), iters_used=int(it),
        loss_trace=history, reached_global=status == kernels.STATUS_CONVERGED,
        classification=label, step_size=alpha, grad_norm=float(gnorm),
        min_hessian_eig=min_eig, params=final,
    )


def thm2_rhs(eps_g, eps_H, nu, planted):
    """Loss bound at approximate local minima for ``v = nu * 1`` and quadratic phi."""
    M = planted.W.T @ (planted.v[:, None] * planted.W)
    nuc = float(np.sum(np.abs(linalg.symmetric_eigvalsh(M))))
    root = math.sqrt(abs(nu))
    return (eps_g / root) * max(math.sqrt(1.0 + 14.0 * nuc), 4.0 * eps_g / root) + eps_H / (2.0 * abs(nu)) * nuc


def classify_point(params, data, spec, eps_g, eps_H, train_v=True, tol=1e-10):
    """Test ``||grad L|| <= eps_g`` and ``Hessian >= -eps_H I``.

    With ``train_v=False`` derivatives are taken in ``W`` only. When the
    activation is quadratic, the data are planted with same-sign ``v*``, and
    ``v`` is a constant vector of that sign, the report also carries the
    loss bound that holds at such points.
    """
    if eps_g < 0 or eps_H < 0:
        raise ValueError("eps_g and eps_H must be non-negative")
    g = _grad_norm(params, data, spec, train_v)
    lam = min_hessian_eig(params, data, spec, tol=tol, train_v=train_v)
    val = network.loss(params, data, spec)
    rhs = None
    p = data.planted
    if spec.kind == "quadratic" and p is not None:
        nz = p.v[p.v != 0]
        nu = float(params.v[0])
        same_sign = nz.size and (np.all(nz > 0) or np.all(nz < 0))
        if same_sign and nu != 0 and np.all(params.v == nu) and np.sign(nu) == np.sign(nz[0]):
            rhs = thm2_rhs(eps_g, eps_H, nu, p)
    return ApproxMinReport(
        eps_g=float(eps_g), eps_H=float(eps_H), grad_norm=g, min_hessian_eig=lam,
        loss_value=val, is_approx_min=(g <= eps_g and lam >= -eps_H), thm2_rhs=rhs,
    )


def _stream(seed, *name):
    return seed.spawn(*name) if isinstance(seed, Stream) else Stream(seed, *name)


def init_random(k, d, seed):
    """Rademacher ``v0`` and ``W0`` with i.i.d. N(0, 1/d) entries."""
    s = _stream(seed, "init_random")
    v = s.spawn("v").rademacher(k)
    W = s.spawn("W").normal((k, d)) / math.sqrt(d)
    return NetworkParams(v, W)


def paper_radii(planted_W, n, constants=CONSTANTS, zero_curvature=False):
    """Initialization radii ``(r_W, r_v)`` from the local convergence theory.

    ``r_W = C0 s_min^3/s_max d^2.5/(n^1.5 k)`` and ``r_v = r_W / sqrt(k)``,
    with ``s_min`` replaced by 1 for the zero-curvature moment class.
    """
    k, d = planted_W.shape
    res = linalg.svd(planted_W)
    smin = 1.0 if zero_curvature else res.sigma_min
    base = constants.C0 * smin ** 3 / res.sigma_max * d ** 2.5 / n ** 1.5
    return base / k, base / k ** 1.5


def init_near_planted(planted, radii, seed):
    """Perturb the planted weights: ``W0`` on the Frobenius sphere of radius ``r_W``
    around ``W*`` and ``v0`` at a corner of the l-infinity box of radius ``r_v``.
    """
    r_W, r_v = radii
    if r_W < 0 or r_v < 0:
        raise ValueError("radii must be non-negative")
    s = _stream(seed, "init_near_planted")
    dirW = s.spawn("W").normal(planted.W.shape)
    dirW /= np.linalg.norm(dirW)
    v = planted.v + r_v * s.spawn("v").rademacher(planted.k)
    return NetworkParams(v, planted.W + r_W * dirW)


@dataclass(frozen=True)
class RateFit:
    rho: float
    r_squared: float
    points: int
    monotone: bool


def fit_geometric_rate(trace, floor=1e-26, rel_floor=1e-14, burn_in=0.5):
    """Fit ``L(t) = L(t0) (1 - rho)^(t - t0)`` by least squares on ``log L``.

    The fit uses the converged segment: the leading run of points above
    ``max(floor, rel_floor * L(0))`` (below that the loss sits on round-off),
    minus its first ``burn_in`` fraction, where faster modes are still
    decaying. ``monotone`` reports whether the recorded losses never increase.
    """
    steps = np.array([t for t, _ in trace], dtype=float)
    vals = np.array([x for _, x in trace], dtype=float)
    if vals.size == 0:
        raise ValueError("empty trace")
    if not 0 <= burn_in < 1:
        raise ValueError("burn_in must be in [0, 1)")
    monotone = bool(np.all(np.diff(vals) <= 0))
    above = vals > max(floor, rel_floor * vals[0])
    end = int(np.argmin(above)) if not above.all() else vals.size
    start = int(math.floor(burn_in * end))
    t, y = steps[start:end], np.log(vals[start:end])
    if t.size < 3:
        return RateFit(rho=float("nan"), r_squared=float("nan"), points=int(t.size), monotone=monotone)
    slope, intercept = np.polyfit(t, y, 1)
    pred = intercept + slope * t
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(rho=float(1.0 - math.exp(slope)), r_squared=r2, points=int(t.size), monotone=monotone)
