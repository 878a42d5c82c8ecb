"""Experiment harness: no-spurious-minima sweeps, random-label fitting, and
numerical checks of the spectral and concentration statements.
"""
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import isotonic_regression

from . import linalg, network, optimizer
from .activations import parse_activation
from .errors import DivergenceError
from .network import Dataset, NetworkParams, PlantedModel
from .optimizer import CalibratedConstants, GdConfig
from .rng import Stream

THREADS_ENV = "SHALLOW_LANDSCAPE_THREADS"

# Sweep defaults: step 1.8/lambda_max of the Hessian, re-estimated every 2000
# updates, with rollback on any segment that raises the loss.
SWEEP_GD = GdConfig(step_size="adaptive", step_scale=1.8, record_every=1000)

# Regression bounds for the Jacobian spectrum check at (d, k, n) = (8, 8, 32),
# fixed from `calibrate` (seed 0, 250 trials): half the smallest lower ratio,
# 1.25 times the largest upper ratio.
SPECTRUM_LOWER_FLOOR = 0.0079
SPECTRUM_UPPER_CEILING = 0.94
SPECTRUM_SPREAD_MAX = 10.0

# Regression ceilings for the concentration checks, 1.25 times the largest
# batch maximum from `calibrate` (seed 0): 0.621 and 0.128.
PRLEMMA_RATIO_CEILING = 0.78
COVARIANCE_CEILING = 0.16


def worker_count():
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SweepConfig:
    """One phase-transition sweep.

    ``sweep`` names the varied dimension (``"k"`` or ``"d"``); the other one
    is ``fixed``. Each of ``seeds`` contributes ``weights_per_point`` planted
    weight draws per value, each tested with ``inits_per_weight`` runs.
    ``v_init`` is ``"rademacher"`` (random signs) or ``"planted"`` (start at
    ``v* = 1``).
    """

    n: int
    sweep: str
    values: tuple
    fixed: int
    activation: str = "quad"
    planted: bool = True
    weights_per_point: int = 10
    inits_per_weight: int = 10
    seeds: tuple = (0,)
    train_v: bool = True
    v_init: str = "rademacher"
    gd: GdConfig = SWEEP_GD
    stop_on_failure: bool = True

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(x) for x in self.values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.sweep not in ("k", "d"):
            raise ValueError("sweep must be 'k' or 'd'")
        if not self.values:
            raise ValueError("sweep values must be non-empty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if min(self.values) < 1 or self.fixed < 1 or self.n < 1:
            raise ValueError("dimensions must be positive")
        if self.weights_per_point < 1 or self.inits_per_weight < 1 or not self.seeds:
            raise ValueError("trial counts must be at least 1")
        if self.v_init not in ("rademacher", "planted"):
            raise ValueError("v_init must be 'rademacher' or 'planted'")
        if not self.planted:
            raise ValueError("the spurious-minima sweep needs planted labels")
        parse_activation(self.activation)

    def dims(self, value):
        """``(k, d)`` at a sweep value."""
        return (value, self.fixed) if self.sweep == "k" else (self.fixed, value)

    def to_dict(self):
        out = asdict(self)
        out["values"] = list(self.values)
        out["seeds"] = list(self.seeds)
        return out

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw)
        raw.pop("schema_version", None)
        gd = raw.pop("gd", None)
        cfg = cls(**raw)
        if gd is not None:
            cfg = replace(cfg, gd=GdConfig(**gd))
        return cfg


@dataclass(frozen=True)
class TableRow:
    param: int
    successes: int
    trials: int

    @property
    def probability(self):
        return self.successes / self.trials


@dataclass(frozen=True)
class LogisticFit:
    intercept: float
    slope: float
    crossing: Optional[float]
    flags: tuple = ()


@dataclass
class ExperimentTable:
    rows: list
    fit: Optional[LogisticFit] = None
    outcomes: dict = field(default_factory=dict)

    def points(self):
        return [(r.param, r.successes, r.trials) for r in self.rows]


def _planted_instance(cfg, spec, value, seed, w):
    k, d = cfg.dims(value)
    s = Stream(seed, "sweep", cfg.sweep, value, w)
    W_star = s.spawn("W*").normal((k, d)) / math.sqrt(d)
    v_star = np.ones(k)
    X = s.spawn("X").normal((d, cfg.n))
    y = v_star @ spec.value(W_star @ X)
    return Dataset(X, y, PlantedModel(v_star, W_star, spec)), s


def _weight_trial(args):
    """Run every initialization for one planted draw; True iff all reach the global tolerance."""
    cfg, value, seed, w = args
    spec = parse_activation(cfg.activation)
    data, s = _planted_instance(cfg, spec, value, seed, w)
    k, d = cfg.dims(value)
    labels = []
    ok = True
    for t in range(cfg.inits_per_weight):
        p0 = optimizer.init_random(k, d, s.spawn("init", t))
        if cfg.v_init == "planted":
            p0 = NetworkParams(np.ones(k), p0.W)
        try:
            rec = optimizer.gd_run(p0, data, spec, cfg.gd, train_v=cfg.train_v, classify=False)
            labels.append(rec.classification)
            ok = ok and rec.reached_global
        except DivergenceError:
            labels.append("diverged")
            ok = False
        if not ok and cfg.stop_on_failure:
            break
    return ok, labels


def spurious_minima_sweep(cfg, workers=None, fit=True):
    """Empirical probability that every initialization reaches a global minimum.

    A planted draw counts as a success iff all ``inits_per_weight`` runs reach
    ``loss_tol``; budget exhaustion and divergence count as failures. With
    ``stop_on_failure`` the remaining runs of a failed draw are skipped,
    which cannot change its outcome.
    """
    jobs = [(cfg, value, seed, w) for value in cfg.values for seed in cfg.seeds
            for w in range(cfg.weights_per_point)]
    workers = worker_count() if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_weight_trial, jobs, chunksize=1))
    else:
        results = [_weight_trial(j) for j in jobs]
    rows = []
    outcomes = {}
    for value in cfg.values:
        mine = [res for job, res in zip(jobs, results) if job[1] == value]
        succ = sum(ok for ok, _ in mine)
        rows.append(TableRow(value, succ, len(mine)))
        counts = {}
        for _, labels in mine:
            for lab in labels:
                counts[lab] = counts.get(lab, 0) + 1
        outcomes[value] = counts
    table = ExperimentTable(rows=rows, outcomes=outcomes)
    if fit:
        table.fit = logistic_fit(table.points())
    return table


def _separated(x, s, t):
    """True when some threshold splits all-failure points from all-success points."""
    order = np.argsort(x)
    x, s, t = x[order], s[order], t[order]
    for cut in range(len(x) + 1):
        lo, hi = slice(0, cut), slice(cut, None)
        if np.all(s[lo] == 0) and np.all(s[hi] == t[hi]):
            if cut == 0 or cut == len(x) or x[cut - 1] < x[cut]:
                return True
    return False


def logistic_fit(points, ridge=1e-6, max_iter=200, tol=1e-12):
    """Maximum-likelihood fit of ``P(success) = 1/(1 + exp(-(b0 + b1 x)))``.

    Uses damped Newton steps on aggregated binomial counts. Completely
    separated data get a ridge penalty and the ``separation`` flag; all-zero
    or all-one data, or a non-positive slope, get ``no_crossing``.
    """
    pts = [(float(x), int(s), int(t)) for x, s, t in points]
    if any(t < 1 or s < 0 or s > t for _, s, t in pts):
        raise ValueError("each point needs 0 <= successes <= trials and trials >= 1")
    x = np.array([p[0] for p in pts])
    s = np.array([p[1] for p in pts], dtype=float)
    t = np.array([p[2] for p in pts], dtype=float)
    if np.unique(x).size < 2:
        raise ValueError("logistic fit needs at least two distinct x values")
    flags = []
    if s.sum() == 0 or s.sum() == t.sum():
        return LogisticFit(float("nan"), float("nan"), None, ("no_crossing",))
    lam = 0.0
    if _separated(x, s, t):
        flags.append("separation")
        lam = ridge
    # center and scale x so Newton is well conditioned
    mx, sx = x.mean(), x.std()
    z = (x - mx) / sx
    beta = np.zeros(2)
    Z = np.column_stack([np.ones_like(z), z])

    def objective(b):
        eta = Z @ b
        return float(np.sum(t * np.logaddexp(0.0, eta) - s * eta) + 0.5 * lam * b @ b)

    f = objective(beta)
    for _ in range(max_iter):
        p = 1.0 / (1.0 + np.exp(-(Z @ beta)))
        grad = Z.T @ (t * p - s) + lam * beta
        H = (Z * (t * p * (1 - p))[:, None]).T @ Z + lam * np.eye(2)
        H += 1e-12 * np.eye(2)
        step = np.linalg.solve(H, grad)
        eta = 1.0
        while eta > 1e-10:
            cand = beta - eta * step
            fc = objective(cand)
            if fc <= f:
                break
            eta *= 0.5
        done = abs(f - fc) <= tol * (1.0 + abs(f))
        beta, f = cand, fc
        if done or np.linalg.norm(eta * step) <= tol:
            break
    slope = beta[1] / sx
    intercept = beta[0] - beta[1] * mx / sx
    if slope > 1e-9:
        crossing = -intercept / slope
    else:
        crossing = None
        flags.append("no_crossing")
    return LogisticFit(float(intercept), float(slope), crossing, tuple(flags))


def isotonic_trend(table, n):
    """Compare increasing and decreasing isotonic fits of success probability against ``kd/n``.

    Returns ``(fitted increasing values, sse_increasing, sse_decreasing)``;
    an upward phase transition shows as ``sse_increasing <= sse_decreasing``.
    """
    p = np.array([r.probability for r in table.rows])
    w = np.array([r.trials for r in table.rows], dtype=float)
    inc = isotonic_regression(p, weights=w, increasing=True).x
    dec = isotonic_regression(p, weights=w, increasing=False).x
    return inc, float(np.sum(w * (p - inc) ** 2)), float(np.sum(w * (p - dec) ** 2))


@dataclass
class RandomLabelRun:
    k: int
    seed: int
    rmse_trace: list
    final_rmse: float
    classification: str


V_MODES = ("ones", "signed", "trained")


def random_label_experiment(d, n, k_list, spec, seed, cfg=SWEEP_GD, v_mode="ones"):
    """Fit ``x -> v^T phi(W x)`` to Gaussian inputs with N(0, 1) labels.

    ``v_mode`` is ``"ones"`` (``v = 1`` held fixed), ``"signed"`` (alternating
    ``+1, -1`` held fixed) or ``"trained"`` (Rademacher start, updated with
    ``W``). With ``"ones"`` and a non-negative activation the model output
    is non-negative, so negative labels cannot be fit. Returns one run per
    ``k`` with RMSE ``sqrt(L)`` traces.
    """
    if v_mode not in V_MODES:
        raise ValueError(f"v_mode must be one of {V_MODES}")
    runs = []
    for k in k_list:
        s = Stream(seed, "random_labels", d, n, k)
        X = s.spawn("X").normal((d, n))
        y = s.spawn("y").normal(n)
        data = Dataset(X, y)
        W0 = s.spawn("W0").normal((k, d)) / math.sqrt(d)
        if v_mode == "ones":
            v0 = np.ones(k)
        elif v_mode == "signed":
            v0 = np.where(np.arange(k) % 2 == 0, 1.0, -1.0)
        else:
            v0 = s.spawn("v0").rademacher(k)
        try:
            rec = optimizer.gd_run(NetworkParams(v0, W0), data, spec, cfg,
                                   train_v=v_mode == "trained", classify=False)
            trace = [(t, math.sqrt(x)) for t, x in rec.loss_trace]
            runs.append(RandomLabelRun(k, seed, trace, math.sqrt(rec.final_loss), rec.classification))
        except DivergenceError:
            runs.append(RandomLabelRun(k, seed, [], float("inf"), "diverged"))
    return runs


@dataclass(frozen=True)
class RankCheck:
    sigma_min: float
    full_rank: bool


def xkrx_rank_check(X):
    """Smallest singular value of ``X * X`` (Khatri-Rao with itself) and full column rank."""
    X = linalg.as_matrix(X, "X")
    K = linalg.khatri_rao(X, X)
    d, n = X.shape
    if n > d * (d + 1) // 2:
        # columns live in the d(d+1)/2-dimensional span of symmetric tensors
        s = linalg.singular_values(K)
        return RankCheck(float(s[-1]) if n <= d * d else 0.0, False)
    s = linalg.singular_values(K)
    return RankCheck(float(s[-1]), bool(s[-1] > linalg.rank_tolerance(s, K.shape)))


def symmetric_pair_design(d, n=None):
    """Columns ``e_i`` followed by ``e_i + e_j`` (i < j): a deterministic full-rank design.

    The first ``n`` of the ``d(d+1)/2`` columns are returned.
    """
    cols = [np.eye(d)[:, i] for i in range(d)]
    for i in range(d):
        for j in range(i + 1, d):
            c = np.zeros(d)
            c[i] = c[j] = 1.0
            cols.append(c)
    total = len(cols)
    n = total if n is None else n
    if not 1 <= n <= total:
        raise ValueError(f"n must be in [1, {total}]")
    return np.column_stack(cols[:n])


@dataclass(frozen=True)
class SpectrumReport:
    sigma_min_J: float
    sigma_max_J: float
    lower_ratio: float
    upper_ratio: float
    class_b_lower_ratio: float
    class_b_upper_ratio: float


def spectrum_report(params, X, spec):
    data = Dataset(X, np.zeros(X.shape[1]))
    J = network.jacobian(params, data, spec)
    sJ = linalg.singular_values(J)
    sW = linalg.singular_values(params.W)
    k, d = params.W.shape
    n = X.shape[1]
    smin_J = float(sJ[min(J.shape) - 1])
    smax_J = float(sJ[0])
    return SpectrumReport(
        sigma_min_J=smin_J, sigma_max_J=smax_J,
        lower_ratio=smin_J / (float(sW[-1]) * d),
        upper_ratio=smax_J / (float(sW[0]) * math.sqrt(n * k)),
        class_b_lower_ratio=smin_J / d,
        class_b_upper_ratio=smax_J / math.sqrt(n * k),
    )


def jacobian_spectrum_check(trials, d, k, n, spec, seed):
    """Jacobian singular-value ratios at planted-style weights ``v = 1``, ``W`` Gaussian / sqrt(d)."""
    reports = []
    for t in range(trials):
        s = Stream(seed, "spectrum", d, k, n, t)
        W = s.spawn("W").normal((k, d)) / math.sqrt(d)
        X = s.spawn("X").normal((d, n))
        reports.append(spectrum_report(NetworkParams(np.ones(k), W), X, spec))
    return reports


@dataclass(frozen=True)
class DeviationStats:
    ratios: tuple
    nuclear_ratios: tuple

    @property
    def max(self):
        return max(self.ratios)

    @property
    def mean(self):
        return float(np.mean(self.ratios))


def prlemma_deviation(A, X):
    """``(1/n) sum_i (x_i^T A x_i) x_i x_i^T - (2A + tr(A) I)``."""
    q = np.einsum("in,ij,jn->n", X, A, X)
    return (X * q) @ X.T / X.shape[1] - (2.0 * A + np.trace(A) * np.eye(A.shape[0]))


def prlemma_check(A, n, trials, seed):
    """Deviation of the fourth-moment estimator, divided by ``tr(A)``.

    Reports the operator norm (what the proof bounds) and the nuclear norm
    (what the statement writes).
    """
    A = linalg.as_matrix(A, "A")
    if A.shape[0] != A.shape[1] or not np.allclose(A, A.T, atol=1e-12):
        raise ValueError("A must be symmetric")
    eig = linalg.symmetric_eigvalsh(A)
    if eig[0] < -1e-12 * max(1.0, abs(eig[-1])):
        raise ValueError("A must be positive semidefinite")
    d = A.shape[0]
    tr = float(np.trace(A))
    ops, nucs = [], []
    for t in range(trials):
        X = Stream(seed, "prlemma", d, n, t).normal((d, n))
        D = prlemma_deviation(A, X)
        if tr == 0:
            ops.append(0.0)
            nucs.append(0.0)
            continue
        ev = np.abs(linalg.symmetric_eigvalsh(D))
        ops.append(float(ev.max()) / tr)
        nucs.append(float(ev.sum()) / tr)
    return DeviationStats(tuple(ops), tuple(nucs))


def sample_covariance_check(d, n, trials, seed):
    """Operator-norm deviation of ``(1/n) X X^T`` from the identity."""
    ops, nucs = [], []
    for t in range(trials):
        X = Stream(seed, "covariance", d, n, t).normal((d, n))
        ev = np.abs(linalg.symmetric_eigvalsh(X @ X.T / n - np.eye(d)))
        ops.append(float(ev.max()))
        nucs.append(float(ev.sum()))
    return DeviationStats(tuple(ops), tuple(nucs))


def calibrate_concentration(seed=0, repeats=10, trials=20):
    """Largest deviation ratios seen in ``repeats`` batches of the concentration checks.

    Settings match the regression tests: the fourth-moment estimator at
    ``d = 6``, ``A = I``, ``n = 50 d log d`` and the sample covariance at
    ``d = 10``, ``n = 4000``. Batch ``r`` uses master seed ``1000 seed + 100 + r``,
    disjoint from the small seeds the tests use.
    """
    d = 6
    n = int(50 * d * math.log(d))
    seeds = [1000 * seed + 100 + r for r in range(repeats)]
    pr = max(prlemma_check(np.eye(d), n, trials, s).max for s in seeds)
    cov = max(sample_covariance_check(10, 4000, trials, s).max for s in seeds)
    return {"prlemma_ratio_max": float(pr), "covariance_max": float(cov)}


def calibrate_constants(seed=0, trials=250, d=8, k=8, n=32, beta_instances=20):
    """Fit the spectral constants and check the smoothness bound.

    ``c`` is the smallest and ``C`` the largest observed Jacobian ratio at the
    planted point. ``C_pert`` reuses ``C``. The smoothness check then
    confirms ``beta >= lambda_max`` of the Hessian at near-planted points for
    small random instances.
    """
    spec = parse_activation("softplus:10")
    reports = jacobian_spectrum_check(trials, d, k, n, spec, seed)
    lower = [r.lower_ratio for r in reports]
    upper = [r.upper_ratio for r in reports]
    c = float(min(lower))
    C = float(max(upper))
    consts = CalibratedConstants(c=c, C=C, C_pert=C, C0=1.0)
    worst = 0.0
    for t in range(beta_instances):
        s = Stream(seed, "calibrate_beta", t)
        kk = int(2 + s.integers(9))
        dd = int(2 + s.integers(min(kk, 10) - 1))
        nn = int(dd + s.integers(dd * dd))
        W = s.spawn("W").normal((kk, dd)) / math.sqrt(dd)
        X = s.spawn("X").normal((dd, nn))
        planted = NetworkParams(np.ones(kk), W)
        data = Dataset(X, planted.v @ spec.value(W @ X))
        radii = optimizer.paper_radii(W, nn, consts)
        p0 = optimizer.init_near_planted(planted, radii, s.spawn("init"))
        lam = optimizer.max_hessian_eig(p0, data, spec)
        beta = optimizer.compute_beta(planted, spec, constants=consts)
        worst = max(worst, lam / beta)
    return {
        "c": c, "C": C, "C_pert": C, "C0": 1.0,
        "lower_ratio_min": c, "lower_ratio_max": float(max(lower)),
        "upper_ratio_min": float(min(upper)), "upper_ratio_max": C,
        "upper_ratio_spread": C / float(min(upper)),
        "max_lambda_over_beta": worst,
        **calibrate_concentration(seed),
        "settings": {"seed": seed, "trials": trials, "d": d, "k": k, "n": n,
                     "activation": spec.label, "beta_instances": beta_instances},
    }
