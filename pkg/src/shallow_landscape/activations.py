"""Activation functions, their derivatives and bounds, and Gaussian moments.

The moments are ``mu(sigma) = E[phi'(sigma g)]`` (average slope) and
``gamma(sigma) = E[phi''(sigma g)]`` (average curvature) for ``g ~ N(0, 1)``.
"""
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import integrate
from scipy.special import erf

from .errors import UnsupportedActivationError

KINDS = ("quadratic", "softplus", "sigmoid", "erf", "tanh", "relu")
KIND_CODES = {"quadratic": 0, "softplus": 1, "sigmoid": 2, "erf": 3, "tanh": 4}

MOMENT_CLASSES = ("mu_nonzero_gamma_nonzero", "mu_nonzero_gamma_zero", "mu_zero", "unclassified")

ZERO_TOL = 1e-8
DEFAULT_NODES = 96
RESOLVED_TOL = 1e-12
DEFAULT_SIGMA_GRID = (0.5, 1.0, 2.0)

# softplus switches to its asymptotes beyond |b z| > 30
_SOFTPLUS_CUT = 30.0
_SQRT2 = math.sqrt(2.0)
_TWO_OVER_SQRTPI = 2.0 / math.sqrt(math.pi)


@dataclass(frozen=True)
class ActivationSpec:
    """An activation ``phi`` together with derivative bounds ``|phi'| <= B``, ``|phi''| <= L``.

    ``b`` is the sharpness parameter of softplus and sigmoid and is ignored by
    the other kinds. ``math.inf`` marks an unbounded derivative.
    """

    kind: str
    b: float = 1.0
    deriv1_bound: float = field(init=False)
    deriv2_bound: float = field(init=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnsupportedActivationError(f"unknown activation {self.kind!r}")
        if self.kind in ("softplus", "sigmoid") and not self.b > 0:
            raise ValueError(f"{self.kind} needs b > 0, got {self.b}")
        if self.kind not in ("softplus", "sigmoid"):
            object.__setattr__(self, "b", 1.0)
        B, L = _bounds(self.kind, self.b)
        object.__setattr__(self, "deriv1_bound", B)
        object.__setattr__(self, "deriv2_bound", L)

    @property
    def code(self):
        """Integer code understood by the compiled kernels."""
        try:
            return KIND_CODES[self.kind]
        except KeyError:
            raise UnsupportedActivationError(f"{self.kind} has no second derivative") from None

    @property
    def differentiable(self):
        return self.kind != "relu"

    @property
    def label(self):
        if self.kind in ("softplus", "sigmoid"):
            return f"{self.kind}:{self.b:g}"
        return "quad" if self.kind == "quadratic" else self.kind

    def __str__(self):
        return self.label

    def value(self, z):
        z = np.asarray(z, dtype=float)
        k = self.kind
        if k == "quadratic":
            return z * z
        if k == "softplus":
            t = self.b * z
            mid = np.abs(t) <= _SOFTPLUS_CUT
            return np.where(
                t > _SOFTPLUS_CUT, z,
                np.where(mid, np.log1p(np.exp(np.where(mid, t, 0.0))) / self.b, 0.0),
            )
        if k == "sigmoid":
            return _logistic(self.b * z)
        if k == "erf":
            return _SQRT2 * erf(z / _SQRT2)
        if k == "tanh":
            return np.tanh(z)
        return np.maximum(z, 0.0)

    def deriv1(self, z):
        z = np.asarray(z, dtype=float)
        k = self.kind
        if k == "quadratic":
            return 2.0 * z
        if k == "softplus":
            return _logistic(self.b * z)
        if k == "sigmoid":
            s = _logistic(self.b * z)
            return self.b * s * (1.0 - s)
        if k == "erf":
            return _TWO_OVER_SQRTPI * np.exp(-0.5 * z * z)
        if k == "tanh":
            t = np.tanh(z)
            return 1.0 - t * t
        if np.any(z == 0):
            raise UnsupportedActivationError("relu derivative is undefined at z = 0")
        return (z > 0).astype(float)

    def deriv2(self, z):
        z = np.asarray(z, dtype=float)
        k = self.kind
        if k == "quadratic":
            return np.full_like(z, 2.0)
        if k == "softplus":
            s = _logistic(self.b * z)
            return self.b * s * (1.0 - s)
        if k == "sigmoid":
            s = _logistic(self.b * z)
            return self.b * self.b * s * (1.0 - s) * (1.0 - 2.0 * s)
        if k == "erf":
            return -_TWO_OVER_SQRTPI * z * np.exp(-0.5 * z * z)
        if k == "tanh":
            t = np.tanh(z)
            return -2.0 * t * (1.0 - t * t)
        raise UnsupportedActivationError("relu has no second derivative")

    def eval(self, z, order=0):
        if order == 0:
            return self.value(z)
        if order == 1:
            return self.deriv1(z)
        if order == 2:
            return self.deriv2(z)
        raise ValueError(f"order must be 0, 1 or 2, got {order}")

    def value_and_slope(self, z):
        return self.value(z), self.deriv1(z)

    @property
    def phi0(self):
        """phi(0), which enters the smoothness constant."""
        return float(self.value(0.0))

    @cached_property
    def moment_class(self):
        if not self.differentiable:
            return "unclassified"
        return classify_assumption(self, DEFAULT_SIGMA_GRID)


def _logistic(t):
    t = np.asarray(t, dtype=float)
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _bounds(kind, b):
    if kind == "quadratic":
        return math.inf, 2.0
    if kind == "softplus":
        return 1.0, b / 4.0
    if kind == "sigmoid":
        # max |s(1-s)(1-2s)| over s in (0, 1) is 1/(6 sqrt 3)
        return b / 4.0, b * b / (6.0 * math.sqrt(3.0))
    if kind == "erf":
        return _TWO_OVER_SQRTPI, _TWO_OVER_SQRTPI * math.exp(-0.5)
    if kind == "tanh":
        return 1.0, 4.0 / (3.0 * math.sqrt(3.0))
    return 1.0, math.inf


def parse_activation(text):
    """Parse ``quad``, ``softplus:b``, ``sigmoid:b``, ``erf``, ``tanh`` or ``relu``."""
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    aliases = {"quad": "quadratic", "quadratic": "quadratic", "softplus": "softplus",
               "sigmoid": "sigmoid", "erf": "erf", "tanh": "tanh", "relu": "relu"}
    if name not in aliases:
        raise UnsupportedActivationError(f"unknown activation {text!r}")
    kind = aliases[name]
    if kind in ("softplus", "sigmoid"):
        if not arg:
            raise ValueError(f"{kind} needs a sharpness parameter, e.g. {kind}:4")
        b = float(arg)
        if not b > 0:
            raise ValueError(f"{kind} sharpness must be positive, got {arg}")
        return ActivationSpec(kind, b)
    if arg:
        raise ValueError(f"{kind} takes no parameter")
    return ActivationSpec(kind)


QUADRATIC = ActivationSpec("quadratic")


@dataclass(frozen=True)
class MomentPair:
    mu: float
    gamma: float
    sigma: float
    quadrature_error_estimate: float


def _gauss_expectation(f, sigma, nodes):
    x, w = hermegauss(nodes)
    return float(np.dot(w, f(sigma * x)) / math.sqrt(2.0 * math.pi))


def _adaptive_expectation(f, sigma, scale):
    """E[f(sigma g)] by adaptive quadrature, with breakpoints at the activation scale."""
    if sigma == 0:
        return float(f(0.0)), 0.0
    h = scale / sigma
    pts = sorted({0.0, h, -h, 4 * h, -4 * h})
    pts = [p for p in pts if -12.0 < p < 12.0]

    def integrand(g):
        return float(f(sigma * g)) * math.exp(-0.5 * g * g) / math.sqrt(2.0 * math.pi)

    with warnings.catch_warnings():
        # roundoff warnings fire once the integral is at machine precision
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(integrand, -12.0, 12.0, points=pts, limit=400,
                                  epsabs=1e-14, epsrel=1e-13)
    return val, err


def gaussian_moments(spec, sigma, nodes=DEFAULT_NODES):
    """Gauss-Hermite estimates of ``mu(sigma)`` and ``gamma(sigma)``.

    The error estimate is the larger change in either moment when the node
    count is doubled. When that change exceeds ``RESOLVED_TOL`` the integrand
    is too sharp for the Hermite rule (large ``b * sigma``) and both moments
    are recomputed by adaptive quadrature; the reported error is then the
    adaptive routine's own estimate.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if not spec.differentiable:
        raise UnsupportedActivationError("moments need phi' and phi''")
    mu = _gauss_expectation(spec.deriv1, sigma, nodes)
    gamma = _gauss_expectation(spec.deriv2, sigma, nodes)
    mu2 = _gauss_expectation(spec.deriv1, sigma, 2 * nodes)
    gamma2 = _gauss_expectation(spec.deriv2, sigma, 2 * nodes)
    err = max(abs(mu2 - mu), abs(gamma2 - gamma))
    if err > RESOLVED_TOL:
        scale = 1.0 / spec.b if spec.kind in ("softplus", "sigmoid") else 1.0
        mu2, e1 = _adaptive_expectation(spec.deriv1, sigma, scale)
        gamma2, e2 = _adaptive_expectation(spec.deriv2, sigma, scale)
        err = max(e1, e2)
    return MomentPair(mu=mu2, gamma=gamma2, sigma=float(sigma), quadrature_error_estimate=err)


def classify_assumption(spec, sigma_grid, tol=ZERO_TOL):
    """Sort an activation into its moment class on a grid of positive sigmas.

    Returns ``mu_nonzero_gamma_nonzero`` (curvature never vanishes),
    ``mu_nonzero_gamma_zero`` (curvature identically zero), ``mu_zero`` (slope
    identically zero) or ``unclassified``.
    """
    grid = list(sigma_grid)
    if not grid:
        raise ValueError("sigma grid must be non-empty")
    if any(s <= 0 for s in grid):
        raise ValueError("sigma grid values must be positive")
    moments = [gaussian_moments(spec, s) for s in grid]
    mu_zero = all(abs(m.mu) <= tol for m in moments)
    mu_nonzero = all(abs(m.mu) > tol for m in moments)
    if mu_zero:
        return "mu_zero"
    if not mu_nonzero:
        return "unclassified"
    if all(abs(m.gamma) > tol for m in moments):
        return "mu_nonzero_gamma_nonzero"
    if all(abs(m.gamma) <= tol for m in moments):
        return "mu_nonzero_gamma_zero"
    return "unclassified"


def moment_vectors(spec, W):
    """Per-unit slope and curvature moments at ``sigma = ||w_l||``."""
    norms = np.linalg.norm(np.asarray(W, dtype=float), axis=1)
    pairs = [gaussian_moments(spec, s) for s in norms]
    return np.array([p.mu for p in pairs]), np.array([p.gamma for p in pairs])
