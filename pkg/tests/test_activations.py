import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shallow_landscape.activations import (
    ActivationSpec,
    classify_assumption,
    gaussian_moments,
    moment_vectors,
    parse_activation,
)
from shallow_landscape.errors import UnsupportedActivationError

from conftest import DIFFERENTIABLE
from oracles import monte_carlo_moments

BUNDLED = DIFFERENTIABLE + ("softplus:4", "sigmoid:1")


def test_point_values():
    q = parse_activation("quad")
    assert q.eval(2.0, 0) == 4.0
    assert q.eval(3.0, 1) == 6.0
    assert q.eval(-7.0, 2) == 2.0
    assert parse_activation("softplus:10").eval(0.0, 0) == pytest.approx(math.log(2) / 10, rel=1e-15)
    assert parse_activation("sigmoid:4").eval(0.0, 0) == 0.5
    assert parse_activation("tanh").eval(0.5, 0) == pytest.approx(math.tanh(0.5))


def test_erf_matches_integral_definition():
    from scipy.integrate import quad
    spec = parse_activation("erf")
    for z in (-2.0, 0.3, 1.7):
        ref, _ = quad(lambda t: 2 / math.sqrt(math.pi) * math.exp(-t * t / 2), 0, z)
        assert spec.value(z) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("name", BUNDLED)
def test_derivatives_match_finite_differences(name):
    spec = parse_activation(name)
    z = np.random.default_rng(7).uniform(-10, 10, 100)
    h = 1e-5
    fd1 = (spec.value(z + h) - spec.value(z - h)) / (2 * h)
    fd2 = (spec.deriv1(z + h) - spec.deriv1(z - h)) / (2 * h)
    d1 = spec.deriv1(z)
    d2 = spec.deriv2(z)
    assert np.all(np.abs(d1 - fd1) <= 1e-6 * np.maximum(1.0, np.abs(d1)))
    assert np.all(np.abs(d2 - fd2) <= 1e-6 * np.maximum(1.0, np.abs(d2)))


@pytest.mark.parametrize("name", BUNDLED)
def test_derivative_bounds_hold(name):
    spec = parse_activation(name)
    z = np.linspace(-10, 10, 20001)
    if math.isfinite(spec.deriv1_bound):
        assert np.max(np.abs(spec.deriv1(z))) <= spec.deriv1_bound * (1 + 1e-12)
        assert np.max(np.abs(spec.deriv1(z))) >= 0.99 * spec.deriv1_bound
    assert np.max(np.abs(spec.deriv2(z))) <= spec.deriv2_bound * (1 + 1e-12)
    assert np.max(np.abs(spec.deriv2(z))) >= 0.99 * spec.deriv2_bound


def test_softplus_overflow_branches():
    spec = parse_activation("softplus:10")
    big = np.array([3.5, 100.0, 1e6])
    np.testing.assert_allclose(spec.value(big), big, rtol=1e-13)
    assert np.all(np.isfinite(spec.value(-big)))
    assert np.all(spec.value(-big) < 1e-13)
    np.testing.assert_allclose(spec.deriv1(big), 1.0, rtol=1e-13)
    # continuity across the cut at b z = 30
    for t in (30.0, -30.0):
        z = t / 10
        assert abs(spec.value(z + 1e-12) - spec.value(z - 1e-12)) < 2e-12 + 1e-13


def test_relu_conventions():
    relu = parse_activation("relu")
    assert relu.value(-1.0) == 0.0
    assert relu.deriv1(2.0) == 1.0
    with pytest.raises(UnsupportedActivationError):
        relu.deriv1(0.0)
    with pytest.raises(UnsupportedActivationError):
        relu.deriv2(1.0)
    with pytest.raises(UnsupportedActivationError):
        relu.eval(1.0, 2)
    with pytest.raises(UnsupportedActivationError):
        gaussian_moments(relu, 1.0)
    assert relu.moment_class == "unclassified"


def test_parse_errors_and_labels():
    assert parse_activation("softplus:10").label == "softplus:10"
    assert parse_activation("QUADRATIC").label == "quad"
    with pytest.raises(UnsupportedActivationError):
        parse_activation("swish")
    with pytest.raises(ValueError):
        parse_activation("softplus")
    with pytest.raises(ValueError):
        parse_activation("softplus:-1")
    with pytest.raises(ValueError):
        parse_activation("tanh:2")
    with pytest.raises(ValueError):
        parse_activation("quad").eval(1.0, 3)
    with pytest.raises(UnsupportedActivationError):
        ActivationSpec("cubic")


def test_quadratic_moments_exact():
    for sigma in (0.0, 0.5, 3.0):
        m = gaussian_moments(parse_activation("quad"), sigma)
        assert abs(m.mu) < 1e-14
        assert m.gamma == pytest.approx(2.0, abs=1e-14)


def test_tanh_curvature_vanishes():
    assert abs(gaussian_moments(parse_activation("tanh"), 1.0).gamma) <= 1e-10


def test_softplus_moments_against_monte_carlo():
    spec = parse_activation("softplus:4")
    m = gaussian_moments(spec, 1.0)
    assert m.mu > 0 and m.gamma > 0
    mu, se_mu, gamma, se_gamma = monte_carlo_moments(spec.deriv1, spec.deriv2, 1.0, samples=1_000_000)
    assert abs(m.mu - mu) <= 3 * se_mu
    assert abs(m.gamma - gamma) <= 3 * se_gamma


def test_erf_moments_closed_form():
    # E[(2/sqrt(pi)) exp(-s^2 g^2 / 2)] = (2/sqrt(pi)) / sqrt(1 + s^2)
    spec = parse_activation("erf")
    for s in (0.5, 1.0, 2.0):
        assert gaussian_moments(spec, s).mu == pytest.approx(2 / math.sqrt(math.pi) / math.sqrt(1 + s * s), rel=1e-13)


@pytest.mark.parametrize("name", BUNDLED)
@pytest.mark.parametrize("sigma", [0.1, 1.0, 2.5, 5.0])
def test_node_count_agreement(name, sigma):
    spec = parse_activation(name)
    a = gaussian_moments(spec, sigma, nodes=64)
    b = gaussian_moments(spec, sigma, nodes=128)
    assert abs(a.mu - b.mu) <= 1e-10
    assert abs(a.gamma - b.gamma) <= 1e-10


@pytest.mark.parametrize("name", ("sigmoid:4", "erf", "tanh"))
@given(sigma=st.floats(min_value=0.05, max_value=5.0))
def test_odd_curvature_has_zero_gamma(name, sigma):
    assert abs(gaussian_moments(parse_activation(name), sigma).gamma) <= 1e-10


@pytest.mark.parametrize("name", ("softplus:4", "softplus:10", "sigmoid:4", "erf", "tanh"))
def test_increasing_activations_have_positive_slope(name):
    for s in (0.1, 0.5, 1.0, 2.0, 5.0):
        assert gaussian_moments(parse_activation(name), s).mu > 0


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        gaussian_moments(parse_activation("erf"), -1.0)


def test_classification_examples():
    grid = (0.5, 1.0, 2.0)
    assert classify_assumption(parse_activation("softplus:4"), grid) == "mu_nonzero_gamma_nonzero"
    assert classify_assumption(parse_activation("erf"), grid) == "mu_nonzero_gamma_zero"
    assert classify_assumption(parse_activation("quad"), grid) == "mu_zero"
    assert parse_activation("tanh").moment_class == "mu_nonzero_gamma_zero"
    with pytest.raises(ValueError):
        classify_assumption(parse_activation("erf"), [])
    with pytest.raises(ValueError):
        classify_assumption(parse_activation("erf"), [0.0])


def test_moment_vectors_use_row_norms():
    W = np.array([[3.0, 4.0], [0.0, 1.0]])
    mu, gamma = moment_vectors(parse_activation("erf"), W)
    assert mu[0] == pytest.approx(gaussian_moments(parse_activation("erf"), 5.0).mu)
    assert mu[1] == pytest.approx(gaussian_moments(parse_activation("erf"), 1.0).mu)
    assert np.all(np.abs(gamma) < 1e-10)
