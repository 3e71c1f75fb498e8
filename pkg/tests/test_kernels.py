"""Covariance kernels, heat kernels, measures: values against independent
quadrature oracles, exact identities, and contract errors."""
import math

import numpy as np
import pytest
from scipy import integrate, special

from pamlab.errors import (
    DivergentIntegral,
    EmptyMeasure,
    InvalidSpec,
    NonPositiveTime,
    SingularEvaluation,
    TimeOutOfRange,
)
from pamlab.kernels import (
    CovarianceSpec,
    Measure,
    bridge_kernel,
    dalang_value,
    gamma_eval,
    gamma_zero,
    heat_convolve_measure,
    heat_kernel,
    log_heat_convolve_atoms,
    riesz_constant,
    spec_from_config_text,
    spec_to_config_text,
    spectral_density,
    synthesis_weight,
)

RIESZ_HALF = CovarianceSpec.riesz(0.5, dim=1)
BUMP = CovarianceSpec.gaussian_bump(dim=1)


# ---------------------------------------------------------------------------
# spec validation
# ---------------------------------------------------------------------------

def test_riesz_eta_range_enforced():
    with pytest.raises(InvalidSpec):
        CovarianceSpec.riesz(1.2, dim=1)
    with pytest.raises(InvalidSpec):
        CovarianceSpec.riesz(1.0, dim=1)  # eta must be strictly below min(2, dim)
    with pytest.raises(InvalidSpec):
        CovarianceSpec.riesz(2.0, dim=3)
    CovarianceSpec.riesz(0.99, dim=1)
    CovarianceSpec.riesz(1.99, dim=2)


def test_space_time_white_is_one_dimensional():
    with pytest.raises(InvalidSpec):
        CovarianceSpec(kind="space_time_white", dim=2, hypothesis="H2", alpha=1.0)
    assert CovarianceSpec.space_time_white().alpha == 1.0


def test_gaussian_bump_is_h1():
    with pytest.raises(InvalidSpec):
        CovarianceSpec(kind="gaussian_bump", dim=1, hypothesis="H2", alpha=0.5)


def test_negative_epsilon_rejected():
    with pytest.raises(InvalidSpec):
        CovarianceSpec.gaussian_bump(epsilon=-0.1)


def test_config_text_round_trip():
    for spec in (RIESZ_HALF, BUMP, CovarianceSpec.space_time_white(0.05),
                 CovarianceSpec.custom_spectral("xi2_gaussian"),
                 CovarianceSpec.riesz(1.0, dim=2, epsilon=0.3)):
        text = spec_to_config_text(spec)
        assert spec_from_config_text(text) == spec


def test_config_text_rejects_unknown_keys():
    with pytest.raises(InvalidSpec):
        spec_from_config_text("kind = riesz\nshape = 3\n")
    with pytest.raises(InvalidSpec):
        spec_from_config_text("dim = 1\n")


# ---------------------------------------------------------------------------
# gamma evaluation
# ---------------------------------------------------------------------------

def test_riesz_pointwise_value():
    # |x|^(-eta) at |x| = 2 with eta = 1 (valid in two dimensions)
    spec = CovarianceSpec.riesz(1.0, dim=2)
    assert gamma_eval(spec, np.array([2.0, 0.0])) == pytest.approx(0.5, abs=1e-14)
    assert gamma_eval(RIESZ_HALF, 4.0) == pytest.approx(0.5, abs=1e-14)


def test_gaussian_bump_at_origin():
    assert gamma_eval(BUMP, 0.0) == pytest.approx(1.0, abs=1e-15)


def test_riesz_mollified_scaling_against_fourier_oracle():
    # gamma_eps(1) with eps = 1/4 equals sqrt(2) * gamma_1(2); the oracle for
    # gamma_1(2) integrates the mollified spectral density directly.
    spec = CovarianceSpec.riesz(0.5, dim=1, epsilon=0.25)
    c = riesz_constant(0.5, 1)
    oracle, _ = integrate.quad(
        lambda xi: math.exp(-2.0 * xi * xi) * c * xi ** (-0.5) * math.cos(2.0 * xi) / math.pi,
        0, np.inf, limit=800)
    assert gamma_eval(spec, 1.0) == pytest.approx(math.sqrt(2.0) * oracle, rel=1e-8)


def test_riesz_closed_form_against_subordination_oracle():
    eta, dim, eps = 0.5, 1, 0.05
    a, beta = 2.0 * eps, (dim - eta) / 2.0
    pref = riesz_constant(eta, dim) * (4 * math.pi) ** (-dim / 2) / special.gamma(beta)
    for r in (0.0, 0.3, 1.0, 2.0, 8.0):
        ref, _ = integrate.quad(
            lambda w: (w - a) ** (beta - 1) * w ** (-dim / 2) * math.exp(-r * r / (4 * w)),
            a, np.inf, limit=800)
        got = gamma_eval(CovarianceSpec.riesz(eta, dim=dim, epsilon=eps), r)
        assert got == pytest.approx(pref * ref, rel=1e-9)


def test_riesz_exact_scaling_homogeneity():
    # gamma(c x) = c^(-eta) gamma(x), closed form, exact
    xs = np.array([0.3, 1.0, 2.5, 7.0])
    for c in (0.5, 2.0, 10.0):
        np.testing.assert_allclose(gamma_eval(RIESZ_HALF, c * xs),
                                   c ** -0.5 * gamma_eval(RIESZ_HALF, xs), rtol=1e-14)


def test_mollifier_scaling_relation():
    # gamma_eps(x) = eps^(-alpha/2) gamma_1(x / sqrt(eps)) within 1e-8
    g1 = CovarianceSpec.riesz(0.5, dim=1, epsilon=1.0)
    xs = np.linspace(0.05, 6.0, 40)
    for eps in (0.25, 1.0, 4.0):
        ge = CovarianceSpec.riesz(0.5, dim=1, epsilon=eps)
        lhs = gamma_eval(ge, xs)
        rhs = eps ** -0.25 * gamma_eval(g1, xs / math.sqrt(eps))
        np.testing.assert_allclose(lhs, rhs, atol=1e-8)


def test_custom_spectral_matches_closed_form():
    # mu(xi) = xi^2 exp(-xi^2) has covariance (1 - x^2/2) exp(-x^2/4) / (4 sqrt(pi))
    spec = CovarianceSpec.custom_spectral("xi2_gaussian")
    xs = np.array([0.0, 0.5, 1.0, 2.0, 3.0])
    closed = (1.0 / (4.0 * math.sqrt(math.pi))) * (1.0 - xs ** 2 / 2.0) * np.exp(-xs ** 2 / 4.0)
    np.testing.assert_allclose(gamma_eval(spec, xs), closed, atol=1e-9)


def test_h1_kernels_bounded_by_origin_value():
    xs = np.linspace(-5, 5, 101)
    for spec in (BUMP, CovarianceSpec.custom_spectral("xi2_gaussian")):
        vals = gamma_eval(spec, xs)
        assert np.all(np.abs(vals) <= gamma_zero(spec) + 1e-12)


def test_singular_evaluations_raise():
    with pytest.raises(SingularEvaluation):
        gamma_eval(CovarianceSpec.riesz(0.5, dim=1), 0.0)
    with pytest.raises(SingularEvaluation):
        gamma_eval(CovarianceSpec.space_time_white(), 1.0)
    with pytest.raises(SingularEvaluation):
        gamma_zero(CovarianceSpec.riesz(0.5, dim=1))


def test_positive_definiteness_on_point_sets():
    # lattice covariance matrices of bounded kernels have min eigenvalue >= -1e-8
    rng = np.random.default_rng(5)
    for spec in (BUMP, CovarianceSpec.custom_spectral("xi2_gaussian"),
                 CovarianceSpec.gaussian_bump(epsilon=0.3)):
        pts = np.sort(rng.uniform(-6, 6, 32))
        mat = gamma_eval(spec, pts[:, None] - pts[None, :])
        eigs = np.linalg.eigvalsh(mat)
        assert eigs.min() >= -1e-8


def test_gamma_zero_decreasing_in_epsilon():
    for maker in (lambda e: CovarianceSpec.riesz(0.5, dim=1, epsilon=e),
                  lambda e: CovarianceSpec.gaussian_bump(epsilon=e),
                  lambda e: CovarianceSpec.space_time_white(epsilon=e),
                  lambda e: CovarianceSpec.custom_spectral("xi2_gaussian", epsilon=e)):
        values = [gamma_zero(maker(e)) for e in (0.05, 0.2, 0.8, 3.2)]
        assert all(np.isfinite(values))
        assert all(a > b for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# dalang integral
# ---------------------------------------------------------------------------

def test_dalang_riesz_2d_matches_analytic():
    # mu = 2 pi |xi|^(-1) in 2D: integral of mu/(1+|xi|^2) = 2 pi^3
    val = dalang_value(CovarianceSpec.riesz(1.0, dim=2))
    assert val == pytest.approx(2.0 * math.pi ** 3, rel=1e-7)


def test_dalang_near_critical_is_finite():
    val = dalang_value(CovarianceSpec.riesz(1.99, dim=2))
    assert np.isfinite(val) and val > 0


def test_dalang_space_time_white():
    assert dalang_value(CovarianceSpec.space_time_white()) == pytest.approx(math.pi, rel=1e-8)


def test_dalang_requires_h2():
    with pytest.raises(InvalidSpec):
        dalang_value(BUMP)


def test_dalang_detects_divergence():
    from pamlab.kernels import register_spectral_weight

    register_spectral_weight("_test_divergent", lambda r: np.ones_like(np.asarray(r, float)),
                             hypothesis="H1", alpha=0.0)
    spec = CovarianceSpec.custom_spectral("_test_divergent", dim=2)
    with pytest.raises(DivergentIntegral):
        dalang_value(spec)


# ---------------------------------------------------------------------------
# heat kernel
# ---------------------------------------------------------------------------

def test_heat_kernel_values():
    assert heat_kernel(1.0, 0.0, 1) == pytest.approx((2 * math.pi) ** -0.5, abs=1e-12)
    assert heat_kernel(2.0, np.array([1.0, 1.0]), 2) == pytest.approx(
        math.exp(-0.5) / (4 * math.pi), abs=1e-9)
    with pytest.raises(NonPositiveTime):
        heat_kernel(0.0, 0.0, 1)


def test_heat_kernel_semigroup_identity():
    # numerical convolution of p_1 with itself reproduces p_2
    x = np.linspace(-30, 30, 6001)
    dx = x[1] - x[0]
    p1 = heat_kernel(1.0, x, 1)
    conv = np.convolve(p1, p1, mode="same") * dx
    np.testing.assert_allclose(conv, heat_kernel(2.0, x, 1), atol=1e-8)


def test_heat_kernel_unit_mass():
    for t, dim in ((0.3, 1), (2.0, 1), (0.5, 2)):
        half = 8.0 * math.sqrt(t)
        x = np.linspace(-half, half, 2001)
        if dim == 1:
            mass = np.trapezoid(heat_kernel(t, x, 1), x)
        else:
            gx, gy = np.meshgrid(x, x, indexing="ij")
            vals = heat_kernel(t, np.stack([gx, gy], axis=-1), 2)
            mass = np.trapezoid(np.trapezoid(vals, x, axis=1), x)
        assert mass == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------------------
# measures and their heat flow
# ---------------------------------------------------------------------------

def test_single_atom_heat_flow_is_heat_kernel():
    u0 = Measure.dirac(0.7)
    for t, x in ((0.2, -1.0), (1.5, 2.0)):
        assert heat_convolve_measure(t, u0, x) == pytest.approx(
            heat_kernel(t, x - 0.7, 1), rel=1e-14)


def test_two_atom_heat_flow_linearity():
    u0 = Measure.from_atoms([(0.0, 2.0), (1.0, 3.0)])
    expected = 2 * heat_kernel(1.0, 0.0, 1) + 3 * heat_kernel(1.0, 1.0, 1)
    assert heat_convolve_measure(1.0, u0, 0.0) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(1.523797, abs=5e-7)


def test_uniform_density_heat_flow_matches_gaussian_cdf():
    u0 = Measure.uniform_density(-1.0, 1.0, mass=1.0, n=4096)
    got = heat_convolve_measure(1.0, u0, 0.0)
    # independent high-resolution quadrature oracle
    y = np.linspace(-1, 1, 200001)
    oracle = np.trapezoid(0.5 * heat_kernel(1.0, -y, 1), y)
    assert got == pytest.approx(oracle, abs=1e-6)
    phi = 0.5 * (1.0 + math.erf(1.0 / math.sqrt(2.0)))
    assert got == pytest.approx(0.5 * (2 * phi - 1), abs=1e-6)


def test_measure_validation():
    with pytest.raises(EmptyMeasure):
        Measure(atoms=())
    with pytest.raises(InvalidSpec):
        Measure(atoms=((0.0, -1.0),), support_radius=0.0)
    with pytest.raises(InvalidSpec):
        Measure(atoms=((5.0, 1.0),), support_radius=1.0)
    with pytest.raises(NonPositiveTime):
        heat_convolve_measure(0.0, Measure.dirac(0.0), 0.0)


def test_log_heat_flow_matches_linear_where_representable():
    u0 = Measure.from_atoms([(-0.4, 0.5), (0.9, 1.5)])
    xs = np.linspace(-3, 3, 11)
    np.testing.assert_allclose(np.exp(log_heat_convolve_atoms(0.7, u0, xs)),
                               heat_convolve_measure(0.7, u0, xs), rtol=1e-12)
    # far in the tail the log form stays finite while the linear form underflows
    assert np.isfinite(log_heat_convolve_atoms(1.0, u0, 200.0))


# ---------------------------------------------------------------------------
# pinned transition weight
# ---------------------------------------------------------------------------

def test_bridge_kernel_midpoint():
    t = 0.8
    assert bridge_kernel(t, t / 2, 0.0, 0.0, 0.0) == pytest.approx(
        heat_kernel(t / 4, 0.0, 1), rel=1e-14)


def test_bridge_kernel_variance_degenerates_at_endpoints():
    t = 1.0
    for s in (1e-6, 1.0 - 1e-6):
        assert s * (t - s) / t < 1e-5  # the effective variance collapses


def test_bridge_kernel_arithmetic_example():
    got = bridge_kernel(1.0, 0.25, 0.0, 4.0, 1.0)
    expected = heat_kernel(0.1875, 0.0, 1)
    assert got == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.921318, abs=5e-7)


def test_bridge_kernel_time_bounds():
    with pytest.raises(TimeOutOfRange):
        bridge_kernel(1.0, 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(TimeOutOfRange):
        bridge_kernel(1.0, 1.0, 0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# spectral densities
# ---------------------------------------------------------------------------

def test_riesz_constant_matches_gamma_formula():
    for eta, dim in ((0.5, 1), (0.9, 1), (1.0, 2), (1.5, 2)):
        analytic = 2 ** (dim - eta) * math.pi ** (dim / 2) \
            * special.gamma((dim - eta) / 2) / special.gamma(eta / 2)
        assert riesz_constant(eta, dim) == pytest.approx(analytic, rel=1e-9)


def test_synthesis_weight_applies_mollifier():
    xi = np.array([0.5, 1.0, 3.0])
    base = spectral_density(RIESZ_HALF, xi)
    moll = synthesis_weight(CovarianceSpec.riesz(0.5, dim=1, epsilon=0.2), xi)
    np.testing.assert_allclose(moll, base * np.exp(-0.4 * xi ** 2), rtol=1e-13)
