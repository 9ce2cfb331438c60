import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from mfchaos.errors import UnderResolvedKernel
from mfchaos.grid import DensityField, Grid1D
from mfchaos.mollifier import (MollifierKernel, cell_weights, check_resolution, convolve_density,
                               convolve_empirical, convolve_values)

from conftest import gaussian_pdf

# 30-digit mpmath quadrature of the unnormalised bump exp(-1/(1-s^2))
BUMP_Z = 0.443993816168079437823048921171
BUMP_K0 = 0.828568839869105151664159062986
BUMP_M2 = 0.158113636263798230228050428159
BUMP_CDF_MINUS_HALF = 0.122967283277329078085734025563


def test_bump_constants():
    k = MollifierKernel("bump", 1.0)
    assert k.normalization == pytest.approx(BUMP_Z, rel=1e-13)
    assert k.peak == pytest.approx(BUMP_K0, rel=1e-13)
    assert k.second_moment == pytest.approx(BUMP_M2, rel=1e-11)
    assert float(k.cdf(-0.5)) == pytest.approx(BUMP_CDF_MINUS_HALF, abs=1e-12)
    assert MollifierKernel("quartic").second_moment == pytest.approx(1 / 7)


@pytest.mark.parametrize("shape", ["bump", "quartic"])
@pytest.mark.parametrize("eps", [0.05, 0.3, 2.0])
def test_kernel_unit_mass_symmetric_supported(shape, eps):
    k = MollifierKernel(shape, eps)
    mass, _ = integrate.quad(k, -eps, eps, epsabs=0, epsrel=1e-12, limit=200)
    assert abs(mass - 1.0) <= 1e-10
    x = np.linspace(-3 * eps, 3 * eps, 601)
    assert np.all(k(x) >= 0)
    assert np.array_equal(k(x), k(-x))
    assert np.all(k(x[np.abs(x) >= eps]) == 0)


def test_kernel_rejects_bad_arguments():
    with pytest.raises(ValueError):
        MollifierKernel("gauss", 0.1)
    with pytest.raises(ValueError):
        MollifierKernel("bump", 0.0)


def test_single_particle_evaluates_kernel():
    k = MollifierKernel("bump", 1.0)
    assert convolve_empirical(k, [0.0], 0.0) == pytest.approx(BUMP_K0, rel=1e-13)
    for shape in ("bump", "quartic"):
        assert convolve_empirical(MollifierKernel(shape, 0.5), [0.0], 2.0) == 0.0


def test_empirical_density_of_normal_sample():
    # KDE at 0: bias ~ eps^2 m2 phi''(0)/2 (tiny), standard error from the kernel's L2 norm
    k = MollifierKernel("quartic", 0.2)
    pos = np.random.default_rng(42).standard_normal(1000)
    est = convolve_empirical(k, pos, 0.0)
    phi0 = 1 / np.sqrt(2 * np.pi)
    k2, _ = integrate.quad(lambda s: k(s) ** 2, -0.2, 0.2)
    se = np.sqrt(phi0 * k2 / 1000)
    assert abs(est - phi0) <= 3 * se


def test_empirical_matches_brute_force(rng):
    k = MollifierKernel("bump", 0.3)
    pos = rng.normal(size=200)
    x = np.linspace(-3, 3, 41)
    brute = k(x[:, None] - pos[None, :]).mean(axis=1)
    assert np.allclose(convolve_empirical(k, pos, x), brute, rtol=1e-13, atol=1e-15)


def test_constant_field_is_preserved_in_interior():
    g = Grid1D(-5, 5, 401)
    f = DensityField(g, np.full(g.nx, 0.7))
    k = MollifierKernel("bump", 0.3)
    out = convolve_density(k, f)
    interior = np.abs(g.nodes) < 5 - 0.3 - g.dx
    assert np.allclose(out.values[interior], 0.7, rtol=0, atol=1e-14)


def test_spike_gives_discrete_kernel_profile():
    g = Grid1D(-2, 2, 401)
    vals = np.zeros(g.nx)
    vals[200] = 1.0 / g.dx
    k = MollifierKernel("bump", 10 * g.dx)
    out = convolve_density(k, DensityField(g, vals))
    assert abs(out.mass - 1.0) <= 1e-12
    w = cell_weights("bump", k.epsilon, g.dx)
    m = (w.size - 1) // 2
    assert np.allclose(out.values[200 - m:200 + m + 1], w / g.dx, rtol=1e-14)


def test_gaussian_mollification_bias_is_second_order():
    # oracle: dense quadrature of K_eps * phi at the nodes
    g = Grid1D(-10, 10, 2048)
    eps = 0.1
    k = MollifierKernel("bump", eps)
    f = DensityField(g, gaussian_pdf(g.nodes))
    out = convolve_density(k, f)
    dist = np.max(np.abs(out.values - f.values))
    bound = 0.5 * (1 / np.sqrt(2 * np.pi)) * BUMP_M2 * eps ** 2
    assert dist <= 1.1 * bound
    xs = g.nodes[1000:1030:7]
    exact = [integrate.quad(lambda y: k(xi - y) * gaussian_pdf(y), xi - eps, xi + eps,
                            epsabs=1e-15, epsrel=1e-13)[0] for xi in xs]
    # cell-mass weights add an O(dx^2) error of the same order
    assert np.allclose(out.values[1000:1030:7], exact, rtol=0, atol=bound)


def test_resolution_guard():
    k = MollifierKernel("bump", 0.1)
    check_resolution(k, 0.05)
    with pytest.raises(UnderResolvedKernel):
        check_resolution(k, 0.051)
    with pytest.raises(UnderResolvedKernel):
        convolve_values(k, np.ones(50), 0.06)


def test_eps_consistency_on_smooth_density():
    g = Grid1D(-8, 8, 1601)
    f = DensityField(g, gaussian_pdf(g.nodes))
    errs = []
    for eps in (0.4, 0.2, 0.1, 0.05):
        out = convolve_density(MollifierKernel("bump", eps), f)
        errs.append(np.sqrt(np.trapezoid((out.values - f.values) ** 2, dx=g.dx)))
    assert all(b < a for a, b in zip(errs, errs[1:]))


@given(st.sampled_from(["bump", "quartic"]), st.floats(0.02, 0.5), st.floats(0.0, 0.2))
def test_cell_weights_sum_to_one_and_symmetric(shape, ratio, _):
    dx = 0.01
    eps = max(2 * dx, ratio)
    w = cell_weights(shape, eps, dx)
    assert abs(w.sum() - 1.0) <= 1e-14
    assert np.array_equal(w, w[::-1])
    assert np.all(w >= 0)


@given(st.floats(-2, 2), st.floats(0.3, 1.5), st.sampled_from(["bump", "quartic"]))
def test_mass_positivity_symmetry(center, sd, shape):
    g = Grid1D(center - 12, center + 12, 961)
    f = DensityField(g, gaussian_pdf(g.nodes, center, sd))
    out = convolve_density(MollifierKernel(shape, 0.2), f)
    assert abs(out.mass - f.mass) <= 1e-12
    assert np.all(out.values >= 0)
    assert np.allclose(out.values, out.values[::-1], rtol=1e-12, atol=1e-15)
