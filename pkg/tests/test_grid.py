import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mfchaos.errors import EmptyInput
from mfchaos.grid import (DensityField, Grid1D, excess_mass, l2_distance, norms,
                          read_snapshots_csv, resample, second_derivative, wasserstein2,
                          write_snapshots_csv)

from conftest import gaussian_pdf

L2SQ_GAUSS = 1 / (2 * math.sqrt(math.pi))
SEMI_SQ_GAUSS = 1 / (4 * math.sqrt(math.pi))


def test_grid_construction():
    g = Grid1D(-1.0, 3.0, 17)
    assert g.dx * (g.nx - 1) == 4.0
    assert g.nodes[0] == -1.0 and g.nodes[-1] == 3.0
    assert Grid1D.from_spacing(-16, 16, 0.05).nx == 641
    assert g.refined(2).nx == 33
    for bad in ((1, 0, 20), (0, 1, 15), (0, 1, 20.5)):
        with pytest.raises(ValueError):
            Grid1D(*bad)


def test_density_field_validation():
    g = Grid1D(0, 1, 16)
    with pytest.raises(ValueError):
        DensityField(g, np.full(16, -1e-3))
    with pytest.raises(ValueError):
        DensityField(g, np.ones(15))
    f = DensityField(g, np.full(16, -1e-15))
    assert f.values.min() == 0.0
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_zero_field_norms():
    g = Grid1D(-1, 1, 32)
    assert norms(DensityField(g, np.zeros(32))) == (0.0, 0.0, 0.0, 0.0, 0.0)


def test_gaussian_norms():
    g = Grid1D(-10, 10, 4096)
    n = norms(DensityField(g, gaussian_pdf(g.nodes)))
    assert abs(n.l2 ** 2 - L2SQ_GAUSS) <= 1e-6
    assert abs(n.h1_seminorm ** 2 - SEMI_SQ_GAUSS) <= 1e-5
    assert n.l1 == pytest.approx(1.0, abs=1e-12)


def test_plateau_linf():
    g = Grid1D(-1, 1, 41)
    vals = np.where(np.abs(g.nodes) < 0.3, 2.0, 0.0)
    assert norms(DensityField(g, vals)).linf == 2.0


def test_excess_mass():
    g = Grid1D(-2, 2, 401)
    f = DensityField(g, gaussian_pdf(g.nodes))
    assert excess_mass(f, 0.5) == 0.0
    lam, m = 1.0, 0.3
    vals = np.where(np.abs(g.nodes) <= lam / 2 + 1e-12, m + 1, 0.0)
    assert abs(excess_mass(DensityField(g, vals), m) - lam) <= g.dx * (1 + 1e-9)
    with pytest.raises(ValueError):
        excess_mass(f, -1)


def test_h1_seminorm_second_order():
    errs = []
    for nx in (201, 401):
        g = Grid1D(-10, 10, nx)
        n = norms(DensityField(g, gaussian_pdf(g.nodes)))
        errs.append(abs(n.h1_seminorm ** 2 - SEMI_SQ_GAUSS))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


def test_second_derivative_exact_on_cubics():
    g = Grid1D(-1, 2, 31)
    x = g.nodes
    d2 = second_derivative(x ** 3 - 2 * x ** 2 + x, g.dx)
    assert np.allclose(d2, 6 * x - 4, atol=1e-9)


@given(st.floats(0.1, 10.0))
def test_norms_homogeneous(lam):
    g = Grid1D(-6, 6, 301)
    base = gaussian_pdf(g.nodes)
    a, b = norms(DensityField(g, base)), norms(DensityField(g, lam * base))
    for field in ("l1", "l2", "linf", "h1_seminorm"):
        assert getattr(b, field) == pytest.approx(lam * getattr(a, field), rel=1e-12)


def test_w2_examples():
    assert wasserstein2([0.0], [1.0]) == 1.0
    assert wasserstein2([1.0, 2.0, 5.0], [5.0, 1.0, 2.0]) == 0.0
    a, b = [0.0, 1.0, 2.0], [0.5, 1.5, 2.5]
    brute = min(math.sqrt(np.mean((np.array(a) - np.array(p)) ** 2))
                for p in itertools.permutations(b))
    assert wasserstein2(a, b) == pytest.approx(0.5, abs=1e-15)
    assert wasserstein2(a, b) == pytest.approx(brute, abs=1e-15)


def test_w2_unequal_sample_sizes():
    # {0, 1} vs {0, 0.5, 1}: quantile steps on [0,1/3,1/2,2/3,1]
    # differences 0, 0.5, 0.5, 0 with lengths 1/3, 1/6, 1/6, 1/3
    expect = math.sqrt(0.25 / 3)
    assert wasserstein2([0.0, 1.0], [0.0, 0.5, 1.0]) == pytest.approx(expect, rel=1e-14)


def test_w2_between_gaussian_densities():
    # closed form for normals: W2^2 = (m1 - m2)^2 + (s1 - s2)^2
    g = Grid1D(-15, 15, 6001)
    a = DensityField(g, gaussian_pdf(g.nodes, 0.0, 1.0))
    b = DensityField(g, gaussian_pdf(g.nodes, 0.7, 1.5))
    assert wasserstein2(a, b) == pytest.approx(math.hypot(0.7, 0.5), abs=1e-4)


def test_w2_density_vs_samples_and_masses():
    g = Grid1D(-10, 10, 4001)
    f = DensityField(g, 2.0 * gaussian_pdf(g.nodes))
    q = (np.arange(20000) + 0.5) / 20000
    from scipy.stats import norm
    w2, ma, mb = wasserstein2(f, norm.ppf(q), return_masses=True)
    assert w2 < 5e-3
    assert ma == pytest.approx(2.0, rel=1e-12) and mb == 1.0


def test_w2_handles_support_gap():
    # two separated blocks against their mirror: piecewise-exact integration
    g = Grid1D(0, 10, 1001)
    vals = np.where((g.nodes > 1) & (g.nodes < 2), 1.0, 0.0) + np.where((g.nodes > 8) & (g.nodes < 9), 1.0, 0.0)
    f = DensityField(g, vals)
    shifted = DensityField(g, np.roll(vals, 50))
    assert wasserstein2(f, shifted) == pytest.approx(0.5, abs=1e-12)


def test_w2_empty_inputs():
    g = Grid1D(0, 1, 16)
    with pytest.raises(EmptyInput):
        wasserstein2(DensityField(g, np.zeros(16)), [0.5])
    with pytest.raises(EmptyInput):
        wasserstein2([], [0.5])


@given(st.integers(-200, 200))
def test_w2_translation(k):
    g = Grid1D(-20, 20, 2001)
    base = DensityField(g, gaussian_pdf(g.nodes))
    moved = DensityField(g, gaussian_pdf(g.nodes - k * g.dx))
    assert wasserstein2(base, moved) == pytest.approx(abs(k) * g.dx, abs=1e-9)


samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=30)


@given(samples, samples, samples)
def test_w2_triangle(a, b, c):
    assert wasserstein2(a, c) <= wasserstein2(a, b) + wasserstein2(b, c) + 1e-9


@given(samples, samples)
def test_w2_symmetric_nonnegative(a, b):
    d = wasserstein2(a, b)
    assert d >= 0
    assert d == pytest.approx(wasserstein2(b, a), rel=1e-12, abs=1e-12)


def test_resample_and_l2_distance():
    g = Grid1D(-5, 5, 101)
    f = DensityField(g, gaussian_pdf(g.nodes), 0.5)
    r = resample(f, g.refined(2))
    assert np.array_equal(r.values[::2], f.values)
    assert l2_distance(f, f) == 0.0
    with pytest.raises(ValueError):
        l2_distance(f, r)


def test_snapshot_csv_roundtrip(tmp_path):
    g = Grid1D(-1, 1, 21)
    fields = [DensityField(g, gaussian_pdf(g.nodes, 0, s), t) for s, t in ((1, 0.0), (2, 0.5))]
    path = tmp_path / "snap.csv"
    write_snapshots_csv(path, fields)
    assert path.read_text().splitlines()[0] == "t,x,u"
    back = read_snapshots_csv(path)
    assert [b.time_stamp for b in back] == [0.0, 0.5]
    for a, b in zip(fields, back):
        assert np.array_equal(a.values, b.values)
