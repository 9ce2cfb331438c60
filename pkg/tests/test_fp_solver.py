import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfchaos.driver import DriverSpec, extract_bounds
from mfchaos.errors import CflViolation, StabilityWarning, UnderResolvedKernel
from mfchaos.fp_solver import DIAGNOSTIC_COLUMNS, FpConfig, diffusion_field, solve, step
from mfchaos.grid import DensityField, Grid1D, l2_distance
from mfchaos.mollifier import MollifierKernel, convolve_density

from conftest import gaussian_pdf

LIN3 = DriverSpec.linear(1, 3)


def peaked_gaussian(grid, peak=0.4, mean=0.0):
    sd = 1 / (peak * math.sqrt(2 * math.pi))
    return DensityField(grid, gaussian_pdf(grid.nodes, mean, sd))


def test_diffusion_of_empty_field_is_basal():
    g = Grid1D(-4, 4, 161)
    D = diffusion_field(DriverSpec.linear(1, 2), MollifierKernel("bump", 0.2),
                        DensityField(g, np.zeros(g.nx)), 0.0)
    assert np.all(D.values == 4.0)


def test_diffusion_at_unit_mollified_density():
    g = Grid1D(-4, 4, 161)
    D = diffusion_field(LIN3, MollifierKernel("bump", 0.2), DensityField(g, np.ones(g.nx)), 0.0)
    assert D.values[80] == pytest.approx(16.0, abs=1e-12)


def test_perturbed_diffusion_within_bounds():
    g = Grid1D(-8, 8, 321)
    spec = DriverSpec.perturbed(1.0, 2.0, 0.3, 2.0)
    k = MollifierKernel("quartic", 0.3)
    u = DensityField(g, 1.5 * gaussian_pdf(g.nodes, 0.5, 0.4))
    D = diffusion_field(spec, k, u, 0.0)
    b = extract_bounds(spec, float(convolve_density(k, u).values.max()))
    assert np.all(D.values >= b.c_0 ** 2 - 1e-12)
    assert np.all(D.values <= b.C_0 ** 2 + 1e-12)


def _config(grid, driver=LIN3, eps=0.4, t_end=0.1, **kw):
    return FpConfig(grid, MollifierKernel("bump", eps), driver, t_end, **kw)


def test_stationary_profile_is_unchanged():
    g = Grid1D(-2, 2, 81)
    u = DensityField(g, np.full(g.nx, 0.25))
    new, _ = step(_config(g, DriverSpec.constant(1.3)), u, 0.0)
    assert np.allclose(new.values, u.values, rtol=0, atol=1e-16)


def test_single_cell_spike_spreads_by_the_stencil():
    g = Grid1D(-1, 1, 201)
    vals = np.zeros(g.nx)
    vals[100] = 1 / g.dx
    sigma = 0.8
    cfg = _config(g, DriverSpec.constant(sigma))
    new, dt = step(cfg, DensityField(g, vals), 0.0)
    r = dt * sigma ** 2 / (2 * g.dx ** 2)
    assert r == pytest.approx(0.5 * cfg.cfl_factor)
    assert new.values[99] == pytest.approx(r / g.dx, rel=1e-13)
    assert new.values[101] == pytest.approx(r / g.dx, rel=1e-13)
    assert new.values[100] == pytest.approx((1 - 2 * r) / g.dx, rel=1e-13)
    assert np.count_nonzero(new.values) == 3
    assert abs(new.mass - 1.0) <= 1e-13


def test_explicit_dt_above_limit_raises():
    g = Grid1D(-4, 4, 161)
    u = peaked_gaussian(g)
    cfg = _config(g)
    with pytest.raises(CflViolation):
        step(cfg, u, 0.0, dt=g.dx ** 2 / 9.0 * 1.01)
    _, dt = step(cfg, u, 0.0, dt=1e-5)
    assert dt == 1e-5


def test_config_validation():
    g = Grid1D(-4, 4, 161)
    with pytest.raises(ValueError):
        _config(g, cfl_factor=0.5)
    _config(g, cfl_factor=0.5, time_scheme="heun")
    with pytest.raises(ValueError):
        _config(g, snapshot_times=(0.05, 0.01))
    with pytest.raises(ValueError):
        _config(g, snapshot_times=(0.2,))
    with pytest.raises(UnderResolvedKernel):
        _config(g, eps=0.05)
    # density-independent volatility skips the guard
    _config(g, DriverSpec.constant(1.0), eps=0.05)


def test_heat_variance_growth():
    g = Grid1D(-10, 10, 2048)
    sigma, t_end = 1.0, 0.2
    cfg = _config(g, DriverSpec.constant(sigma), t_end=t_end, cfl_factor=0.45)
    final = solve(cfg, DensityField(g, gaussian_pdf(g.nodes))).final
    var = np.trapezoid(g.nodes ** 2 * final.values, dx=g.dx) / final.mass
    assert var == pytest.approx(1 + sigma ** 2 * t_end, rel=0.01)


def test_snapshots_and_diagnostics_ordering():
    g = Grid1D(-12, 12, 481)
    times = (0.0, 0.013, 0.05, 0.1)
    traj = solve(_config(g, snapshot_times=times), peaked_gaussian(g))
    assert traj.times == list(times)
    t = traj.diagnostics["t"]
    assert np.all(np.diff(t) > 0) and t[-1] == 0.1
    assert set(DIAGNOSTIC_COLUMNS) <= set(traj.diagnostics)
    assert traj.snapshot_at(0.05).time_stamp == 0.05
    assert traj.valid


def test_snapshot_interpolation_between_steps():
    g = Grid1D(-12, 12, 481)
    u0 = peaked_gaussian(g)
    cfg = _config(g, snapshot_times=(0.0, 0.1))
    first, dt = step(cfg, u0, 0.0)
    half = solve(cfg.replace(t_end=dt, snapshot_times=(0.0, 0.5 * dt, dt)), u0)
    mid = half.snapshot_at(0.5 * dt).values
    assert np.allclose(mid, 0.5 * (u0.values + first.values), rtol=0, atol=1e-15)


def test_blow_up_is_recorded_not_raised():
    g = Grid1D(-12, 12, 481)
    traj = solve(_config(g, blow_up_threshold=0.1), peaked_gaussian(g))
    assert traj.blow_up_time is not None and not traj.valid
    assert any("sup-norm" in w for w in traj.warnings)


def test_stability_warning_when_condition_fails():
    g = Grid1D(-12, 12, 481)
    with pytest.warns(StabilityWarning):
        traj = solve(_config(g, DriverSpec.linear(1, 1.5), t_end=0.01), peaked_gaussian(g, 1.0))
    assert not traj.stability.satisfied
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        solve(_config(g, DriverSpec.linear(1, 1.5), t_end=0.01), peaked_gaussian(g, 1.0), warn=False)


def test_narrow_domain_is_flagged_invalid():
    g = Grid1D(-3, 3, 121)
    traj = solve(_config(g, t_end=0.2), peaked_gaussian(g))
    assert traj.boundary_max >= 1e-8 and not traj.valid


def test_l2_and_linf_decay_with_stability():
    g = Grid1D(-16, 16, 641)
    traj = solve(_config(g, eps=0.2, t_end=0.3), peaked_gaussian(g))
    l2 = traj.diagnostics["l2"]
    linf = traj.diagnostics["linf"]
    assert np.all(np.diff(l2) <= 1e-8)
    assert np.all(np.diff(linf) <= 1e-6 * np.diff(traj.diagnostics["t"]) + 1e-15)
    em = traj.diagnostics["excess_mass"]
    assert np.all(em <= 1e-8)


def test_euler_and_heun_agree_to_first_order():
    g = Grid1D(-12, 12, 481)
    u0 = peaked_gaussian(g)
    ends = {}
    for scheme in ("euler", "heun"):
        traj = solve(_config(g, t_end=0.1, cfl_factor=0.4, time_scheme=scheme), u0)
        ends[scheme] = traj
    dt = float(ends["euler"].diagnostics["dt"][1:].max())
    assert l2_distance(ends["euler"].final, ends["heun"].final) <= 10 * dt


def test_spatial_convergence_order_two():
    # fine-grid reference, eps fixed and resolved on every grid
    t_end, eps = 0.1, 0.4
    fine = Grid1D(-12, 12, 1921)
    ref = solve(_config(fine, eps=eps, t_end=t_end), peaked_gaussian(fine)).final
    errs = []
    for nx in (241, 481):
        g = Grid1D(-12, 12, nx)
        sol = solve(_config(g, eps=eps, t_end=t_end), peaked_gaussian(g)).final
        stride = (fine.nx - 1) // (nx - 1)
        on_coarse = DensityField(g, ref.values[::stride])
        errs.append(l2_distance(sol, on_coarse))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.3)


def test_diagnostics_csv(tmp_path):
    g = Grid1D(-12, 12, 481)
    traj = solve(_config(g, t_end=0.01), peaked_gaussian(g))
    path = tmp_path / "diag.csv"
    traj.write_diagnostics_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(DIAGNOSTIC_COLUMNS)
    assert len(lines) == len(traj.diagnostics["t"]) + 1


@settings(max_examples=15)
@given(st.floats(-2, 2), st.floats(0.6, 1.5), st.floats(0.0, 1.0), st.sampled_from(["bump", "quartic"]))
def test_mass_conservation_and_positivity(shift, sd, weight, shape):
    g = Grid1D(-14, 14, 561)
    vals = (1 - weight) * gaussian_pdf(g.nodes, shift, sd) + weight * gaussian_pdf(g.nodes, -shift, 0.7)
    cfg = FpConfig(g, MollifierKernel(shape, 0.25), DriverSpec.perturbed(1.0, 2.5, 0.2, 1.5), 0.05)
    traj = solve(cfg, DensityField(g, vals))
    mass = traj.diagnostics["mass"]
    assert np.max(np.abs(mass - mass[0])) <= 1e-9
    assert traj.clamped_mass <= 1e-9
    assert all(s.values.min() >= 0 for s in traj.snapshots)
