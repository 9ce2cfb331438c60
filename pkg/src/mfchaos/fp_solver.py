"""Explicit conservative solver for du/dt = 1/2 d2/dx2 [D u].

The diffusion coefficient is D = nu^2 with nu = h^{-1}(t, x, (K_eps * u)(x)).
The second derivative acts on the nodal product q = D u in flux form with
zero flux through both ends; end nodes own half cells, so the trapezoidal
mass is conserved to round-off.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .driver import ProbeGrid, check_stability, extract_bounds, invert_driver
from .errors import BlowUp, CflViolation, StabilityWarning
from .grid import DensityField, Grid1D, second_derivative
from .mollifier import MollifierKernel, check_resolution, convolve_values

log = logging.getLogger(__name__)

SCHEMES = ("euler", "heun")
EULER_MAX_CFL = 0.45
# dt * max(D) / dx^2 above this loses positivity of the explicit update
STABILITY_LIMIT = 1.0
BOUNDARY_TOL = 1e-8
CLAMP_BUDGET = 1e-9

DIAGNOSTIC_COLUMNS = ("t", "dt", "mass", "linf", "l2", "h1", "excess_mass",
                      "min_D", "max_D", "clamped_mass")


@dataclass(frozen=True)
class FpConfig:
    grid: Grid1D
    kernel: MollifierKernel
    driver: object
    t_end: float
    cfl_factor: float = 0.4
    time_scheme: str = "euler"
    snapshot_times: tuple = ()
    boundary: str = "zero_flux"
    clamp_negatives: bool = True
    blow_up_threshold: float = 1e6

    def __post_init__(self):
        object.__setattr__(self, "snapshot_times",
                           tuple(float(s) for s in self.snapshot_times))
        if not self.t_end > 0:
            raise ValueError("t_end must be > 0")
        if not 0 < self.cfl_factor < 1:
            raise ValueError("cfl_factor must lie in (0, 1)")
        if self.time_scheme not in SCHEMES:
            raise ValueError(f"time_scheme must be one of {SCHEMES}")
        if self.time_scheme == "euler" and self.cfl_factor > EULER_MAX_CFL:
            raise ValueError(f"cfl_factor must be <= {EULER_MAX_CFL} for explicit Euler")
        if self.boundary != "zero_flux":
            raise ValueError("only zero_flux boundaries are supported")
        ts = self.snapshot_times
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("snapshot_times must be sorted")
        if ts and (ts[0] < 0 or ts[-1] > self.t_end):
            raise ValueError("snapshot_times must lie in [0, t_end]")
        if self.driver.density_dependent:
            check_resolution(self.kernel, self.grid.dx)

    def replace(self, **changes):
        from dataclasses import replace
        return replace(self, **changes)


@dataclass
class FpTrajectory:
    snapshots: list
    diagnostics: dict
    stability: object = None
    blow_up_time: float = None
    boundary_max: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def times(self):
        return [s.time_stamp for s in self.snapshots]

    @property
    def final(self):
        return self.snapshots[-1]

    @property
    def clamped_mass(self):
        return float(self.diagnostics["clamped_mass"][-1])

    @property
    def valid(self):
        return (self.blow_up_time is None and self.boundary_max < BOUNDARY_TOL
                and self.clamped_mass <= CLAMP_BUDGET)

    def snapshot_at(self, t, atol=1e-12):
        for s in self.snapshots:
            if abs(s.time_stamp - t) <= atol:
                return s
        raise KeyError(f"no snapshot at t={t}")

    def write_diagnostics_csv(self, path):
        d = self.diagnostics
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(DIAGNOSTIC_COLUMNS)
            for row in zip(*(d[c] for c in DIAGNOSTIC_COLUMNS)):
                w.writerow([repr(float(v)) for v in row])


def _diffusion_values(driver, kernel, values, x, dx, t):
    if not driver.density_dependent:
        return np.full(values.shape, driver.kind.sigma ** 2)
    v = convolve_values(kernel, values, dx)
    nu = invert_driver(driver, t, x, v)
    return nu * nu


def diffusion_field(driver, kernel, u, t):
    """Nodal diffusion coefficient D = h^{-1}(t, x, K_eps * u)^2 as a field."""
    g = u.grid
    D = _diffusion_values(driver, kernel, u.values, g.nodes, g.dx, t)
    return DensityField(g, D, t)


def _operator(D, u, dx):
    """1/2 d2/dx2 [D u] in zero-flux flux form (half cells at both ends)."""
    q = D * u
    flux = np.diff(q) / dx
    div = np.zeros_like(u)
    div[:-1] += flux
    div[1:] -= flux
    div[0] *= 2.0
    div[-1] *= 2.0
    return 0.5 * div / dx


def _stable_dt(config, D):
    return config.cfl_factor * config.grid.dx ** 2 / float(D.max())


class _Stepper:
    """Holds per-config constants so the time loop avoids recomputing them."""

    def __init__(self, config):
        self.config = config
        self.x = config.grid.nodes
        self.dx = config.grid.dx

    def diffusion(self, values, t):
        c = self.config
        return _diffusion_values(c.driver, c.kernel, values, self.x, self.dx, t)

    def advance(self, values, t, dt=None, t_stop=None):
        """One step from ``values`` at ``t``; returns (new, dt, D, clamped)."""
        c = self.config
        D = self.diffusion(values, t)
        limit = STABILITY_LIMIT * self.dx ** 2 / float(D.max())
        if dt is None:
            dt = c.cfl_factor * self.dx ** 2 / float(D.max())
            if t_stop is not None:
                dt = min(dt, t_stop - t)
        elif dt > limit * (1 + 1e-12):
            raise CflViolation(f"dt={dt:.3e} exceeds the stability limit {limit:.3e}")
        new = values + dt * _operator(D, values, self.dx)
        if c.time_scheme == "heun":
            D2 = self.diffusion(new, t + dt)
            stage = new + dt * _operator(D2, new, self.dx)
            new = 0.5 * (values + stage)
        clamped = 0.0
        if c.clamp_negatives:
            neg = new < 0
            if neg.any():
                clamped = float(-new[neg].sum() * self.dx)
                new[neg] = 0.0
                log.debug("clamped %.3e of negative mass at t=%.6g", clamped, t + dt)
        linf = float(new.max())
        if not math.isfinite(linf) or linf > c.blow_up_threshold:
            raise BlowUp(f"sup-norm {linf:.3e} above {c.blow_up_threshold:g}", t=t + dt)
        return new, dt, D, clamped


def step(config, u, t, dt=None):
    """Advance ``u`` from time ``t`` by one explicit step.

    Without ``dt`` the step is ``cfl_factor * dx^2 / max(D)``; an explicit
    ``dt`` above the stability limit raises CflViolation.
    """
    new, dt_used, _, _ = _Stepper(config).advance(u.values, t, dt)
    return u.with_values(new, t + dt_used), dt_used


def _stability_for(config, u0):
    m = float(u0.values.max())
    driver = config.driver
    g = config.grid
    probe = None
    if type(driver.kind).__name__ == "Custom":
        probe = ProbeGrid.default(m, x_range=(g.x_min, g.x_max), t_range=(0.0, config.t_end))
    bounds = extract_bounds(driver, m, probe)
    return bounds, check_stability(bounds, m)


def solve(config, u0, warn=True):
    """Integrate to ``config.t_end`` and return snapshots plus per-step diagnostics.

    A BlowUp stops the run and is recorded as ``blow_up_time`` rather than raised.
    A failed stability condition is always noted in ``warnings``; ``warn=False``
    skips the StabilityWarning (sweeps that probe the unstable regime on purpose).
    """
    stepper = _Stepper(config)
    dx = stepper.dx
    _, stability = _stability_for(config, u0)
    notes = []
    if not stability.satisfied:
        msg = f"stability condition fails: gamma={stability.gamma:.4g} <= 0"
        if warn:
            warnings.warn(msg, StabilityWarning, stacklevel=2)
        notes.append(msg)

    level = float(u0.values.max())
    cols = {c: [] for c in DIAGNOSTIC_COLUMNS}
    cols["d2_l2"] = []
    total_clamped = 0.0

    def record(t, dt, vals, D):
        end = 0.5 * (vals[0] + vals[-1])
        mass = (vals.sum() - end) * dx
        sq = vals * vals
        l2sq = (sq.sum() - 0.5 * (sq[0] + sq[-1])) * dx
        du = np.gradient(vals, dx, edge_order=2)
        dsq = du * du
        semi = (dsq.sum() - 0.5 * (dsq[0] + dsq[-1])) * dx
        d2 = second_derivative(vals, dx)
        d2sq = d2 * d2
        over = np.maximum(vals - level, 0.0)
        cols["t"].append(t)
        cols["dt"].append(dt)
        cols["mass"].append(mass)
        cols["linf"].append(float(vals.max()))
        cols["l2"].append(math.sqrt(l2sq))
        cols["h1"].append(math.sqrt(l2sq + semi))
        cols["excess_mass"].append((over.sum() - 0.5 * (over[0] + over[-1])) * dx)
        cols["min_D"].append(float(D.min()))
        cols["max_D"].append(float(D.max()))
        cols["clamped_mass"].append(total_clamped)
        cols["d2_l2"].append(math.sqrt((d2sq.sum() - 0.5 * (d2sq[0] + d2sq[-1])) * dx))

    vals = np.array(u0.values, dtype=float)
    t = float(u0.time_stamp)
    t_end = float(config.t_end)
    pending = list(config.snapshot_times) or [t, t_end]
    snaps = []
    while pending and pending[0] <= t:
        snaps.append(u0.with_values(vals, pending.pop(0)))
    record(t, 0.0, vals, stepper.diffusion(vals, t))
    boundary = max(vals[0], vals[-1])
    blow_up = None

    # stop within a relative sliver of t_end instead of taking a tiny last step
    t_tol = 1e-12 * max(1.0, t_end)
    while t < t_end - t_tol:
        try:
            new, dt, D, clamped = stepper.advance(vals, t, t_stop=t_end)
        except BlowUp as exc:
            blow_up = exc.t
            notes.append(str(exc))
            log.warning("blow-up at t=%.6g: %s", exc.t, exc)
            break
        t_new = t + dt
        if t_new >= t_end - t_tol:
            t_new = t_end
        total_clamped += clamped
        while pending and pending[0] <= t_new:
            ts = pending.pop(0)
            theta = 1.0 if t_new == t else (ts - t) / (t_new - t)
            snap = new if theta >= 1.0 else (1.0 - theta) * vals + theta * new
            snaps.append(u0.with_values(snap, ts))
        vals, t = new, t_new
        record(t, dt, vals, D)
        boundary = max(boundary, vals[0], vals[-1])

    if total_clamped > CLAMP_BUDGET:
        notes.append(f"clamped negative mass {total_clamped:.3e} exceeds {CLAMP_BUDGET:g}")
    if boundary >= BOUNDARY_TOL:
        notes.append(f"boundary density {boundary:.3e} exceeds {BOUNDARY_TOL:g}; widen the domain")
    diagnostics = {k: np.asarray(v, dtype=float) for k, v in cols.items()}
    return FpTrajectory(
        snapshots=snaps,
        diagnostics=diagnostics,
        stability=stability,
        blow_up_time=blow_up,
        boundary_max=float(boundary),
        warnings=notes,
    )
