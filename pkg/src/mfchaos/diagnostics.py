"""Energy-budget quantities, Gronwall fits and sup-norm smoothing estimates."""
from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields

import numpy as np
from scipy.integrate import trapezoid

from .errors import NonPositiveEnergy, WindowEmpty
from .grid import derivative, second_derivative

MIN_FIT_POINTS = 8


@dataclass(frozen=True)
class EnergyBudget:
    t: float
    i_energy: float
    t1: float
    t3_crit_bound: float
    coercivity_margin: float
    d2_l2: float


ENERGY_COLUMNS = tuple(f.name for f in fields(EnergyBudget))


def energy_budget(u, D, bounds, m):
    """Highest-order terms of the H1 energy balance on one snapshot.

    ``t1 = -1/2 int D (u_xx)^2`` is the dissipation and
    ``t3_crit_bound = (C_0 m / c_h) ||u_xx||^2`` bounds the critical
    feedback term; their difference is the coercivity margin.
    """
    if u.grid != D.grid:
        raise ValueError("u and D live on different grids")
    dx = u.grid.dx
    d1 = derivative(u.values, dx)
    d2 = second_derivative(u.values, dx)
    d2sq = d2 * d2
    d2_l2_sq = float(trapezoid(d2sq, dx=dx))
    t1 = -0.5 * float(trapezoid(D.values * d2sq, dx=dx))
    t3 = bounds.C_0 * m / bounds.c_h * d2_l2_sq if math.isfinite(bounds.c_h) else 0.0
    return EnergyBudget(
        t=u.time_stamp,
        i_energy=0.5 * float(trapezoid(d1 * d1, dx=dx)),
        t1=t1,
        t3_crit_bound=float(t3),
        coercivity_margin=float(-t1 - t3),
        d2_l2=math.sqrt(d2_l2_sq),
    )


def write_energy_csv(path, budgets):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ENERGY_COLUMNS)
        for b in budgets:
            w.writerow([repr(float(v)) for v in astuple(b)])


def _series(series):
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("series must be a sequence of (t, e) pairs")
    if arr.shape[0] < MIN_FIT_POINTS:
        raise ValueError(f"series needs at least {MIN_FIT_POINTS} points")
    t, e = arr[:, 0], arr[:, 1]
    if np.any(~(e > 0)):
        raise NonPositiveEnergy("energy values must be positive for a log-scale fit")
    return t, e


def gronwall_fit(series):
    """Fit log e(t) = log e(t0) + 2 c (t - t0) by least squares.

    The line is pinned at the first sample so the envelope starts at e(t0).
    Returns (c_growth, rms log-scale residual).
    """
    t, e = _series(series)
    s = t - t[0]
    y = np.log(e) - math.log(e[0])
    denom = float(np.dot(s, s))
    if denom == 0:
        raise ValueError("series needs at least two distinct times")
    c = float(np.dot(s, y)) / (2.0 * denom)
    resid = y - 2.0 * c * s
    return c, float(np.sqrt(np.mean(resid * resid)))


def sup_growth_rate(series):
    """Smallest c with e(t_j) <= e(t_i) exp(2 c (t_j - t_i)) on consecutive samples."""
    t, e = _series(series)
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValueError("times must be strictly increasing")
    return float(np.max(0.5 * np.diff(np.log(e)) / dt))


def smoothing_threshold(bounds, c_a):
    """t* = (C_D' c_a / c_0^2)^2 with C_D' = 2 C_0 / c_h."""
    if not c_a > 0:
        raise ValueError("c_a must be > 0")
    return (bounds.sensitivity * c_a / bounds.c_0 ** 2) ** 2


def estimate_aronson(trajectory, t_window):
    """max of sqrt(t) * linf(u(t)) over snapshots with t in the window."""
    t_lo, t_hi = (float(v) for v in t_window)
    if not t_lo > 0:
        raise ValueError("window must start at t > 0")
    if t_hi < t_lo:
        raise ValueError("window needs t_lo <= t_hi")
    vals = [math.sqrt(s.time_stamp) * float(s.values.max())
            for s in trajectory.snapshots if t_lo <= s.time_stamp <= t_hi]
    if not vals:
        raise WindowEmpty(f"no snapshot in [{t_lo:g}, {t_hi:g}]")
    return max(vals)


def nonincreasing_within(values, rtol):
    """True if no value exceeds an earlier one by more than ``rtol`` relative."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return True
    running_min = np.minimum.accumulate(v)
    return bool(np.all(v <= running_min * (1.0 + rtol)))


def worst_rise(values):
    """Largest relative rise of a value over the running minimum before it."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    running_min = np.minimum.accumulate(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        rise = np.where(running_min > 0, v / running_min - 1.0, 0.0)
    return float(rise.max())
