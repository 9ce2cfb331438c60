"""Densities on uniform 1D grids: norms, excess mass and 1D Wasserstein-2."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import EmptyInput

CLAMP_TOL = 1e-14


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    nx: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("grid needs x_min < x_max")
        if int(self.nx) != self.nx or self.nx < 16:
            raise ValueError("grid needs an integer nx >= 16")

    @classmethod
    def from_spacing(cls, x_min, x_max, dx):
        """Grid whose spacing is at most ``dx``."""
        nx = int(np.ceil((x_max - x_min) / dx - 1e-9)) + 1
        return cls(float(x_min), float(x_max), nx)

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def nodes(self):
        return np.linspace(self.x_min, self.x_max, self.nx)

    def refined(self, factor=2):
        return Grid1D(self.x_min, self.x_max, (self.nx - 1) * factor + 1)


class DensityField:
    """Nonnegative nodal values on a Grid1D at a given time."""

    __slots__ = ("grid", "values", "time_stamp")

    def __init__(self, grid, values, time_stamp=0.0):
        values = np.array(values, dtype=float)
        if values.shape != (grid.nx,):
            raise ValueError(f"expected {grid.nx} values, got shape {values.shape}")
        if values.size and values.min() < -CLAMP_TOL:
            raise ValueError(f"density has negative values (min {values.min():.3e})")
        np.maximum(values, 0.0, out=values)
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.time_stamp = float(time_stamp)

    @classmethod
    def from_function(cls, grid, fn, time_stamp=0.0):
        return cls(grid, fn(grid.nodes), time_stamp)

    @property
    def x(self):
        return self.grid.nodes

    @property
    def mass(self):
        return float(trapezoid(self.values, dx=self.grid.dx))

    def with_values(self, values, time_stamp=None):
        return DensityField(self.grid, values,
                            self.time_stamp if time_stamp is None else time_stamp)

    def __repr__(self):
        return (f"DensityField(nx={self.grid.nx}, t={self.time_stamp:g}, "
                f"mass={self.mass:.6g})")


class Norms(NamedTuple):
    l1: float
    l2: float
    linf: float
    h1_seminorm: float
    h1: float


def derivative(values, dx):
    """Second-order central first derivative, one-sided at the ends."""
    return np.gradient(values, dx, edge_order=2)


def second_derivative(values, dx):
    """Second-order accurate second derivative (4-point one-sided at the ends)."""
    u = np.asarray(values, dtype=float)
    out = np.empty_like(u)
    out[1:-1] = u[2:] - 2.0 * u[1:-1] + u[:-2]
    out[0] = 2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]
    out[-1] = 2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]
    return out / dx ** 2


def norms(field):
    u = field.values
    dx = field.grid.dx
    l1 = trapezoid(np.abs(u), dx=dx)
    l2sq = trapezoid(u * u, dx=dx)
    du = derivative(u, dx)
    semi_sq = trapezoid(du * du, dx=dx)
    return Norms(
        l1=float(l1),
        l2=float(np.sqrt(l2sq)),
        linf=float(np.max(np.abs(u))) if u.size else 0.0,
        h1_seminorm=float(np.sqrt(semi_sq)),
        h1=float(np.sqrt(l2sq + semi_sq)),
    )


def excess_mass(field, m):
    """Mass of the density above level ``m``: int (u - m)^+ dx."""
    if m < 0:
        raise ValueError("level m must be >= 0")
    return float(trapezoid(np.maximum(field.values - m, 0.0), dx=field.grid.dx))


def l2_distance(a, b):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    d = a.values - b.values
    return float(np.sqrt(trapezoid(d * d, dx=a.grid.dx)))


def resample(field, grid):
    """Linear interpolation of a field onto another grid (zero outside)."""
    vals = np.interp(grid.nodes, field.x, field.values, left=0.0, right=0.0)
    return DensityField(grid, vals, field.time_stamp)


# --- Wasserstein-2 via quantile functions ---------------------------------
#
# Each distribution is turned into a quantile function on [0, 1] that is
# piecewise linear (densities: inverse of the trapezoidal CDF) or piecewise
# constant (equal-weight samples). On the merged breakpoints the difference
# of two such functions is linear, so the squared L2 distance is integrated
# exactly.

class _Quantile:
    __slots__ = ("q", "z", "step", "mass")

    def __init__(self, q, z, step, mass):
        self.q, self.z, self.step, self.mass = q, z, step, mass

    def ends(self, left, right):
        """Values at both ends of each merged piece [left, right]."""
        if self.step:
            # sample k owns [k/N, (k+1)/N]; pieces never straddle a breakpoint
            n = self.z.size
            k = np.clip(np.floor(0.5 * (left + right) * n).astype(int), 0, n - 1)
            return self.z[k], self.z[k]
        q, z = self.q, self.z
        last = q.size - 1
        # left ends are right-continuous, right ends left-continuous, so a
        # quantile jump across a gap in the support is resolved correctly
        j = np.clip(np.searchsorted(q, left, side="right") - 1, 0, last - 1)
        at_left = _lerp(q, z, left, j, j + 1)
        j = np.clip(np.searchsorted(q, right, side="left"), 1, last)
        at_right = _lerp(q, z, right, j - 1, j)
        return at_left, at_right


def _lerp(q, z, p, i0, i1):
    span = q[i1] - q[i0]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(span > 0, (p - q[i0]) / span, 0.0)
    s = np.clip(s, 0.0, 1.0)
    return z[i0] + s * (z[i1] - z[i0])


def _density_quantile(field):
    u = field.values
    cdf = cumulative_trapezoid(u, dx=field.grid.dx, initial=0.0)
    mass = cdf[-1]
    if not mass > 0:
        raise EmptyInput("density has zero total mass")
    cdf = cdf / mass
    rising = np.concatenate(([True], np.diff(cdf) > 0))
    # also keep the last node of each flat run so gaps in the support stay sharp
    keep = rising.copy()
    keep[:-1] |= rising[1:]
    return _Quantile(cdf[keep], field.x[keep], False, float(mass))


def _sample_quantile(samples):
    z = np.sort(np.asarray(samples, dtype=float).ravel())
    if z.size == 0:
        raise EmptyInput("sample list is empty")
    return _Quantile(np.arange(z.size + 1) / z.size, z, True, 1.0)


def _as_quantile(obj):
    if isinstance(obj, DensityField):
        return _density_quantile(obj)
    return _sample_quantile(obj)


def wasserstein2(a, b, return_masses=False):
    """W2 between two 1D distributions given as DensityFields or sample lists.

    Densities are renormalised to unit mass; with ``return_masses=True`` the
    pre-normalisation masses are returned as well.
    """
    qa, qb = _as_quantile(a), _as_quantile(b)
    if qa.step and qb.step and qa.z.size == qb.z.size:
        w2 = float(np.sqrt(np.mean((qa.z - qb.z) ** 2)))
    else:
        p = np.union1d(qa.q, qb.q)
        left, right = p[:-1], p[1:]
        a_l, a_r = qa.ends(left, right)
        b_l, b_r = qb.ends(left, right)
        d0, d1 = a_l - b_l, a_r - b_r
        integral = np.sum((right - left) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0)
        w2 = float(np.sqrt(max(integral, 0.0)))
    if return_masses:
        return w2, qa.mass, qb.mass
    return w2


# --- CSV snapshots ----------------------------------------------------------

def write_snapshots_csv(path, fields):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "u"])
        for f in fields:
            for xi, ui in zip(f.x, f.values):
                w.writerow([repr(float(f.time_stamp)), repr(float(xi)), repr(float(ui))])


def read_snapshots_csv(path):
    """Read a t,x,u snapshot file back into DensityFields (one per time)."""
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["t", "x", "u"]:
            raise ValueError(f"unexpected snapshot header {reader.fieldnames}")
        for r in reader:
            rows.setdefault(float(r["t"]), []).append((float(r["x"]), float(r["u"])))
    out = []
    for t, pts in rows.items():
        xs = np.array([p[0] for p in pts])
        us = np.array([p[1] for p in pts])
        grid = Grid1D(float(xs[0]), float(xs[-1]), xs.size)
        out.append(DensityField(grid, us, t))
    return out
