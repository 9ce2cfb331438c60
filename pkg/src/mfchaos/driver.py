"""Regular drivers h(t, x, z) and the implicit volatility they define.

The volatility at ambient density ``v`` is the unique root ``z`` of
``h(t, x, z) = v``. Drivers are strictly increasing in ``z`` with slope
bounded below by ``c_h``, so the root always exists and is unique.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import BracketFailure, DegenerateDriver, NonConvergence

# convolution round-off tolerated on the density argument
NEGATIVE_CLAMP = 1e-10
MAX_EXPANSIONS = 64
MAX_ITER = 200


@dataclass(frozen=True)
class Linear:
    """h(z) = a*z - b."""

    a: float
    b: float


@dataclass(frozen=True)
class MonotonePerturbed:
    """h(z) = a*z + amplitude*sin(frequency*z) - b."""

    a: float
    b: float
    amplitude: float
    frequency: float


@dataclass(frozen=True)
class Custom:
    """User driver. Both callables must broadcast over numpy arrays."""

    h: Callable
    dh: Callable


@dataclass(frozen=True)
class ConstantVolatility:
    """Density-independent volatility ``sigma``.

    This is the a -> inf limit of ``Linear(a, a*sigma)``. It has no finite
    driver function, so it is only usable as a linear-diffusion control.
    """

    sigma: float


DriverKind = Union[Linear, MonotonePerturbed, Custom, ConstantVolatility]


def _probe_lattice():
    t = np.array([0.0, 0.5, 1.0])
    x = np.linspace(-10.0, 10.0, 11)
    z = np.linspace(-20.0, 20.0, 81)
    return np.meshgrid(t, x, z, indexing="ij")


@dataclass(frozen=True)
class DriverSpec:
    kind: DriverKind
    root_tolerance: float = 1e-12
    bracket_halfwidth: float = 1.0

    def __post_init__(self):
        if not self.root_tolerance > 0:
            raise ValueError("root_tolerance must be > 0")
        if not self.bracket_halfwidth > 0:
            raise ValueError("bracket_halfwidth must be > 0")
        k = self.kind
        if isinstance(k, Linear):
            if not (k.a > 0 and k.b > 0):
                raise ValueError("Linear driver needs a > 0 and b > 0")
        elif isinstance(k, MonotonePerturbed):
            if not (k.a > 0 and k.b > 0):
                raise ValueError("MonotonePerturbed driver needs a > 0 and b > 0")
            if not k.a - abs(k.amplitude * k.frequency) > 0:
                raise ValueError(
                    "MonotonePerturbed driver needs a - |amplitude*frequency| > 0"
                )
        elif isinstance(k, ConstantVolatility):
            if not k.sigma > 0:
                raise ValueError("ConstantVolatility needs sigma > 0")
        elif isinstance(k, Custom):
            t, x, z = _probe_lattice()
            slope = np.broadcast_to(np.asarray(k.dh(t, x, z), dtype=float), z.shape)
            if not np.all(slope > 0):
                raise ValueError("Custom driver: dh/dz must be > 0 on the probe lattice")
        else:
            raise TypeError(f"unknown driver kind {k!r}")

    @classmethod
    def linear(cls, a, b, **kw):
        return cls(Linear(float(a), float(b)), **kw)

    @classmethod
    def perturbed(cls, a, b, amplitude, frequency, **kw):
        return cls(MonotonePerturbed(float(a), float(b), float(amplitude), float(frequency)), **kw)

    @classmethod
    def constant(cls, sigma, **kw):
        return cls(ConstantVolatility(float(sigma)), **kw)

    @classmethod
    def custom(cls, h, dh, **kw):
        return cls(Custom(h, dh), **kw)

    @property
    def name(self):
        return type(self.kind).__name__

    def h(self, t, x, z):
        k = self.kind
        if isinstance(k, Linear):
            return k.a * np.asarray(z, dtype=float) - k.b
        if isinstance(k, MonotonePerturbed):
            z = np.asarray(z, dtype=float)
            return k.a * z + k.amplitude * np.sin(k.frequency * z) - k.b
        if isinstance(k, Custom):
            return k.h(t, x, z)
        raise TypeError("ConstantVolatility has no driver function")

    def dh(self, t, x, z):
        k = self.kind
        if isinstance(k, Linear):
            return np.full_like(np.asarray(z, dtype=float), k.a)
        if isinstance(k, MonotonePerturbed):
            z = np.asarray(z, dtype=float)
            return k.a + k.amplitude * k.frequency * np.cos(k.frequency * z)
        if isinstance(k, Custom):
            return k.dh(t, x, z)
        raise TypeError("ConstantVolatility has no driver function")

    @property
    def density_dependent(self):
        return not isinstance(self.kind, ConstantVolatility)


@dataclass(frozen=True)
class DriverBounds:
    c_h: float
    c_0: float
    C_0: float

    def __post_init__(self):
        if not self.c_h > 0:
            raise ValueError("c_h must be > 0")
        if not 0 < self.c_0 <= self.C_0:
            raise ValueError("bounds need 0 < c_0 <= C_0")

    @property
    def sensitivity(self):
        """Bound 2*C_0/c_h on |dD/dv| over the admissible density range."""
        return 2.0 * self.C_0 / self.c_h


@dataclass(frozen=True)
class StabilityReport:
    m_inf: float
    gamma: float
    satisfied: bool
    margin: float


@dataclass(frozen=True)
class ProbeGrid:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray

    @classmethod
    def default(cls, m_inf, x_range=(-10.0, 10.0), t_range=(0.0, 1.0)):
        return cls(
            t=np.linspace(*t_range, 3),
            x=np.linspace(*x_range, 21),
            v=np.linspace(0.0, float(m_inf), 17),
        )


def _clamp_density(v):
    v = np.asarray(v, dtype=float)
    if np.any(v < -NEGATIVE_CLAMP):
        raise ValueError(f"density argument below -{NEGATIVE_CLAMP}: {v.min()!r}")
    return np.maximum(v, 0.0)


def _solve_increasing(f, df, target, center, halfwidth, tol):
    """Vectorised safeguarded Newton for f(z) = target with f increasing."""
    target = np.asarray(target, dtype=float)
    center = np.broadcast_to(np.asarray(center, dtype=float), target.shape).copy()
    lo = center - halfwidth
    hi = center + halfwidth
    f_lo = f(lo) - target
    f_hi = f(hi) - target
    width = float(halfwidth)
    for _ in range(MAX_EXPANSIONS):
        low_bad = f_lo > 0
        high_bad = f_hi < 0
        if not (low_bad.any() or high_bad.any()):
            break
        width *= 2.0
        if low_bad.any():
            lo = np.where(low_bad, center - width, lo)
            f_lo = np.where(low_bad, f(lo) - target, f_lo)
        if high_bad.any():
            hi = np.where(high_bad, center + width, hi)
            f_hi = np.where(high_bad, f(hi) - target, f_hi)
    else:
        if np.any(f_lo > 0) or np.any(f_hi < 0):
            raise BracketFailure(
                f"no sign change after {MAX_EXPANSIONS} bracket expansions"
            )

    z = np.clip(center, lo, hi)
    for _ in range(MAX_ITER):
        r = f(z) - target
        done = np.abs(r) <= tol
        if done.all():
            return z
        hi = np.where(r > 0, z, hi)
        lo = np.where(r < 0, z, lo)
        slope = df(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = z - r / slope
        inside = np.isfinite(step) & (step > lo) & (step < hi)
        z = np.where(done, z, np.where(inside, step, 0.5 * (lo + hi)))
    r = f(z) - target
    if np.all(np.abs(r) <= tol):
        return z
    raise NonConvergence(
        f"residual {np.abs(r).max():.3e} above tolerance {tol:.1e} after {MAX_ITER} iterations"
    )


def invert_driver(spec, t, x, v):
    """Return the volatility z with ``|h(t, x, z) - v| <= spec.root_tolerance``.

    ``x`` and ``v`` broadcast against each other. Densities slightly below zero
    (down to -1e-10) are treated as zero.
    """
    v = _clamp_density(v)
    k = spec.kind
    if isinstance(k, Linear):
        z = (v + k.b) / k.a
    elif isinstance(k, ConstantVolatility):
        z = np.full(np.broadcast(np.asarray(x, dtype=float), v).shape, k.sigma)
    else:
        x_b, v_b = np.broadcast_arrays(np.asarray(x, dtype=float), v)
        if isinstance(k, MonotonePerturbed):
            center = (v_b + k.b) / k.a
            halfwidth = max(spec.bracket_halfwidth, abs(k.amplitude) / k.a * 1.01)
        else:
            center = np.zeros_like(v_b)
            halfwidth = spec.bracket_halfwidth
        z = _solve_increasing(
            lambda zz: spec.h(t, x_b, zz),
            lambda zz: spec.dh(t, x_b, zz),
            v_b,
            center,
            halfwidth,
            spec.root_tolerance,
        )
    return float(z) if np.ndim(z) == 0 else z


def basal_volatility(spec, t=0.0, x=0.0):
    return invert_driver(spec, t, x, 0.0)


def _probed(spec, m_inf, probe):
    t, x, v = np.meshgrid(probe.t, probe.x, probe.v, indexing="ij")
    zs = np.empty_like(v)
    for i, ti in enumerate(probe.t):
        zs[i] = invert_driver(spec, float(ti), x[i], v[i])
    return t, x, v, zs


def extract_bounds(spec, m_inf, probe_grid=None, convention="range"):
    """Structural constants (c_h, c_0, C_0) of a driver.

    ``convention="range"`` takes C_0 as the largest volatility over densities
    in [0, m_inf]; ``"basal"`` takes it at zero density only.
    """
    if m_inf < 0:
        raise ValueError("m_inf must be >= 0")
    if convention not in ("range", "basal"):
        raise ValueError(f"unknown convention {convention!r}")
    v_top = float(m_inf) if convention == "range" else 0.0
    k = spec.kind
    if isinstance(k, Linear):
        c_h, c_0, C_0 = k.a, k.b / k.a, (v_top + k.b) / k.a
    elif isinstance(k, MonotonePerturbed):
        c_h = k.a - abs(k.amplitude * k.frequency)
        c_0 = invert_driver(spec, 0.0, 0.0, 0.0)
        C_0 = invert_driver(spec, 0.0, 0.0, v_top)
    elif isinstance(k, ConstantVolatility):
        c_h, c_0, C_0 = math.inf, k.sigma, k.sigma
    else:
        probe = probe_grid or ProbeGrid.default(m_inf)
        t, x, v, zs = _probed(spec, m_inf, probe)
        c_0 = float(zs[..., 0].min())
        C_0 = float(zs[..., 0].max() if convention == "basal" else zs.max())
        z_lat = np.linspace(zs.min(), zs.max(), 33)
        tt, xx, zz = np.meshgrid(probe.t, probe.x, z_lat, indexing="ij")
        c_h = float(np.min(spec.dh(tt, xx, zz)))
        probe_grid = None
    if not c_h > 0 or not c_0 > 0:
        raise DegenerateDriver(f"non-positive bounds: c_h={c_h!r}, c_0={c_0!r}")
    if probe_grid is not None and spec.density_dependent:
        _, _, v, zs = _probed(spec, m_inf, probe_grid)
        in_range = v <= v_top
        slack = 1e-9 * max(1.0, C_0)
        if zs.min() < c_0 - slack or (in_range.any() and zs[in_range].max() > C_0 + slack):
            raise DegenerateDriver("probed volatilities fall outside analytic bounds")
    return DriverBounds(float(c_h), float(c_0), float(C_0))


def check_stability(bounds, m_inf):
    """Coercivity margin gamma = c_0^2/2 - C_0*m_inf/c_h and its sign."""
    half = 0.5 * bounds.c_0 ** 2
    gamma = half - bounds.C_0 * m_inf / bounds.c_h
    return StabilityReport(
        m_inf=float(m_inf),
        gamma=float(gamma),
        satisfied=bool(gamma > 0),
        margin=float(gamma / half),
    )
