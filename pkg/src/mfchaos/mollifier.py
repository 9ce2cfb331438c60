"""Compactly supported mollifiers and convolution against measures and grids."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import UnderResolvedKernel

SHAPES = ("bump", "quartic")
# relative slack on the eps >= 2*dx guard, for grids built from round numbers
_GUARD_RTOL = 1e-9


def _bump_raw(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def _bump_norm():
    val, _ = integrate.quad(lambda s: math.exp(-1.0 / (1.0 - s * s)), -1.0, 1.0,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def _bump_cdf_scalar(s):
    if s <= -1.0:
        return 0.0
    if s >= 1.0:
        return 1.0
    if s <= 0.0:
        part, _ = integrate.quad(lambda r: math.exp(-1.0 / (1.0 - r * r)), -1.0, s,
                                 epsabs=1e-17, epsrel=1e-12, limit=200)
        return part / _bump_norm()
    return 1.0 - _bump_cdf_scalar(-s)


def _quartic_cdf(s):
    s = np.clip(np.asarray(s, dtype=float), -1.0, 1.0)
    return 0.5 + 15.0 / 16.0 * (s - 2.0 * s ** 3 / 3.0 + s ** 5 / 5.0)


@dataclass(frozen=True)
class MollifierKernel:
    """Unit-mass kernel K supported in [-1, 1], used as K_eps(x) = K(x/eps)/eps."""

    shape: str = "bump"
    epsilon: float = 0.1

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown kernel shape {self.shape!r}; expected one of {SHAPES}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")

    @property
    def normalization(self):
        return _bump_norm() if self.shape == "bump" else 16.0 / 15.0

    def base(self, s):
        """Unscaled kernel K(s)."""
        s = np.asarray(s, dtype=float)
        if self.shape == "bump":
            return _bump_raw(s) / _bump_norm()
        return np.where(np.abs(s) <= 1.0, 15.0 / 16.0 * (1.0 - s ** 2) ** 2, 0.0)

    def __call__(self, x):
        return self.base(np.asarray(x, dtype=float) / self.epsilon) / self.epsilon

    def cdf(self, s):
        """Cumulative mass of the unscaled kernel up to ``s``."""
        if self.shape == "quartic":
            return _quartic_cdf(s)
        s = np.asarray(s, dtype=float)
        return np.vectorize(_bump_cdf_scalar, otypes=[float])(s)

    @property
    def peak(self):
        """sup K_eps = K(0)/eps."""
        return float(self.base(0.0)) / self.epsilon

    @property
    def second_moment(self):
        """int s^2 K(s) ds of the unscaled kernel."""
        if self.shape == "quartic":
            return 1.0 / 7.0
        val, _ = integrate.quad(lambda s: s * s * math.exp(-1.0 / (1.0 - s * s)), -1.0, 1.0,
                                epsabs=0.0, epsrel=1e-12, limit=200)
        return val / _bump_norm()

    def with_epsilon(self, epsilon):
        return MollifierKernel(self.shape, float(epsilon))


@lru_cache(maxsize=256)
def cell_weights(shape, epsilon, dx):
    """Kernel mass over each grid cell [(k-1/2)dx, (k+1/2)dx], k = -m..m.

    The weights are symmetric and sum to one to round-off.
    """
    kernel = MollifierKernel(shape, epsilon)
    m = int(math.ceil(epsilon / dx + 0.5))
    edges = (np.arange(-m, m + 2) - 0.5) * dx / epsilon
    cdf = kernel.cdf(edges)
    cdf[0], cdf[-1] = 0.0, 1.0
    w = np.diff(cdf)
    w = 0.5 * (w + w[::-1])
    w = np.maximum(w, 0.0)
    w /= w.sum()
    w.setflags(write=False)
    return w


def check_resolution(kernel, dx):
    if kernel.epsilon < 2.0 * dx * (1.0 - _GUARD_RTOL):
        raise UnderResolvedKernel(
            f"epsilon={kernel.epsilon:g} is below 2*dx={2.0 * dx:g}; refine the grid"
        )


def convolve_values(kernel, values, dx):
    """Banded convolution of nodal values with per-cell kernel masses."""
    check_resolution(kernel, dx)
    w = cell_weights(kernel.shape, float(kernel.epsilon), float(dx))
    return np.convolve(values, w, mode="same")


def convolve_density(kernel, field):
    """Mollify a grid density; returns a new DensityField on the same grid."""
    from .grid import DensityField

    out = convolve_values(kernel, field.values, field.grid.dx)
    return DensityField(field.grid, np.maximum(out, 0.0), field.time_stamp)


def _window_sums(kernel, sorted_pos, x):
    """sum_j K_eps(x_i - y_j) for sorted particle positions y."""
    eps = kernel.epsilon
    lo = np.searchsorted(sorted_pos, x - eps, side="left")
    hi = np.searchsorted(sorted_pos, x + eps, side="right")
    counts = hi - lo
    width = int(counts.max()) if counts.size else 0
    if width == 0:
        return np.zeros_like(x)
    out = np.zeros_like(x)
    # chunk so the gathered block stays small
    chunk = max(1, 4_000_000 // width)
    offs = np.arange(width)
    for start in range(0, x.size, chunk):
        sl = slice(start, start + chunk)
        idx = lo[sl, None] + offs
        valid = idx < hi[sl, None]
        idx = np.minimum(idx, sorted_pos.size - 1)
        k = kernel(x[sl, None] - sorted_pos[idx])
        out[sl] = np.where(valid, k, 0.0).sum(axis=1)
    return out


def convolve_empirical(kernel, positions, x):
    """(K_eps * mu_N)(x) = (1/N) sum_j K_eps(x - y_j)."""
    pos = np.sort(np.asarray(positions, dtype=float).ravel())
    if pos.size == 0:
        raise ValueError("positions must be nonempty")
    xq = np.asarray(x, dtype=float)
    out = _window_sums(kernel, pos, xq.ravel()).reshape(xq.shape) / pos.size
    return float(out) if out.ndim == 0 else out
