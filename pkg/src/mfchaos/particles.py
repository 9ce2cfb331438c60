"""Regularised N-particle system with implicit volatility, by Euler-Maruyama.

Each particle moves as dY_i = nu_i dW_i with
nu_i = h^{-1}(t, Y_i, (K_eps * mu_N)(Y_i)), where mu_N is the empirical
measure of all particles (self-term included).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .driver import invert_driver
from .grid import DensityField, Grid1D
from .mollifier import MollifierKernel, check_resolution, convolve_empirical, convolve_values

DIRECT_MAX_N = 5000
_INIT_STREAM = 0
_STEP_STREAM = 1


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    sd: float = 1.0


@dataclass(frozen=True)
class ScaledBump:
    """Law with density K((x - center)/width)/width for the bump kernel K."""

    center: float = 0.0
    width: float = 1.0


@dataclass(frozen=True)
class FromDensityField:
    field: DensityField


@dataclass(frozen=True)
class GridInterpolated:
    """Bin particles on ``grid``; ``None`` builds a grid around the ensemble each step."""

    grid: Optional[Grid1D] = None


DensityEval = Union[str, GridInterpolated]


def _generator(seed, *key):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def step_normals(seed, step_index, n):
    """Standard normals for one step; particle i always receives draw i.

    Each (seed, step) pair keys its own Philox stream, so the noise of a
    particle does not depend on ``n``, on execution order, or on earlier steps.
    """
    return _generator(seed, _STEP_STREAM, step_index).standard_normal(n)


@dataclass(frozen=True)
class ParticleEnsemble:
    positions: np.ndarray
    rng_seed: int
    step_index: int = 0
    time_stamp: float = 0.0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).ravel()
        if pos.size < 1:
            raise ValueError("ensemble needs at least one particle")
        if not np.all(np.isfinite(pos)):
            raise ValueError("particle positions must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self):
        return self.positions.size

    def __eq__(self, other):
        if not isinstance(other, ParticleEnsemble):
            return NotImplemented
        return (self.rng_seed == other.rng_seed and self.step_index == other.step_index
                and self.time_stamp == other.time_stamp
                and np.array_equal(self.positions, other.positions))

    __hash__ = None


@dataclass(frozen=True)
class SdeConfig:
    driver: object
    kernel: MollifierKernel
    dt: float
    t_end: float
    n: int
    seed: int = 0
    density_eval: DensityEval = "auto"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if self.t_end > 0 and self.dt > self.t_end * (1 + 1e-12):
            raise ValueError("dt must not exceed t_end")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        mode = self.density_eval
        if isinstance(mode, GridInterpolated):
            if mode.grid is not None:
                check_resolution(self.kernel, mode.grid.dx)
        elif mode not in ("auto", "direct"):
            raise ValueError("density_eval must be 'auto', 'direct' or GridInterpolated")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    def resolved_density_eval(self):
        if self.density_eval == "auto":
            return "direct" if self.n <= DIRECT_MAX_N else GridInterpolated()
        return self.density_eval

    def replace(self, **changes):
        return replace(self, **changes)


def _sample_bump(rng, n):
    # rejection from the uniform proposal on [-1, 1]; acceptance ~ 0.6
    k = MollifierKernel("bump", 1.0)
    top = float(k.base(0.0))
    out = np.empty(0)
    while out.size < n:
        m = int(1.8 * (n - out.size)) + 16
        s = rng.uniform(-1.0, 1.0, m)
        keep = rng.uniform(0.0, top, m) < k.base(s)
        out = np.concatenate((out, s[keep]))
    return out[:n]


def sample_density(field, u):
    """Inverse-CDF transform of uniforms ``u`` under a grid density."""
    cdf = cumulative_trapezoid(field.values, dx=field.grid.dx, initial=0.0)
    if not cdf[-1] > 0:
        raise ValueError("density has zero mass")
    cdf /= cdf[-1]
    keep = np.concatenate(([True], np.diff(cdf) > 0))
    return np.interp(u, cdf[keep], field.x[keep])


def init_ensemble(n, sampler, seed):
    """``n`` i.i.d. draws from ``sampler`` under the seeded init stream."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    rng = _generator(seed, _INIT_STREAM)
    if isinstance(sampler, Gaussian):
        pos = rng.normal(sampler.mean, sampler.sd, int(n))
    elif isinstance(sampler, ScaledBump):
        pos = sampler.center + sampler.width * _sample_bump(rng, int(n))
    elif isinstance(sampler, FromDensityField):
        pos = sample_density(sampler.field, rng.uniform(0.0, 1.0, int(n)))
    else:
        raise TypeError(f"unknown sampler {sampler!r}")
    return ParticleEnsemble(pos, int(seed), 0, 0.0)


def _auto_grid(positions, kernel):
    dx = kernel.epsilon / 4.0
    lo = float(positions.min()) - 2.0 * kernel.epsilon
    hi = float(positions.max()) + 2.0 * kernel.epsilon
    return Grid1D.from_spacing(lo, hi, dx) if hi - lo > 15 * dx else Grid1D(lo, lo + 15 * dx, 16)


def binned_density(positions, grid):
    """Cloud-in-cell nodal density of an equal-weight ensemble (unit total mass)."""
    dx = grid.dx
    s = (positions - grid.x_min) / dx
    inside = (s >= 0) & (s <= grid.nx - 1)
    s = s[inside]
    i = np.minimum(np.floor(s).astype(int), grid.nx - 2)
    f = s - i
    rho = np.bincount(i, weights=1.0 - f, minlength=grid.nx)
    rho += np.bincount(i + 1, weights=f, minlength=grid.nx)
    rho /= positions.size * dx
    # trapezoidal weights: end nodes own half cells
    rho[0] *= 2.0
    rho[-1] *= 2.0
    return rho


def mollified_density(config, positions):
    """(K_eps * mu_N) evaluated at every particle position."""
    mode = config.resolved_density_eval()
    if mode == "direct":
        return convolve_empirical(config.kernel, positions, positions)
    grid = mode.grid or _auto_grid(positions, config.kernel)
    rho = binned_density(positions, grid)
    smooth = convolve_values(config.kernel, rho, grid.dx)
    return np.interp(positions, grid.nodes, smooth, left=0.0, right=0.0)


def em_step(config, ensemble, noise=None, return_details=False):
    """One Euler-Maruyama step; all densities use the pre-step positions."""
    y = ensemble.positions
    t = ensemble.time_stamp
    v = mollified_density(config, y)
    nu = invert_driver(config.driver, t, y, v)
    nu = np.broadcast_to(nu, y.shape)
    xi = step_normals(ensemble.rng_seed, ensemble.step_index, y.size) if noise is None \
        else np.asarray(noise, dtype=float)
    new = y + nu * np.sqrt(config.dt) * xi
    k = ensemble.step_index + 1
    out = ParticleEnsemble(new, ensemble.rng_seed, k,
                           _time_of(ensemble, k, config.dt))
    if return_details:
        return out, {"density": v, "volatility": np.array(nu), "noise": xi}
    return out


def _time_of(ensemble, k, dt):
    # time from the step counter avoids drift from repeated addition
    base = ensemble.time_stamp - ensemble.step_index * dt
    return base + k * dt


def simulate(config, ensemble, snapshot_times=None):
    """Step to ``config.t_end``; snapshots are taken at the nearest step times."""
    n_steps = config.n_steps
    if snapshot_times is None:
        snapshot_times = (config.t_end,)
    wanted = sorted({min(n_steps, max(0, int(round(s / config.dt)))) for s in snapshot_times})
    out = []
    cur = ensemble
    done = 0
    for k in wanted:
        while done < k:
            cur = em_step(config, cur)
            done += 1
        out.append(cur)
    return out


def write_ensembles_csv(path, ensembles):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "particle_id", "x"])
        for e in ensembles:
            for i, x in enumerate(e.positions):
                w.writerow([repr(float(e.time_stamp)), i, repr(float(x))])
