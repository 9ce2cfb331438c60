"""Estimator-style wrappers (fit / transform / predict, get_params) over the core modules."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_density_rows, check_positions, check_scalar
from .driver import DriverSpec
from .fp_solver import FpConfig, solve
from .grid import DensityField, Grid1D
from .mollifier import MollifierKernel, convolve_empirical
from .particles import ParticleEnsemble, SdeConfig, simulate


def _driver(kind, a, b, sigma):
    if kind == "linear":
        return DriverSpec.linear(a, b)
    if kind == "constant":
        return DriverSpec.constant(sigma)
    raise ValueError(f"driver must be 'linear' or 'constant', got {kind!r}")


class MollifiedDensityEstimator(BaseEstimator):
    """Mollified empirical density K_eps * mu_N of a 1D sample."""

    def __init__(self, shape="bump", epsilon=0.2):
        self.shape = shape
        self.epsilon = epsilon

    def fit(self, X, y=None):
        check_scalar(self.epsilon, "epsilon", lower=0.0)
        self.kernel_ = MollifierKernel(self.shape, float(self.epsilon))
        self.positions_ = check_positions(X)
        self.n_samples_ = self.positions_.size
        return self

    def predict(self, X):
        """Density values at the query points."""
        check_is_fitted(self, "positions_")
        return np.asarray(convolve_empirical(self.kernel_, self.positions_, check_positions(X)))

    def score_samples(self, X):
        with np.errstate(divide="ignore"):
            return np.log(self.predict(X))


class FokkerPlanckTransformer(TransformerMixin, BaseEstimator):
    """Maps rows of initial nodal densities to their solutions at ``t_end``."""

    def __init__(self, driver="linear", a=1.0, b=3.0, sigma=1.0, shape="bump", epsilon=0.2,
                 x_min=-16.0, x_max=16.0, nx=641, t_end=0.5, cfl_factor=0.4,
                 time_scheme="euler"):
        self.driver = driver
        self.a = a
        self.b = b
        self.sigma = sigma
        self.shape = shape
        self.epsilon = epsilon
        self.x_min = x_min
        self.x_max = x_max
        self.nx = nx
        self.t_end = t_end
        self.cfl_factor = cfl_factor
        self.time_scheme = time_scheme

    def fit(self, X=None, y=None):
        check_scalar(self.nx, "nx", lower=16, include_lower=True, integer=True)
        check_scalar(self.t_end, "t_end", lower=0.0)
        self.grid_ = Grid1D(float(self.x_min), float(self.x_max), int(self.nx))
        self.config_ = FpConfig(
            self.grid_,
            MollifierKernel(self.shape, float(self.epsilon)),
            _driver(self.driver, self.a, self.b, self.sigma),
            float(self.t_end),
            cfl_factor=self.cfl_factor,
            time_scheme=self.time_scheme,
        )
        if X is not None:
            check_density_rows(X, self.grid_.nx)
        self.n_features_in_ = self.grid_.nx
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        X = check_density_rows(X, self.grid_.nx)
        out = np.empty_like(X)
        for i, row in enumerate(X):
            traj = solve(self.config_, DensityField(self.grid_, row, 0.0))
            out[i] = traj.final.values
        return out

    @property
    def nodes(self):
        check_is_fitted(self, "grid_")
        return self.grid_.nodes


class ParticleSimulator(TransformerMixin, BaseEstimator):
    """Evolves an ensemble of 1D starting positions to ``t_end``."""

    def __init__(self, driver="linear", a=1.0, b=3.0, sigma=1.0, shape="bump", epsilon=0.2,
                 dt=0.01, t_end=0.5, seed=0, density_eval="auto"):
        self.driver = driver
        self.a = a
        self.b = b
        self.sigma = sigma
        self.shape = shape
        self.epsilon = epsilon
        self.dt = dt
        self.t_end = t_end
        self.seed = seed
        self.density_eval = density_eval

    def fit(self, X=None, y=None):
        check_scalar(self.seed, "seed", lower=0, include_lower=True, integer=True)
        self.driver_ = _driver(self.driver, self.a, self.b, self.sigma)
        self.kernel_ = MollifierKernel(self.shape, float(self.epsilon))
        if X is not None:
            self.n_features_in_ = 1
            check_positions(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "driver_")
        pos = check_positions(X)
        cfg = SdeConfig(self.driver_, self.kernel_, float(self.dt), float(self.t_end), pos.size,
                        int(self.seed), self.density_eval)
        final = simulate(cfg, ParticleEnsemble(pos, int(self.seed)))[-1]
        out = final.positions.copy()
        return out.reshape(-1, 1) if np.ndim(X) == 2 else out
