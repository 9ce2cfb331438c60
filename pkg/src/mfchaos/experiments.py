"""Limit studies: N -> inf, eps -> 0, uniqueness, stability sweep and smoothing.

Every study is a pure function of its configuration and seeds. Independent
runs go to a thread pool and are reassembled in parameter order, so reports
do not depend on the pool size.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import itertools
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .diagnostics import (energy_budget, estimate_aronson, gronwall_fit, nonincreasing_within,
                          smoothing_threshold, sup_growth_rate, worst_rise)
from .driver import DriverSpec, check_stability, extract_bounds
from .fp_solver import diffusion_field, solve
from .grid import DensityField, l2_distance, norms, resample, wasserstein2
from .particles import (FromDensityField, Gaussian, ScaledBump, _generator, init_ensemble,
                        sample_density, simulate)
from .mollifier import MollifierKernel

KINDS = ("ConvergeN", "ConvergeEps", "Uniqueness", "StabilitySweep", "Smoothing")
PASS, FAIL, NA = "pass", "fail", "n/a"
MASS_TOL = 1e-9
ESCAPE_TOL = 1e-6
_FLOOR_STREAM = 2


@dataclass(frozen=True)
class Verdict:
    criterion_id: str
    status: str
    measured: float
    threshold: float
    note: str = ""

    @classmethod
    def check(cls, criterion_id, measured, threshold, ok, note=""):
        return cls(criterion_id, PASS if ok else FAIL, float(measured), float(threshold), note)

    @classmethod
    def skip(cls, criterion_id, note, threshold=math.nan):
        return cls(criterion_id, NA, math.nan, float(threshold), note)


@dataclass
class ExperimentReport:
    kind: str
    parameters: dict
    tables: dict
    verdicts: list
    seeds: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        self.tables = dict(self.tables)
        # every measured value also lands in a table
        self.tables["verdicts"] = {
            "criterion_id": [v.criterion_id for v in self.verdicts],
            "status": [v.status for v in self.verdicts],
            "measured": [v.measured for v in self.verdicts],
            "threshold": [v.threshold for v in self.verdicts],
        }

    @property
    def passed(self):
        return all(v.status != FAIL for v in self.verdicts)

    def verdict(self, criterion_id):
        for v in self.verdicts:
            if v.criterion_id == criterion_id:
                return v
        raise KeyError(criterion_id)

    def table(self, name):
        return self.tables[name]

    def to_dict(self):
        return _jsonable({
            "kind": self.kind,
            "parameters": self.parameters,
            "seeds": list(self.seeds),
            "tables": self.tables,
            "verdicts": [dataclasses.asdict(v) for v in self.verdicts],
        })

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def config_hash(self):
        blob = json.dumps(_jsonable(self.parameters), sort_keys=True, allow_nan=False)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def write(self, out_dir, timestamp=None, stem=None):
        """Write ``<kind>_<timestamp>_<hash>.json`` plus one CSV per table.

        ``stem`` replaces the generated path prefix (extension excluded).
        """
        os.makedirs(out_dir, exist_ok=True)
        if timestamp is None:
            timestamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
        if stem is None:
            stem = os.path.join(out_dir, f"{self.kind}_{timestamp}_{self.config_hash()}")
        paths = [stem + ".json"]
        with open(paths[0], "w") as fh:
            fh.write(self.to_json())
        for name, cols in self.tables.items():
            path = f"{stem}_{name}.csv"
            write_table_csv(path, cols)
            paths.append(path)
        return paths


def _scalar(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    return _scalar(obj)


def _cell(v):
    v = _scalar(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def write_table_csv(path, columns):
    names = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*(columns[n] for n in names)):
            w.writerow([_cell(v) for v in row])


def describe(obj):
    """Plain nested-dict echo of configs, kernels, drivers and fields."""
    if isinstance(obj, DensityField):
        digest = hashlib.sha256(np.ascontiguousarray(obj.values).tobytes()).hexdigest()[:16]
        return {"type": "DensityField", "grid": describe(obj.grid),
                "time_stamp": obj.time_stamp, "mass": obj.mass, "values_sha256": digest}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {"type": type(obj).__name__}
        for f in dataclasses.fields(obj):
            out[f.name] = describe(getattr(obj, f.name))
        return out
    if isinstance(obj, dict):
        return {str(k): describe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [describe(v) for v in obj]
    if callable(obj):
        return getattr(obj, "__qualname__", repr(obj))
    return _scalar(obj)


def _pmap(fn, items, threads):
    items = list(items)
    workers = int(threads) if threads else (os.cpu_count() or 1)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _strictly_decreasing(values):
    v = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = v[1:] / v[:-1]
    # 0/0 means no decrease
    ratios = np.where(np.isnan(ratios), 1.0, ratios)
    return bool(np.all(np.diff(v) < 0)), float(np.max(ratios))


# --- initial laws ----------------------------------------------------------

def law_density(law, grid):
    """Nodal density of an initial law, renormalised to unit trapezoidal mass."""
    x = grid.nodes
    if isinstance(law, Gaussian):
        vals = np.exp(-0.5 * ((x - law.mean) / law.sd) ** 2) / (law.sd * math.sqrt(2 * math.pi))
    elif isinstance(law, ScaledBump):
        vals = MollifierKernel("bump", law.width)(x - law.center)
    elif isinstance(law, FromDensityField):
        vals = resample(law.field, grid).values
    elif isinstance(law, DensityField):
        vals = resample(law, grid).values
    elif callable(law):
        vals = np.asarray(law(x), dtype=float)
    else:
        raise TypeError(f"unknown initial law {law!r}")
    field_ = DensityField(grid, vals, 0.0)
    mass = field_.mass
    if not mass > 0:
        raise ValueError("initial law has no mass on the grid")
    return field_.with_values(field_.values / mass)


def gaussian_with_peak(peak, mean=0.0):
    """Gaussian law whose density maximum equals ``peak``."""
    return Gaussian(mean, 1.0 / (peak * math.sqrt(2.0 * math.pi)))


def plateau(grid, width, center=0.0):
    """Unit-mass indicator of [center - width/2, center + width/2] on the grid."""
    x = grid.nodes
    vals = (np.abs(x - center) <= 0.5 * width * (1 + 1e-12)).astype(float)
    if vals.sum() < 1:
        raise ValueError("spike narrower than the grid spacing")
    f = DensityField(grid, vals, 0.0)
    return f.with_values(vals / f.mass)


def mass_neutral_perturbation(u0, size=1e-3, wavenumber=1.0, center=0.0):
    """delta = s * u0 * (sin(k (x - c)) - mean), zero mass and L2 norm ``size``.

    Scaling by u0 keeps u0 + delta >= 0 whenever size is small.
    """
    x = u0.x
    dx = u0.grid.dx
    wave = np.sin(wavenumber * (x - center))
    shape = u0.values * (wave - trapezoid(u0.values * wave, dx=dx) / u0.mass)
    shape -= trapezoid(shape, dx=dx) / trapezoid(u0.values, dx=dx) * u0.values
    norm = math.sqrt(trapezoid(shape * shape, dx=dx))
    if norm == 0:
        return np.zeros_like(x)
    return shape * (size / norm)


def _fp_summary(traj):
    d = traj.diagnostics
    mass0 = d["mass"][0]
    return {
        "mass_dev": float(np.max(np.abs(d["mass"] - mass0))),
        "clamped_mass": traj.clamped_mass,
        "boundary_max": traj.boundary_max,
        "sup_h1": float(np.max(d["h1"])),
        "h1_initial": float(d["h1"][0]),
        "sup_linf": float(np.max(d["linf"])),
        "blow_up": traj.blow_up_time is not None,
        "valid": traj.valid,
    }


def _conservation_verdict(summaries):
    dev = max(s["mass_dev"] for s in summaries)
    clamped = max(s["clamped_mass"] for s in summaries)
    worst = max(dev, clamped)
    return Verdict.check("mass_conserved", worst, MASS_TOL, worst <= MASS_TOL,
                         "max of mass drift and clamped negative mass over runs")


# --- N -> inf at fixed eps ---------------------------------------------------

def converge_n(sde, fp, law, n_list, seeds, threads=1, parameters=None):
    """Terminal W2 between particle ensembles and the FP density, per n and seed.

    ``sde`` supplies driver, kernel, dt and horizon; ``fp`` supplies the grid
    and time stepping of the reference solve.
    """
    n_list = [int(n) for n in n_list]
    seeds = [int(s) for s in seeds]
    if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])) or n_list[0] < 1:
        raise ValueError("n_list must be strictly increasing positive integers")
    if not seeds or len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be a nonempty list of distinct integers")
    fp = fp.replace(driver=sde.driver, kernel=sde.kernel, t_end=sde.t_end)
    grid = fp.grid
    u0 = law_density(law, grid)
    traj = solve(fp, u0, warn=False)
    target = traj.final

    def run(job):
        n, seed = job
        cfg = sde.replace(n=n, seed=seed)
        final = simulate(cfg, init_ensemble(n, law, seed))[-1]
        pos = final.positions
        escaped = float(np.mean((pos < grid.x_min) | (pos > grid.x_max)))
        return pos, wasserstein2(pos, target), escaped

    jobs = list(itertools.product(n_list, seeds))
    results = dict(zip(jobs, _pmap(run, jobs, threads)))

    n_final = n_list[-1]
    floor = []
    for seed in seeds:
        u = _generator(seed, _FLOOR_STREAM).uniform(0.0, 1.0, n_final)
        floor.append(wasserstein2(sample_density(target, u), target))
    floor_mean = float(np.mean(floor))

    by_n = {"n": [], "mean_w2": [], "std_w2": [], "seed_spread": [], "escaped_fraction": []}
    runs = {"n": [], "seed": [], "w2": [], "escaped_fraction": []}
    for n in n_list:
        w2s = [results[(n, s)][1] for s in seeds]
        esc = [results[(n, s)][2] for s in seeds]
        pos = [results[(n, s)][0] for s in seeds]
        pairs = [wasserstein2(a, b) for a, b in itertools.combinations(pos, 2)]
        by_n["n"].append(n)
        by_n["mean_w2"].append(float(np.mean(w2s)))
        by_n["std_w2"].append(float(np.std(w2s)))
        by_n["seed_spread"].append(float(np.mean(pairs)) if pairs else math.nan)
        by_n["escaped_fraction"].append(float(max(esc)))
        for s, w, e in zip(seeds, w2s, esc):
            runs["n"].append(n)
            runs["seed"].append(s)
            runs["w2"].append(w)
            runs["escaped_fraction"].append(e)

    verdicts = []
    if len(n_list) >= 3:
        ok, worst = _strictly_decreasing(by_n["mean_w2"])
        verdicts.append(Verdict.check("w2_decreasing", worst, 1.0, ok,
                                      "largest ratio of consecutive mean W2"))
        if len(seeds) >= 2:
            ok, worst = _strictly_decreasing(by_n["seed_spread"])
            verdicts.append(Verdict.check("spread_decreasing", worst, 1.0, ok,
                                          "largest ratio of consecutive seed spreads"))
        else:
            verdicts.append(Verdict.skip("spread_decreasing", "needs at least two seeds"))
    else:
        verdicts.append(Verdict.skip("w2_decreasing", "needs at least three n values"))
        verdicts.append(Verdict.skip("spread_decreasing", "needs at least three n values"))
    ratio = by_n["mean_w2"][-1] / floor_mean
    verdicts.append(Verdict.check("final_w2_vs_floor", ratio, 2.0, ratio <= 2.0,
                                  "final mean W2 over the i.i.d.-sampling floor"))
    esc = max(by_n["escaped_fraction"])
    verdicts.append(Verdict.check("escaped_mass", esc, ESCAPE_TOL, esc < ESCAPE_TOL))
    summary = _fp_summary(traj)
    verdicts.append(_conservation_verdict([summary]))

    tables = {
        "by_n": by_n,
        "runs": runs,
        "floor": {"seed": seeds, "w2_iid": floor},
        "reference": {k: [v] for k, v in summary.items()},
    }
    params = {"sde": describe(sde), "fp": describe(fp), "law": describe(law),
              "n_list": n_list, "config": parameters or {}}
    return ExperimentReport("ConvergeN", params, tables, verdicts, seeds)


# --- eps -> 0 ------------------------------------------------------------------

def converge_eps(fp, law, eps_list, grid_rule="common", headroom=1.1, threads=1,
                 parameters=None):
    """Cauchy differences ||u^eps - u^(eps/2)||_L2 at t_end and sup-in-time H1 norms.

    ``grid_rule="common"`` solves every eps on ``fp.grid``; ``"scaled"`` halves
    the spacing with each halving of eps and compares on ``fp.grid`` nodes.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(e <= 0 for e in eps_list):
        raise ValueError("eps_list must hold positive values")
    if any(b > a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be nonincreasing")
    if grid_rule not in ("common", "scaled"):
        raise ValueError("grid_rule must be 'common' or 'scaled'")
    base = fp.grid
    configs, factors = [], []
    for e in eps_list:
        factor = 1
        if grid_rule == "scaled":
            factor = 2 ** int(round(math.log2(eps_list[0] / e)))
        grid = base.refined(factor) if factor > 1 else base
        configs.append(fp.replace(grid=grid, kernel=fp.kernel.with_epsilon(e)))
        factors.append(factor)

    def run(cfg):
        return solve(cfg, law_density(law, cfg.grid), warn=False)

    trajs = _pmap(run, configs, threads)
    finals = [DensityField(base, t.final.values[::f], t.final.time_stamp)
              for t, f in zip(trajs, factors)]
    summaries = [_fp_summary(t) for t in trajs]

    table = {"epsilon": eps_list, "dx": [c.grid.dx for c in configs], "cauchy_l2": []}
    for k in range(len(eps_list)):
        table["cauchy_l2"].append(l2_distance(finals[k], finals[k + 1])
                                  if k + 1 < len(eps_list) else math.nan)
    for key in ("h1_initial", "sup_h1", "sup_linf", "mass_dev", "clamped_mass",
                "boundary_max", "blow_up", "valid"):
        table[key] = [s[key] for s in summaries]

    verdicts = []
    diffs = [d for d in table["cauchy_l2"] if not math.isnan(d)]
    if len(diffs) >= 2:
        ok, worst = _strictly_decreasing(diffs)
        verdicts.append(Verdict.check("cauchy_decreasing", worst, 1.0, ok,
                                      "largest ratio of consecutive Cauchy differences"))
    else:
        verdicts.append(Verdict.skip("cauchy_decreasing", "needs at least three eps values"))
    ratio = max(table["sup_h1"]) / max(table["h1_initial"])
    verdicts.append(Verdict.check("h1_bounded", ratio, headroom, ratio <= headroom,
                                  "sup over eps and t of H1 over max initial H1"))
    verdicts.append(_conservation_verdict(summaries))

    params = {"fp": describe(fp), "law": describe(law), "eps_list": eps_list,
              "grid_rule": grid_rule, "headroom": headroom, "config": parameters or {}}
    return ExperimentReport("ConvergeEps", params, {"by_eps": table}, verdicts, [])


# --- uniqueness ------------------------------------------------------------------

def uniqueness_study(fp, u0, delta, n_snapshots=21, headroom=1.1, threads=1, parameters=None):
    """Separation E(t) = 1/2 ||u - u'||^2 of runs from u0 and u0 + delta, with a Gronwall fit."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != u0.values.shape:
        raise ValueError("delta must live on the grid of u0")
    dx = u0.grid.dx
    if abs(trapezoid(delta, dx=dx)) > 1e-12:
        raise ValueError("delta must be mass-neutral")
    if math.sqrt(trapezoid(delta * delta, dx=dx)) > 1e-3 * (1 + 1e-9):
        raise ValueError("delta must have L2 norm <= 1e-3")
    shifted = u0.values + delta
    if shifted.min() < -1e-14:
        raise ValueError("u0 + delta must be nonnegative")
    t0 = u0.time_stamp
    times = tuple(np.linspace(t0, fp.t_end, int(n_snapshots)))
    cfg = fp.replace(snapshot_times=times)
    starts = [u0, u0.with_values(np.maximum(shifted, 0.0))]
    trajs = _pmap(lambda u: solve(cfg, u, warn=False), starts, threads)
    ts = [s.time_stamp for s in trajs[0].snapshots]
    e = [0.5 * l2_distance(a, b) ** 2 for a, b in zip(trajs[0].snapshots, trajs[1].snapshots)]
    e = np.asarray(e)

    T = ts[-1] - ts[0]
    verdicts = []
    if np.all(e == 0):
        c, resid, sup_rate = 0.0, 0.0, 0.0
        envelope = np.zeros_like(e)
        verdicts.append(Verdict.check("terminal_envelope", 0.0, headroom, True,
                                      "identical trajectories"))
        verdicts.append(Verdict.check("snapshot_envelope", 0.0, headroom, True,
                                      "identical trajectories"))
        verdicts.append(Verdict.check("finite_ratio", 1.0, math.inf, True))
    else:
        series = list(zip(ts, e))
        c, resid = gronwall_fit(series)
        sup_rate = sup_growth_rate(series)
        envelope = e[0] * np.exp(2.0 * c * (np.asarray(ts) - ts[0]))
        ratios = e / envelope
        verdicts.append(Verdict.check("terminal_envelope", ratios[-1], headroom,
                                      ratios[-1] <= headroom,
                                      "E(T) over E(0) exp(2 c T) with fitted c"))
        worst = float(ratios.max())
        verdicts.append(Verdict.check("snapshot_envelope", worst, headroom, worst <= headroom,
                                      "largest E(t) over the fitted envelope"))
        growth = e[-1] / e[0]
        verdicts.append(Verdict.check("finite_ratio", growth, math.inf, math.isfinite(growth)))
    summaries = [_fp_summary(t) for t in trajs]
    verdicts.append(_conservation_verdict(summaries))

    tables = {
        "energy": {"t": ts, "e": list(e), "envelope": list(envelope)},
        "fit": {"c_growth": [c], "fit_residual": [resid], "sup_rate": [sup_rate],
                "e0": [float(e[0])], "e_final": [float(e[-1])], "horizon": [T]},
    }
    params = {"fp": describe(cfg), "u0": describe(u0),
              "delta_sha256": hashlib.sha256(delta.tobytes()).hexdigest()[:16],
              "n_snapshots": int(n_snapshots), "headroom": headroom,
              "config": parameters or {}}
    return ExperimentReport("Uniqueness", params, tables, verdicts, [])


# --- stability boundary --------------------------------------------------------------

def stability_sweep(fp, b_list, m_inf, law=None, a=1.0, headroom=1.1, threads=1,
                    parameters=None):
    """Linear(a, b) drivers across the coercivity boundary b = 2 a m_inf (basal bounds)."""
    b_list = [float(b) for b in b_list]
    if not m_inf > 0:
        raise ValueError("m_inf must be > 0")
    specs = [DriverSpec.linear(a, b) for b in b_list]
    reports = [check_stability(extract_bounds(s, m_inf, convention="basal"), m_inf)
               for s in specs]
    sat = [r.satisfied for r in reports]
    if all(sat) or not any(sat):
        raise ValueError("b_list must straddle the stability boundary")
    law = gaussian_with_peak(m_inf) if law is None else law

    def run(spec):
        cfg = fp.replace(driver=spec)
        return solve(cfg, law_density(law, cfg.grid), warn=False)

    summaries = [_fp_summary(t) for t in _pmap(run, specs, threads)]
    range_gamma = [check_stability(extract_bounds(s, m_inf), m_inf).gamma for s in specs]
    table = {
        "b": b_list,
        "gamma": [r.gamma for r in reports],
        "satisfied": sat,
        "gamma_range": range_gamma,
        "h1_initial": [s["h1_initial"] for s in summaries],
        "sup_h1": [s["sup_h1"] for s in summaries],
        "sup_linf": [s["sup_linf"] for s in summaries],
        "blow_up": [s["blow_up"] for s in summaries],
        "h1_ratio": [s["sup_h1"] / s["h1_initial"] for s in summaries],
    }
    ratios = [r for r, ok in zip(table["h1_ratio"], sat) if ok]
    worst = max(ratios)
    verdicts = [
        Verdict.check("satisfied_h1_bounded", worst, headroom, worst <= headroom,
                      "unsatisfied rows are observational only"),
        _conservation_verdict([s for s, ok in zip(summaries, sat) if ok]),
    ]
    params = {"fp": describe(fp), "law": describe(law), "b_list": b_list, "a": a,
              "m_inf": m_inf, "convention": "basal", "headroom": headroom,
              "config": parameters or {}}
    return ExperimentReport("StabilitySweep", params, {"sweep": table}, verdicts, [])


# --- smoothing ---------------------------------------------------------------------------

def smoothing_study(fp, spike_width, m_inf=1.0, t_lo=0.05, n_snapshots=41, tolerance=0.05,
                    control_sigma=None, heat_window=(0.1, 1.0), heat_tolerance=0.03,
                    c_a_override=None, threads=1, parameters=None):
    """Sup-norm and H1 decay from a narrow unit-mass plateau.

    With ``control_sigma`` a constant-volatility run on the same grid is
    compared against the heat-kernel law linf(t) = 1/sqrt(2 pi sigma^2 t).
    """
    T = fp.t_end
    if not 0 < t_lo < T:
        raise ValueError("need 0 < t_lo < t_end")
    times = tuple(np.unique(np.concatenate(([0.0], np.linspace(t_lo, T, int(n_snapshots))))))
    cfg = fp.replace(snapshot_times=times)
    u0 = plateau(cfg.grid, spike_width)
    cfgs = [cfg]
    if control_sigma:
        cfgs.append(cfg.replace(driver=DriverSpec.constant(control_sigma)))
    trajs = _pmap(lambda c: solve(c, u0, warn=False), cfgs, threads)
    traj = trajs[0]

    bounds = extract_bounds(cfg.driver, m_inf)
    c_a = estimate_aronson(traj, (t_lo, T))
    t_star = smoothing_threshold(bounds, c_a)
    t_star_check = ((2.0 * bounds.C_0 / bounds.c_h) * c_a / bounds.c_0 ** 2) ** 2

    snaps = traj.snapshots
    ts = np.array([s.time_stamp for s in snaps])
    linf = np.array([float(s.values.max()) for s in snaps])
    h1 = np.array([norms(s).h1 for s in snaps])
    root_t = np.sqrt(ts) * linf
    decay = {"t": list(ts), "linf": list(linf), "sqrt_t_linf": list(root_t), "h1": list(h1)}

    verdicts = []
    win = (ts >= t_lo) & (ts <= T)
    env = float(np.max(root_t[win]) / c_a)
    verdicts.append(Verdict.check("aronson_envelope", env, 1.0, env <= 1.0 + 1e-12,
                                  "linf sqrt(t) over c_a_hat on the window"))
    tail = root_t[win][int(np.argmax(root_t[win])):]
    rise = worst_rise(tail)
    verdicts.append(Verdict.check("sqrt_t_linf_settles", rise, tolerance,
                                  nonincreasing_within(tail, tolerance),
                                  "largest rise after the maximum of sqrt(t) linf"))
    after = (ts > t_star) & (ts <= T)
    if after.sum() >= 2:
        rise = worst_rise(h1[after])
        verdicts.append(Verdict.check("h1_decay_after_t_star", rise, tolerance,
                                      nonincreasing_within(h1[after], tolerance)))
    else:
        verdicts.append(Verdict.skip("h1_decay_after_t_star", "t_end does not exceed t*",
                                     tolerance))
    gap = abs(t_star - t_star_check)
    verdicts.append(Verdict.check("t_star_recompute", gap, 1e-12, gap <= 1e-12))

    tables = {"decay": decay}
    summary = {"c_a_hat": [c_a], "t_star": [t_star], "c_h": [bounds.c_h],
               "c_0": [bounds.c_0], "C_0": [bounds.C_0], "m_inf": [m_inf]}
    if c_a_override is not None:
        summary["c_a_override"] = [float(c_a_override)]
        summary["t_star_override"] = [smoothing_threshold(bounds, c_a_override)]
    tables["summary"] = summary

    if control_sigma:
        ctl = trajs[1]
        cts = np.array([s.time_stamp for s in ctl.snapshots])
        clinf = np.array([float(s.values.max()) for s in ctl.snapshots])
        with np.errstate(divide="ignore"):
            heat = 1.0 / np.sqrt(2.0 * math.pi * control_sigma ** 2 * cts)
        rel = np.abs(clinf / heat - 1.0)
        tables["control"] = {"t": list(cts), "linf": list(clinf), "heat_linf": list(heat),
                             "rel_err": list(rel)}
        lo, hi = heat_window
        sel = (cts >= lo - 1e-12) & (cts <= hi + 1e-12)
        if sel.any():
            worst = float(rel[sel].max())
            verdicts.append(Verdict.check("heat_match", worst, heat_tolerance,
                                          worst <= heat_tolerance))
        else:
            verdicts.append(Verdict.skip("heat_match", "no control snapshot in the window",
                                         heat_tolerance))
    verdicts.append(_conservation_verdict([_fp_summary(t) for t in trajs]))

    params = {"fp": describe(cfg), "spike_width": spike_width, "m_inf": m_inf, "t_lo": t_lo,
              "n_snapshots": int(n_snapshots), "tolerance": tolerance,
              "control_sigma": control_sigma, "heat_window": list(heat_window),
              "heat_tolerance": heat_tolerance, "c_a_override": c_a_override,
              "config": parameters or {}}
    return ExperimentReport("Smoothing", params, tables, verdicts, [])


def energy_series(config, trajectory, bounds, m):
    """EnergyBudget at every snapshot of a trajectory solved under ``config``."""
    return [energy_budget(s, diffusion_field(config.driver, config.kernel, s, s.time_stamp),
                          bounds, m) for s in trajectory.snapshots]
