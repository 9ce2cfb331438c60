"""``mfchaos <subcommand> --config <path> [--out DIR] [--seed-offset K] [--threads T]``.

Exit status is 0 when every applicable verdict passes, 2 when one fails and
1 on any error.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
import time
from contextlib import contextmanager

import numpy as np

from . import experiments as ex
from .config import SUBCOMMANDS, format_config, parse_config
from .diagnostics import write_energy_csv
from .driver import DriverSpec, check_stability, extract_bounds
from .errors import MfChaosError, ValidationError
from .fp_solver import FpConfig, solve
from .grid import Grid1D, write_snapshots_csv
from .mollifier import MollifierKernel
from .particles import (FromDensityField, Gaussian, GridInterpolated, ScaledBump, SdeConfig,
                        init_ensemble, simulate, write_ensembles_csv)

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
log = logging.getLogger("mfchaos")


@contextmanager
def _owned(path):
    """Re-raise constructor errors as ValidationError naming the config path."""
    try:
        yield
    except ValidationError:
        raise
    except (ValueError, MfChaosError) as exc:
        raise ValidationError(path, str(exc)) from None


class Setup:
    """Model objects built from a RunConfig; construction validates everything."""

    def __init__(self, cfg):
        self.cfg = cfg
        d = cfg.section("driver")
        with _owned("driver"):
            if d["kind"] == "linear":
                self.driver = DriverSpec.linear(d["a"], d["b"], root_tolerance=d["root_tolerance"])
            elif d["kind"] == "perturbed":
                self.driver = DriverSpec.perturbed(d["a"], d["b"], d["amplitude"], d["frequency"],
                                                   root_tolerance=d["root_tolerance"])
            else:
                self.driver = DriverSpec.constant(d["sigma"])
        k = cfg.section("kernel")
        with _owned("kernel"):
            self.kernel = MollifierKernel(k["shape"], k["epsilon"])
        g = cfg.section("grid")
        with _owned("grid"):
            self.grid = Grid1D(g["x_min"], g["x_max"], g["nx"])
        f = cfg.section("fp")
        with _owned("fp"):
            self.fp = FpConfig(self.grid, self.kernel, self.driver, f["t_end"],
                               cfl_factor=f["cfl"], time_scheme=f["scheme"])
        self.snapshot_times = tuple(np.linspace(0.0, f["t_end"], max(2, f["n_snapshots"])))
        i = cfg.section("initial")
        with _owned("initial"):
            if i["kind"] == "gaussian":
                self.law = (ex.gaussian_with_peak(i["peak"], i["mean"]) if i["peak"] > 0
                            else Gaussian(i["mean"], i["sd"]))
            elif i["kind"] == "bump":
                self.law = ScaledBump(i["center"], i["width"])
            else:
                self.law = FromDensityField(ex.plateau(self.grid, i["width"], i["center"]))
            self.u0 = ex.law_density(self.law, self.grid)
        p = cfg.section("particles")
        with _owned("particles"):
            mode = GridInterpolated(self.grid) if p["density_eval"] == "grid" else p["density_eval"]
            self.sde = SdeConfig(self.driver, self.kernel, p["dt"], f["t_end"], p["n"],
                                 cfg["seeds"][0], mode)

    def echo(self):
        """Config echo for reports: output location and pool size do not affect results."""
        out = self.cfg.as_dict()
        out.pop("out_dir", None)
        out.pop("threads", None)
        return out


def _verdict_line(v):
    return f"{v.criterion_id}: {v.status} (measured {v.measured:.6g}, threshold {v.threshold:.6g})"


def _check_stability(setup, stem):
    m = setup.cfg["m_inf"]
    rows = {"convention": [], "c_h": [], "c_0": [], "C_0": [], "gamma": [], "satisfied": [],
            "margin": []}
    reports = {}
    for conv in ("basal", "range"):
        b = extract_bounds(setup.driver, m, convention=conv)
        r = check_stability(b, m)
        reports[conv] = r
        for key, val in (("convention", conv), ("c_h", b.c_h), ("c_0", b.c_0), ("C_0", b.C_0),
                         ("gamma", r.gamma), ("satisfied", r.satisfied), ("margin", r.margin)):
            rows[key].append(val)
    ex.write_table_csv(stem + "_stability.csv", rows)
    r = reports["basal"]
    print(f"gamma = {r.gamma:.6g} ({'satisfied' if r.satisfied else 'not satisfied'}, basal)")
    print(f"gamma = {reports['range'].gamma:.6g} (range over densities up to m_inf = {m:g})")
    return [ex.Verdict.check("stability", r.gamma, 0.0, r.satisfied,
                             "basal convention, strict inequality")]


def _solve_fp(setup, stem):
    cfg = setup.fp.replace(snapshot_times=setup.snapshot_times)
    traj = solve(cfg, setup.u0)
    write_snapshots_csv(stem + "_snapshots.csv", traj.snapshots)
    traj.write_diagnostics_csv(stem + "_diagnostics.csv")
    m = float(setup.u0.values.max())
    bounds = extract_bounds(setup.driver, m)
    budgets = ex.energy_series(cfg, traj, bounds, m)
    write_energy_csv(stem + "_energy.csv", budgets)
    s = ex._fp_summary(traj)
    verdicts = [ex._conservation_verdict([s]),
                ex.Verdict.check("boundary", s["boundary_max"], 1e-8, s["boundary_max"] < 1e-8),
                ex.Verdict.check("no_blow_up", float(s["blow_up"]), 0.0, not s["blow_up"])]
    if traj.stability.satisfied:
        worst = min(b.coercivity_margin for b in budgets)
        verdicts.append(ex.Verdict.check("coercivity", worst, 0.0,
                                         all(b.coercivity_margin > 0 for b in budgets)))
    else:
        verdicts.append(ex.Verdict.skip("coercivity", "stability condition fails", 0.0))
    return verdicts


def _simulate_particles(setup, stem):
    verdicts = []
    for seed in setup.cfg["seeds"]:
        sde = setup.sde.replace(seed=seed)
        snaps = simulate(sde, init_ensemble(sde.n, setup.law, seed), setup.snapshot_times)
        write_ensembles_csv(f"{stem}_seed{seed}_ensemble.csv", snaps)
        finite = bool(np.all(np.isfinite(snaps[-1].positions)))
        verdicts.append(ex.Verdict.check(f"finite_seed{seed}", float(finite), 1.0, finite))
    return verdicts


def _experiment(setup, threads):
    c = setup.cfg
    echo = setup.echo()
    name = c.experiment
    if name == "converge-n":
        return ex.converge_n(setup.sde, setup.fp, setup.law, c["particles.n_list"], c["seeds"],
                             threads=threads, parameters=echo)
    if name == "converge-eps":
        e = c.section("eps")
        return ex.converge_eps(setup.fp, setup.law, e["eps_list"], e["grid_rule"],
                               headroom=e["headroom"], threads=threads, parameters=echo)
    if name == "uniqueness":
        u = c.section("uniqueness")
        fp = setup.fp.replace(t_end=u["horizon"])
        delta = ex.mass_neutral_perturbation(setup.u0, u["size"], u["wavenumber"], u["center"])
        return ex.uniqueness_study(fp, setup.u0, delta, u["n_snapshots"], u["headroom"],
                                   threads=threads, parameters=echo)
    if name == "stability-sweep":
        s = c.section("sweep")
        return ex.stability_sweep(setup.fp, s["b_list"], c["m_inf"], a=c["driver.a"],
                                  headroom=s["headroom"], threads=threads, parameters=echo)
    s = c.section("smoothing")
    return ex.smoothing_study(setup.fp, s["spike_width"], m_inf=c["m_inf"], t_lo=s["t_lo"],
                              n_snapshots=s["n_snapshots"], tolerance=s["tolerance"],
                              control_sigma=s["control_sigma"] or None, threads=threads,
                              parameters=echo)


def build_parser():
    p = argparse.ArgumentParser(prog="mfchaos", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="path to the run configuration")
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.add_argument("--seed-offset", type=int, default=0, help="added to every seed")
    p.add_argument("--threads", type=int, help="worker threads (0: all cores)")
    return p


def run(args):
    cfg = parse_config(args.config)
    if cfg.experiment != args.subcommand and cfg.experiment != "check-stability":
        raise ValidationError("experiment",
                              f"config selects {cfg.experiment!r}, command line {args.subcommand!r}")
    overrides = {"experiment": args.subcommand,
                 "seeds": [s + args.seed_offset for s in cfg["seeds"]]}
    if args.out:
        overrides["out_dir"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    cfg = cfg.with_values(**overrides)
    setup = Setup(cfg)

    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    digest = hashlib.sha256(repr(sorted(setup.echo().items())).encode()).hexdigest()[:12]
    timestamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    stem = os.path.join(out_dir, f"{cfg.experiment}_{timestamp}_{digest}")
    # the echo goes out before any numerics, for crash forensics
    with open(stem + "_config.ini", "w") as fh:
        fh.write(format_config(cfg))

    name = cfg.experiment
    if name == "check-stability":
        verdicts = _check_stability(setup, stem)
    elif name == "solve-fp":
        verdicts = _solve_fp(setup, stem)
    elif name == "simulate-particles":
        verdicts = _simulate_particles(setup, stem)
    else:
        report = _experiment(setup, cfg["threads"])
        report.write(out_dir, timestamp, stem=stem)
        verdicts = report.verdicts
    for v in verdicts:
        print(_verdict_line(v))
    return EXIT_FAIL if any(v.status == ex.FAIL for v in verdicts) else EXIT_PASS


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (MfChaosError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        log.debug("unexpected failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
