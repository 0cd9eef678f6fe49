"""Command-line entry point.

    spinopto <command> --config <file> [--out-dir <dir>] [--seed <u64>] [--threads <n>]

Exit status is 0 on success, 1 for configuration errors and 2 for numerical
failures (a ``diagnostic.json`` is written to the output directory).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from spinopto.config import RunConfig, emit_config, load_config
from spinopto.dynamics import measure_ringdown, simulate
from spinopto.errors import ConfigError, DomainError, SpinoptoError, UnsupportedConfigurationError
from spinopto.linear import (
    build_state_space,
    baseline_params,
    field_transfer_eq9,
    noise_spectrum_linear,
    response_at,
    response_functions,
)
from spinopto.model import SpinState, SystemParams, analogy_equivalence_check, analogy_map
from spinopto.spectral import expected_noise_map, simulated_noise_map
from spinopto.steady import find_fixed_points, quasistatic_sweep

logger = logging.getLogger("spinopto")

COMMANDS = ("fixed-points", "sweep", "simulate", "ringdown", "spectrum", "linear", "analogy",
            "scenario")
DEFAULT_OUT_DIR = "spinopto_out"
AGREEMENT_FLOOR_DB = -30.0
AGREEMENT_TOL_DB = 3.0
# default initial angles sit this far (rad) either side of the static separatrix;
# weak damping interleaves the basins closer in
TRIGGER_OFFSET = 0.3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------- output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header, rows):
    """Write numeric rows; floats use the shortest round-trip representation."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, complex):
        return {"re": _jsonable(obj.real), "im": _jsonable(obj.imag)}
    return obj


def write_json(path: Path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _params_echo(p: SystemParams):
    return {**asdict(p), "b": list(p.b)}


def _fp_row(fp, p):
    try:
        dyn = build_state_space(p, fp).max_real_eig < 0
    except SpinoptoError:
        dyn = False
    return {
        "theta0": fp.theta0,
        "S_k_fraction": fp.S_k_fraction,
        "n_plus": fp.n_plus,
        "n_minus": fp.n_minus,
        "lam": fp.lam,
        "alpha": fp.alpha,
        "stable": fp.stable,
        "marginal": fp.marginal,
        "dynamically_stable": dyn,
        "residual": fp.residual_value,
    }


def _write_rows(path, dicts):
    if not dicts:
        write_csv(path, [], [])
        return
    header = list(dicts[0])
    write_csv(path, header, [[d[h] for h in header] for d in dicts])


def _write_trajectory(path, traj):
    cols = traj.columns()
    write_csv(path, list(cols), zip(*cols.values()))


# ---------------------------------------------------------------- helpers


class Context:
    """Per-invocation settings shared by the commands."""

    def __init__(self, cfg: RunConfig, out_dir: Path, seed=None, threads=1):
        self.cfg = cfg
        self.out = out_dir
        self.seed = seed
        self.threads = max(1, int(threads))
        self.p = cfg.system_params()

    def sim_config(self, duration=None, noise=None):
        sc = self.cfg.sim_config(duration=duration, seed=self.seed)
        return sc if noise is None else replace(sc, noise_enabled=noise)

    def map(self, fn, items):
        items = list(items)
        if self.threads == 1 or len(items) == 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))


def _circ(a, b):
    d = abs(math.remainder(a - b, 2 * math.pi))
    return d


def _nearest_fixed_point(p, target):
    fps = find_fixed_points(p)
    if not fps:
        raise DomainError("no fixed points found")
    return min(fps, key=lambda fp: _circ(fp.theta0, target))


def _initial_state(ctx: Context, cavity=None):
    init = ctx.cfg.section("init")
    spin = SpinState.from_angles(ctx.p.S, init["theta0"], init["phi"])
    mode = cavity or init["cavity"]
    cav = (0j, 0j) if mode == "empty" else None
    return spin, cav


def _sweep_grid(start, stop, step, scale):
    """Detuning grid in rad/s and in configured units."""
    if step <= 0 or stop <= start:
        raise ConfigError("sweep: need stop > start and step > 0", "sweep")
    n = int(round((stop - start) / step)) + 1
    grid_cfg = start + step * np.arange(n)
    return grid_cfg * scale, grid_cfg


# ---------------------------------------------------------------- commands


def cmd_fixed_points(ctx: Context):
    fb = ctx.cfg.section("fixed_points")
    fps = find_fixed_points(ctx.p, fb["grid_n"])
    rows = [_fp_row(fp, ctx.p) for fp in fps]
    _write_rows(ctx.out / "fixed_points.csv", rows)
    return {"params": _params_echo(ctx.p), "fixed_points": rows}


def _run_sweeps(ctx: Context, sw):
    raw = ctx.cfg.sections.get("sweep", sw)
    grid, grid_cfg = _sweep_grid(raw["start"], raw["stop"], raw["step"], ctx.cfg.freq_scale)
    dirs = ("up", "down") if sw["direction"] == "both" else (sw["direction"],)
    summary = {}
    for d in dirs:
        g, gc = (grid, grid_cfg) if d == "up" else (grid[::-1], grid_cfg[::-1])
        tr = quasistatic_sweep(ctx.p, g, d, sw["start_theta"], sw["capture_radius"], sw["grid_n"])
        jumps = set(tr.jump_indices)
        rows = [
            [g[i], gc[i], fp.theta0, fp.S_k_fraction, fp.n_plus, fp.n_minus, fp.stable, i in jumps]
            for i, fp in enumerate(tr.fixed_points)
        ]
        write_csv(ctx.out / f"sweep_{d}.csv",
                  ["detuning", "detuning_cfg", "theta0", "S_k_fraction", "n_plus", "n_minus",
                   "stable", "jump"], rows)
        summary[d] = {
            "jump_detunings": tr.jump_detunings,
            "jump_detunings_cfg": gc[list(tr.jump_indices)],
        }
    return summary


def cmd_sweep(ctx: Context):
    if "sweep" not in ctx.cfg.sections:
        raise ConfigError("sweep: block required for this command", "sweep")
    return {"params": _params_echo(ctx.p), "sweeps": _run_sweeps(ctx, ctx.cfg.section("sweep"))}


def cmd_simulate(ctx: Context):
    spin, cav = _initial_state(ctx)
    sc = ctx.sim_config()
    traj = simulate(ctx.p, spin, cav, sc)
    _write_trajectory(ctx.out / "trajectory.csv", traj)
    norm = np.linalg.norm(traj.spin, axis=1)
    return {
        "params": _params_echo(ctx.p),
        "dt": traj.dt,
        "nsteps": traj.metadata["nsteps"],
        "final_spin": traj.spin[-1],
        "final_S_i_fraction": traj.spin[-1, 0] / ctx.p.S,
        "max_norm_drift": float(np.max(np.abs(norm - ctx.p.S))),
        "mean_n_plus": float(np.mean(traj.n_plus)),
        "mean_n_minus": float(np.mean(traj.n_minus)),
    }


def cmd_ringdown(ctx: Context):
    rb = ctx.cfg.section("ringdown")
    p = ctx.p
    fp = _nearest_fixed_point(p, rb["target_theta"])
    lr = response_at(fp, p)
    ss = build_state_space(p, fp)
    ev = ss.precession_eigenvalue
    sb = ctx.cfg.section("sim")
    duration = sb["duration"] or 50 * 2 * math.pi / lr.omega_Lpp
    sc = ctx.sim_config(duration=duration)
    spin = SpinState.from_angles(p.S, fp.theta0 + rb["deflection"])
    traj = simulate(p, spin, None, sc)
    _write_trajectory(ctx.out / "trajectory.csv", traj)
    t0 = rb["window_start"] if rb["window_start"] is not None else min(20 / p.kappa, duration / 10)
    t1 = rb["window_stop"] if rb["window_stop"] is not None else traj.times[-1]
    freq, rate = measure_ringdown(traj, (t0, t1))
    return {
        "params": _params_echo(p),
        "fixed_point": _fp_row(fp, p),
        "measured_frequency": freq,
        "measured_rate": rate,
        "omega_Lpp": lr.omega_Lpp,
        "rwa_rate": lr.rwa_rate,
        "eigenvalue": ev,
        "frequency_rel_error": freq / lr.omega_Lpp - 1,
        "rate_rel_error_vs_eigenvalue": rate / ev.real - 1 if ev.real else None,
    }


def _agreement(sim_db, ref_db):
    ok = (sim_db > AGREEMENT_FLOOR_DB) & (ref_db > AGREEMENT_FLOOR_DB)
    dev = np.abs(sim_db - ref_db)[ok]
    return {
        "bins_compared": int(ok.sum()),
        "max_abs_dev_db": float(dev.max()) if dev.size else None,
        "bins_over_tolerance": int((dev > AGREEMENT_TOL_DB).sum()),
        "fraction_over_tolerance": float((dev > AGREEMENT_TOL_DB).mean()) if dev.size else None,
    }


def spectrum_pipeline(ctx: Context, fp, duration, out_name="spectrum.csv"):
    """Paired signal/baseline simulation at ``fp`` plus both linear references."""
    p = ctx.p
    sb = ctx.cfg.section("spectrum")
    ss = build_state_space(p, fp)
    if ss.max_real_eig >= 0:
        raise DomainError(f"fixed point at theta0={fp.theta0:.6g} is not dynamically stable")
    sc = ctx.sim_config(duration=duration, noise=True)
    # same step for both runs; the uncoupled guard is never tighter
    sc = replace(sc, dt=sc.step_size(p))
    spin = fp.spin_vector(p.S)
    pair = ctx.map(lambda q: simulate(q, spin, None, sc), [p, baseline_params(p, fp)])
    transient = sb["transient"] if sb["transient"] is not None else max(
        200 / p.kappa, 10 / abs(ss.max_real_eig))
    phis = np.asarray(sb["phi"])
    sim = simulated_noise_map(pair[0], pair[1], phis, sb["segment_length"], t_start=transient)
    lin = noise_spectrum_linear(ss, sim.omega_grid, phis)
    exp = expected_noise_map(ss, sim.omega_grid, phis, pair[0].dt_record, sb["segment_length"])
    rows = ([w, ph, sim.power[i, j], lin.power[i, j], exp.power[i, j]]
            for i, w in enumerate(sim.omega_grid) for j, ph in enumerate(phis))
    write_csv(ctx.out / out_name, ["omega", "phi", "sim_db", "linear_db", "expected_db"], rows)
    lr = response_at(fp, p)
    keys = ("db", "omega", "phi")
    return {
        "fixed_point": _fp_row(fp, p),
        "omega_Lpp": lr.omega_Lpp,
        "transient": transient,
        "dt_record": pair[0].dt_record,
        "min_sim": dict(zip(keys, sim.minimum())),
        "min_linear": dict(zip(keys, lin.minimum())),
        "min_expected": dict(zip(keys, exp.minimum())),
        "agreement_vs_linear": _agreement(sim.power, lin.power),
        "agreement_vs_expected": _agreement(sim.power, exp.power),
    }


def cmd_spectrum(ctx: Context):
    sb = ctx.cfg.section("spectrum")
    fp = _nearest_fixed_point(ctx.p, sb["target_theta"])
    res = spectrum_pipeline(ctx, fp, ctx.cfg.section("sim")["duration"])
    return {"params": _params_echo(ctx.p), **res}


def cmd_linear(ctx: Context):
    lb = ctx.cfg.section("linear")
    p = ctx.p
    fp = _nearest_fixed_point(p, lb["target_theta"])
    ss = build_state_space(p, fp)
    out = {
        "params": _params_echo(p),
        "fixed_point": _fp_row(fp, p),
        "eigenvalues": ss.eigenvalues,
        "max_real_eig": ss.max_real_eig,
    }
    try:
        out["response"] = asdict(response_at(fp, p))
    except DomainError as exc:
        out["response"] = None
        out["response_error"] = str(exc)
    wmax = lb["omega_max"] or 5 * p.omega_L / abs(math.sin(fp.theta0))
    wmin = lb["omega_min"] or wmax / lb["n_omega"]
    grid = np.linspace(wmin, wmax, lb["n_omega"])
    phis = np.asarray(lb["phi"])
    if ss.max_real_eig < 0:
        spec = noise_spectrum_linear(ss, grid, phis)
        write_csv(ctx.out / "linear_spectrum.csv", ["omega", "phi", "db"],
                  ([w, ph, spec.power[i, j]] for i, w in enumerate(grid)
                   for j, ph in enumerate(phis)))
        out["min_linear"] = dict(zip(("db", "omega", "phi"), spec.minimum()))
    try:
        _, _, chi = response_functions(p, fp, grid)
        a = field_transfer_eq9(p, fp, grid)
        write_csv(ctx.out / "response.csv", ["omega", "re_chi", "im_chi", "re_A", "im_A"],
                  zip(grid, chi.real, chi.imag, a.real, a.imag))
    except (UnsupportedConfigurationError, DomainError) as exc:
        out["response_functions_error"] = str(exc)
    return out


def cmd_analogy(ctx: Context):
    ab = ctx.cfg.section("analogy")
    m = analogy_map(ctx.p)
    dev = analogy_equivalence_check(ctx.p, ab["amplitude"], ab["duration"],
                                    ab["photon_imbalance"])
    return {"params": _params_echo(ctx.p), "analogue": asdict(m), "relative_deviation": dev}


# ---------------------------------------------------------------- scenarios


def scenario_fig2(ctx: Context):
    p = ctx.p
    fps = find_fixed_points(p)
    rows = [_fp_row(fp, p) for fp in fps]
    _write_rows(ctx.out / "fixed_points.csv", rows)
    if "sweep" in ctx.cfg.sections:
        sw = ctx.cfg.section("sweep")
    else:
        # default grid: -8 kappa to 2 kappa in steps of 0.01 kappa
        k = p.kappa / ctx.cfg.freq_scale
        sw = {"start": -8.0 * k, "stop": 2.0 * k, "step": 0.01 * k, "direction": "both",
              "start_theta": math.pi / 2, "capture_radius": 0.2, "grid_n": 4096}
    return {"params": _params_echo(p), "fixed_points": rows, "sweeps": _run_sweeps(ctx, sw)}


def scenario_fig3(ctx: Context):
    p = ctx.p
    scen = ctx.cfg.section("scenario")
    spin, cav = _initial_state(ctx)
    sc = ctx.sim_config(duration=scen["duration"] or 8e-3, noise=True)
    # the time trace only needs a tenth of the spectral sampling rate
    traj = simulate(p, spin, cav, replace(sc, record_stride=10 * sc.record_stride))
    _write_trajectory(ctx.out / "trajectory.csv", traj)
    tail = traj.spin[-max(1, len(traj.times) // 20):]
    final = tail.mean(axis=0)
    theta_end = math.atan2(final[0], final[2])
    fp = _nearest_fixed_point(p, theta_end)
    spec = spectrum_pipeline(ctx, fp, scen["spectrum_duration"] or 12e-3)
    return {
        "params": _params_echo(p),
        "final_S_i_fraction": final[0] / p.S,
        "final_S_k_fraction": final[2] / p.S,
        "spectrum": spec,
        "min_squeezing_db": spec["min_sim"]["db"],
    }


def _trigger_thresholds(p):
    fps = find_fixed_points(p)
    upper = [fp for fp in fps if 0 < fp.theta0 < math.pi]
    unstable = [fp for fp in upper if not fp.stable and fp.theta0 < math.pi / 2]
    stable = [fp for fp in upper if fp.stable]
    if not unstable or len(stable) < 2:
        raise DomainError("parameters are not bistable; no latching threshold")
    sep = max(unstable, key=lambda fp: fp.theta0)
    n_tot = [fp.n_plus + fp.n_minus for fp in stable]
    n_cut = math.sqrt(max(min(n_tot), 1e-300) * max(n_tot))
    return sep, n_cut, min(n_tot), max(n_tot)


def scenario_trigger(ctx: Context):
    p = ctx.p
    scen = ctx.cfg.section("scenario")
    sep, n_cut, n_dark, n_bright = _trigger_thresholds(p)
    thetas = scen["thetas"] or [sep.theta0 - TRIGGER_OFFSET, sep.theta0 + TRIGGER_OFFSET]
    sc = ctx.sim_config(duration=scen["duration"] or 3e4 / p.kappa)
    phi = ctx.cfg.section("init")["phi"]

    def run(th):
        # diabatic turn-on: empty cavity, full drive from t = 0
        return simulate(p, SpinState.from_angles(p.S, th, phi), (0j, 0j), sc)

    trajs = ctx.map(run, thetas)
    rows, outcomes = [], []
    for idx, (th, tr) in enumerate(zip(thetas, trajs)):
        _write_trajectory(ctx.out / f"trigger_{idx}.csv", tr)
        last = tr.times >= tr.times[-1] * 2 / 3
        n_mean = float(np.mean(tr.n_plus[last] + tr.n_minus[last]))
        outcome = "bright" if n_mean > n_cut else "dark"
        rows.append([th, n_mean, outcome == "bright"])
        outcomes.append({"theta0": th, "mean_n": n_mean, "outcome": outcome})
    write_csv(ctx.out / "trigger.csv", ["theta0", "mean_n", "bright"], rows)
    return {
        "params": _params_echo(p),
        "threshold_theta0": sep.theta0,
        "n_threshold": n_cut,
        "n_dark_static": n_dark,
        "n_bright_static": n_bright,
        "runs": outcomes,
    }


SCENARIO_RUNNERS = {"fig2": scenario_fig2, "fig3": scenario_fig3, "trigger": scenario_trigger}


def cmd_scenario(ctx: Context):
    if "scenario" not in ctx.cfg.sections:
        raise ConfigError("scenario: block required for this command", "scenario")
    name = ctx.cfg.sections["scenario"]["name"]
    return {"scenario": name, **SCENARIO_RUNNERS[name](ctx)}


RUNNERS = {
    "fixed-points": cmd_fixed_points,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "ringdown": cmd_ringdown,
    "spectrum": cmd_spectrum,
    "linear": cmd_linear,
    "analogy": cmd_analogy,
    "scenario": cmd_scenario,
}


# ---------------------------------------------------------------- entry


def build_parser():
    ap = _Parser(prog="spinopto", description="Cavity spin optodynamics simulator.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON configuration file")
    ap.add_argument("--out-dir", default=None,
                    help="output directory (default: $SPINOPTO_OUT_DIR or ./spinopto_out)")
    ap.add_argument("--seed", type=int, default=None, help="override sim.seed (unsigned 64-bit)")
    ap.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    return ap


def run_command(cmd, cfg: RunConfig, out_dir, seed=None, threads=1) -> dict:
    """Run one command and write its artifacts; returns the summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, out, seed=seed, threads=threads)
    (out / "config.json").write_text(emit_config(cfg) + "\n", encoding="utf-8")
    summary = {"command": cmd, **RUNNERS[cmd](ctx)}
    write_json(out / "summary.json", summary)
    return summary


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out_dir = None
    try:
        args = build_parser().parse_args(argv)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out_dir = Path(args.out_dir or os.environ.get("SPINOPTO_OUT_DIR") or DEFAULT_OUT_DIR)
        cfg = load_config(args.config)
        run_command(args.command, cfg, out_dir, seed=args.seed, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (SpinoptoError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            diag = {
                "error": type(exc).__name__,
                "message": str(exc),
                "t_reached": getattr(exc, "t_reached", None),
                "diagnostics": getattr(exc, "diagnostics", None),
                "traceback": traceback.format_exc(),
            }
            write_json(out_dir / "diagnostic.json", diag)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
