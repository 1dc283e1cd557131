"""Command-line front end: config-driven, reproducible analysis runs.

Every command reads one TOML config (all keys defaulted), writes its
artifacts plus a manifest.json into --out, and exits 0 on success, 2 on
configuration problems, 3 on numerical failures and 4 on I/O errors.
Outputs are pure functions of (config, input files, flags); --threads never
changes results.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import artifacts as art
from . import timetag as tt
from .config import (build_cycle, build_emitter, build_resonator,
                     build_sim_params, build_stack, load_config, scan_grids)
from .constants import PLANCK
from .errors import ConfigError, EmptyCondition, NoMinimum, NumericalError
from .potentials import F1, F2, potential_terms, total_potential, trap_metrics
from .resonator import (circulating_power, finesse, fit_spectrum,
                        lifetime_to_cooperativity, peak_intensity,
                        transmission)
from .sslmc import (scan_detuning_intensity, scan_velocity_detuning,
                    scattering_rate)
from .tunneling import (fit_log_decay, recoil_photon_budget, survival_curve,
                        wkb_tunneling_time)


def _resolve_threads(requested: int | None) -> int:
    """Pick the worker count from flag, environment, or runtime default."""
    import numba

    if requested is None:
        env = os.environ.get("EVTRAP_THREADS")
        if env is not None:
            try:
                requested = int(env)
            except ValueError:
                raise ConfigError("EVTRAP_THREADS must be an integer")
    if requested is None:
        return numba.config.NUMBA_NUM_THREADS
    if requested < 1:
        raise ConfigError("--threads must be at least 1")
    # more workers than the runtime owns cannot be honored; results never
    # depend on the worker count anyway
    n = min(requested, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n


def _apply_overrides(cfg: dict, args) -> None:
    if getattr(args, "seed", None) is not None:
        cfg["scan"]["seed"] = args.seed
    if getattr(args, "traj", None) is not None:
        if args.traj < 1:
            raise ConfigError("--traj must be at least 1")
        cfg["scan"]["n_traj"] = args.traj


def _mhz(joule):
    return np.asarray(joule) / PLANCK / 1e6


# --- potential ---

def cmd_potential(cfg, args, out):
    p = cfg["potential"]
    stack = build_stack(cfg)
    files = []

    x = np.linspace(stack.surface.x_contact, p["profile_x_max_m"],
                    int(p["profile_points"]))
    u1 = total_potential(x, F1, stack)
    u2 = total_potential(x, F2, stack)
    terms = potential_terms(x, F2, stack)
    ext = sum(v for k, v in terms.items() if k != "evanescent")
    rate1 = scattering_rate(x, F1, stack)
    art.write_csv(os.path.join(out, "potential.csv"),
                  ["x_nm", "u_f1_mhz", "u_f2_mhz", "external_mhz",
                   "rate_f1_per_s"],
                  zip(x * 1e9, _mhz(u1), _mhz(u2), _mhz(ext), rate1))
    files.append("potential.csv")

    metrics = {
        "saturation": stack.evanescent.i0 / stack.atom.i_sat,
        "detuning_mhz": stack.evanescent.detuning_f1 / (2 * math.pi * 1e6),
    }
    try:
        m = trap_metrics(stack, F2)
        metrics.update({
            "no_minimum": False,
            "x_min_nm": m.x_min * 1e9,
            "freq_x_hz": m.freq_x,
            "u_min_mhz": float(_mhz(m.u_min)),
            "depth_to_vacuum_mhz": float(_mhz(m.depth_to_vacuum)),
            "barrier_to_surface_mhz": float(_mhz(m.barrier_to_surface)),
            "x_barrier_in_nm": m.x_barrier_in * 1e9,
            "x_barrier_out_nm": m.x_barrier_out * 1e9,
        })
    except NoMinimum as exc:
        print(f"no interior trap minimum: {exc}")
        metrics.update({"no_minimum": True})
    metrics["tweezer_u_inc_hz"] = stack.tweezer.u_inc / PLANCK
    metrics["tweezer_phi_refl"] = stack.tweezer.phi_refl
    art.write_json(os.path.join(out, "metrics.json"), metrics)
    files.append("metrics.json")

    sweep = p["wavelength_sweep_nm"]
    if sweep:
        rows = []
        for lam in sweep:
            st = build_stack(cfg, wavelength_m=lam * 1e-9)
            try:
                m = trap_metrics(st, F2)
                rows.append((lam, m.x_min * 1e9, m.freq_x,
                             float(_mhz(m.barrier_to_surface)), 0))
            except NoMinimum:
                rows.append((lam, math.nan, math.nan, math.nan, 1))
        art.write_csv(os.path.join(out, "wavelength_sweep.csv"),
                      ["wavelength_nm", "x_min_nm", "freq_x_hz",
                       "barrier_to_surface_mhz", "no_minimum"], rows)
        files.append("wavelength_sweep.csv")

    if args.svg:
        lo = min(float(np.nanmin(_mhz(u2))), 0.0)
        clip = np.clip(_mhz(u1), lo - 5.0, 50.0)
        art.svg_line(os.path.join(out, "potential.svg"), x * 1e9,
                     {"F=1": clip,
                      "F=2": np.clip(_mhz(u2), lo - 5.0, 50.0)},
                     "state-dependent trapping potential", "x (nm)",
                     "U/h (MHz)")
        files.append("potential.svg")
    return files


# --- scan ---

def cmd_scan(cfg, args, out):
    s = cfg["scan"]
    stack = build_stack(cfg)
    params = build_sim_params(cfg)
    det, sat, vel = scan_grids(cfg)
    if s["kind"] == "detuning_saturation":
        pd = scan_detuning_intensity(stack, params, det, sat)
    elif s["kind"] == "velocity_detuning":
        pd = scan_velocity_detuning(stack, params, vel, det,
                                    s["fixed_saturation"])
    else:
        raise ConfigError("[scan] kind: must be 'detuning_saturation' or "
                          "'velocity_detuning'")

    rows = []
    for i, rv in enumerate(pd.rows):
        for j, cv in enumerate(pd.cols):
            rows.append((
                rv, cv / 1e6, pd.trapped[i, j], pd.wilson_trapped[i, j],
                pd.surface[i, j], pd.wilson_surface[i, j],
                pd.reflected[i, j], pd.wilson_reflected[i, j],
                pd.mean_energy_over_depth[i, j],
                float(_mhz(pd.trap_depth[i, j])), pd.destroyed[i, j],
                pd.dt_ns[i, j], pd.counts))
    art.write_csv(os.path.join(out, "phase.csv"),
                  [pd.row_label, "detuning_mhz", "trapped", "wilson_trapped",
                   "surface", "wilson_surface", "reflected",
                   "wilson_reflected", "mean_energy_over_depth",
                   "trap_depth_mhz", "destroyed", "dt_ns", "counts"], rows)

    i, j = np.unravel_index(int(pd.trapped.argmax()), pd.trapped.shape)
    summary = {
        "kind": pd.kind,
        "seed": pd.seed,
        "counts_per_cell": pd.counts,
        "fixed": pd.fixed,
        "best_cell": {
            "row_value": float(pd.rows[i]),
            "detuning_mhz": float(pd.cols[j] / 1e6),
            "trapped": float(pd.trapped[i, j]),
            "wilson_trapped": float(pd.wilson_trapped[i, j]),
            "mean_energy_over_depth": float(
                pd.mean_energy_over_depth[i, j]),
        },
        "marginal_max_trapped_by_detuning": pd.trapped.max(axis=0),
        "marginal_max_trapped_by_row": pd.trapped.max(axis=1),
        "destroyed_cells": int(pd.destroyed.sum()),
        "refined_cells": int((pd.dt_ns < pd.dt_ns.max()).sum()),
    }
    art.write_json(os.path.join(out, "summary.json"), summary)
    files = ["phase.csv", "summary.json"]

    if args.svg:
        art.svg_heatmap(os.path.join(out, "phase.svg"), pd.trapped,
                        pd.rows, pd.cols / 1e6, "trapped fraction",
                        "detuning (MHz)", pd.row_label)
        files.append("phase.svg")
    return files


# --- tunneling ---

def cmd_tunneling(cfg, args, out):
    t = cfg["tunneling"]
    delta_e = np.asarray(
        np.linspace(t["delta_e_mhz"][0], t["delta_e_mhz"][1],
                    int(t["delta_e_mhz"][2]))
        if len(t["delta_e_mhz"]) == 3 else t["delta_e_mhz"], dtype=float)
    if delta_e.size == 0:
        raise ConfigError("[tunneling] delta_e_mhz: empty grid")
    lams = t["wavelengths_nm"]
    if not lams:
        raise ConfigError("[tunneling] wavelengths_nm: empty list")

    rows = []
    for lam in lams:
        stack = build_stack(cfg, wavelength_m=lam * 1e-9,
                            saturation=t["saturation"],
                            detuning_mhz=t["detuning_mhz"])
        for de in delta_e:
            r = wkb_tunneling_time(stack, de * 1e6 * PLANCK)
            rows.append((lam, de, r.time, r.rate, r.action,
                         r.attempt_freq, int(r.above_barrier)))
    art.write_csv(os.path.join(out, "wkb.csv"),
                  ["wavelength_nm", "delta_e_mhz", "time_s", "rate_per_s",
                   "action", "attempt_freq_hz", "above_barrier"], rows)
    files = ["wkb.csv"]

    # survival of an energy distribution on the first configured wavelength
    sv = t["survival_tau_s"]
    tau = np.logspace(math.log10(sv[0]), math.log10(sv[1]), int(sv[2]))
    de_s = np.asarray(t["survival_delta_e_mhz"], dtype=float)
    weights = np.asarray(t["survival_weights"], dtype=float) \
        if t["survival_weights"] else np.ones(de_s.size)
    if weights.size != de_s.size:
        raise ConfigError("[tunneling] survival_weights: length must match "
                          "survival_delta_e_mhz")
    stack = build_stack(cfg, wavelength_m=lams[0] * 1e-9,
                        saturation=t["saturation"],
                        detuning_mhz=t["detuning_mhz"])
    surv, times = survival_curve(stack, de_s * 1e6 * PLANCK, weights, tau)
    art.write_csv(os.path.join(out, "survival.csv"),
                  ["tau_s", "survival"], zip(tau, surv))
    files.append("survival.csv")

    fit = None
    if np.ptp(surv) > 0:
        try:
            f = fit_log_decay(tau, surv)
            fit = {"amplitude": f.amplitude, "b_s": f.b,
                   "residual": f.residual}
        except NumericalError as exc:
            fit = {"error": str(exc)}
    e_rec = (PLANCK / stack.atom.wavelength) ** 2 / (2 * stack.atom.mass)
    art.write_json(os.path.join(out, "tunneling.json"), {
        "log_decay_fit": fit,
        "component_times_s": times,
        "recoil_budget": [
            {"delta_e_mhz": float(de),
             "n_photons": recoil_photon_budget(de * 1e6 * PLANCK, e_rec)}
            for de in delta_e if de < 0],
    })
    files.append("tunneling.json")

    if args.svg:
        series = {}
        for lam in lams:
            sel = [r for r in rows if r[0] == lam]
            series[f"{lam:g} nm"] = [r[2] for r in sel]
        art.svg_line(os.path.join(out, "wkb.svg"), delta_e, series,
                     "tunneling time through the surface barrier",
                     "energy below barrier top (MHz)", "time (s)",
                     logy=True)
        files.append("wkb.svg")
    return files


# --- resonator ---

def cmd_resonator_model(cfg, args, out):
    r = cfg["resonator"]
    res = build_resonator(cfg)
    lo, hi, n = r["model_delta_ghz"]
    delta = np.linspace(lo * 1e9, hi * 1e9, int(n))
    trans = transmission(delta, res)
    art.write_csv(os.path.join(out, "model.csv"),
                  ["delta_ghz", "transmission"],
                  zip(delta / 1e9, trans))

    p_in = r["p_in_nw"] * 1e-9
    det = r["detuning_ghz"] * 1e9
    p_circ = circulating_power(p_in, det, res, r["input_loss"])
    i0 = peak_intensity(p_circ, res)
    art.write_json(os.path.join(out, "derived.json"), {
        "transmission_resonant": float(transmission(0.0, res)),
        "finesse": finesse(res),
        "kappa_ghz": res.kappa / 1e9,
        "p_circ_uw": p_circ * 1e6,
        "peak_intensity_w_m2": i0,
        "saturation": i0 / cfg["atom"]["i_sat"],
    })
    files = ["model.csv", "derived.json"]
    if args.svg:
        art.svg_line(os.path.join(out, "model.svg"), delta / 1e9,
                     {"T": trans}, "resonator transmission",
                     "detuning (GHz)", "transmission")
        files.append("model.svg")
    return files


def _read_xy_csv(path):
    try:
        rows = []
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(",")
                try:
                    rows.append([float(v) for v in parts])
                except ValueError:
                    if rows:
                        raise ConfigError(
                            f"{path}: non-numeric row {line!r}")
                    continue  # header line
    except OSError:
        raise
    if not rows or any(len(r) != 2 for r in rows):
        raise ConfigError(f"{path}: expected two numeric columns")
    a = np.asarray(rows, dtype=float)
    return a[:, 0], a[:, 1]


def cmd_resonator_fit(cfg, args, out):
    delta, trans = _read_xy_csv(args.file)
    try:
        fit = fit_spectrum(delta, trans,
                           fsr=cfg["resonator"]["fsr_thz"] * 1e12)
    except ValueError as exc:  # too few points for the model
        raise ConfigError(f"{args.file}: {exc}")
    art.write_json(os.path.join(out, "fit.json"), {
        "kappa_ex_ghz": fit.kappa_ex / 1e9,
        "kappa_i_ghz": fit.kappa_i / 1e9,
        "h_ghz": fit.h_backscatter / 1e9,
        "delta0_ghz": fit.delta0 / 1e9,
        "sigma_ghz": [s / 1e9 for s in fit.sigma],
        "residual": fit.residual,
        "transmission_resonant": float(transmission(0.0, fit.params)),
        "finesse": finesse(fit.params),
    })
    return ["fit.json"]


# --- tags ---

def _fold_csv(stream, cycle, bin_ns, out, name):
    h0 = tt.fold_histogram(stream.channel_times(0), cycle.period, bin_ns)
    h1 = tt.fold_histogram(stream.channel_times(1), cycle.period, bin_ns)
    t_us = (np.arange(h0.size) + 0.5) * bin_ns / 1e3
    art.write_csv(os.path.join(out, name),
                  ["t_us", "ch0", "ch1", "total"],
                  zip(t_us, h0, h1, h0 + h1))
    return t_us, h0 + h1


def cmd_tags_analyze(cfg, args, out):
    t = cfg["tags"]
    cycle = build_cycle(cfg)
    stream = tt.read_tags(args.file)
    bin_ns = int(round(t["fold_bin_us"] * 1e3))
    if bin_ns < 1 or cycle.period % bin_ns:
        raise ConfigError("[tags] fold_bin_us: must divide the cycle "
                          "period")
    t_us, total = _fold_csv(stream, cycle, bin_ns, out, "fold.csv")
    files = ["fold.csv"]

    n_cycles = int(stream.times.max() // cycle.period) if stream.n_tags \
        else 0
    if n_cycles < 1:
        ev_js = {"n_tags": stream.n_tags, "n_cycles": 0, "n_events": 0,
                 "trapping_probability": None,
                 "false_positive_rate": None, "threshold": t["threshold"]}
    else:
        events = tt.detect_events(stream, cycle, int(t["threshold"]))
        ev_js = {
            "n_tags": stream.n_tags,
            "n_cycles": events.n_cycles,
            "n_events": events.n_events,
            "trapping_probability": events.trapping_probability,
            "false_positive_rate": events.false_positive_rate,
            "threshold": events.threshold,
        }
        try:
            pn = tt.photon_number_stats(events)
            ev_js["photon_number"] = {
                "n": pn.n_values, "p_n": pn.p_n,
                "amplitude": pn.amplitude, "n0": pn.n0,
                "residual": pn.residual}
        except NumericalError as exc:
            ev_js["photon_number"] = {"error": str(exc)}
    art.write_json(os.path.join(out, "events.json"), ev_js)
    files.append("events.json")

    if t["decay_enabled"]:
        dbin = int(round(t["decay_bin_ns"]))
        dper = int(t["decay_period_ns"])
        if dbin < 1 or dper % dbin:
            raise ConfigError("[tags] decay_bin_ns: must divide "
                              "decay_period_ns")
        folded = tt.fold_histogram(stream.times, dper, dbin)
        fit = tt.fit_decay_lifetime(folded, np.zeros_like(folded), dbin,
                                    t["decay_fit_start_ns"])
        tau_free = cfg["resonator"]["tau_free_ns"] * 1e-9
        decay = {
            "tau_e_ns": fit.lifetime * 1e9,
            "sigma_tau_ns": fit.sigma_lifetime * 1e9,
            "amplitude": fit.amplitude,
            "background": fit.background,
            "residual": fit.residual,
        }
        try:
            decay["cooperativity"] = lifetime_to_cooperativity(
                fit.lifetime, tau_free)
        except NumericalError as exc:
            decay["cooperativity"] = None
            decay["cooperativity_error"] = str(exc)
        art.write_json(os.path.join(out, "decay.json"), decay)
        files.append("decay.json")

    if args.svg:
        art.svg_line(os.path.join(out, "fold.svg"), t_us,
                     {"counts": total}, "counts folded over the cycle",
                     "time in cycle (us)", f"counts / {bin_ns / 1e3:g} us")
        files.append("fold.svg")
    return files


def cmd_tags_g2(cfg, args, out):
    t = cfg["tags"]
    cycle = build_cycle(cfg)
    tau_bin = int(t["tau_bin_ns"])
    if tau_bin < 1 or int(t["tau_max_ns"]) % tau_bin:
        raise ConfigError("[tags] tau_max_ns must be a positive multiple "
                          "of tau_bin_ns")
    stream = tt.read_tags(args.file)
    try:
        events = tt.detect_events(stream, cycle, int(t["threshold"]))
    except ValueError as exc:  # file shorter than one cycle
        raise EmptyCondition(str(exc))
    res = tt.g2_correlation(stream, cycle, events, int(t["tau_max_ns"]),
                            tau_bin, smooth=t["smooth"])
    art.write_csv(os.path.join(out, "g2.csv"), ["tau_ns", "g2", "err"],
                  zip(res.tau_ns, res.g2, res.err))
    zero = int(np.argmin(np.abs(res.tau_ns)))
    ok = np.isfinite(res.g2)
    art.write_json(os.path.join(out, "g2.json"), {
        "g2_zero": float(res.g2[zero]),
        "g2_zero_err": float(res.err[zero]),
        "g2_max": float(res.g2[ok].max()) if ok.any() else None,
        "n_conditioned_windows": res.n_units,
        "tau_bin_ns": int(t["tau_bin_ns"]),
    })
    files = ["g2.csv", "g2.json"]
    if args.svg:
        art.svg_line(os.path.join(out, "g2.svg"), res.tau_ns,
                     {"g2": np.where(ok, res.g2, math.nan)},
                     "conditioned intensity correlation", "tau (ns)",
                     "g2", logy=False)
        files.append("g2.svg")
    return files


def cmd_tags_synth(cfg, args, out):
    t = cfg["tags"]
    cycle = build_cycle(cfg)
    seed = int(cfg["scan"]["seed"])
    n_cycles = int(t["synth_n_cycles"])
    if n_cycles < 1:
        raise ConfigError("[tags] synth_n_cycles: must be at least 1")
    if t["synth_kind"] == "poisson":
        duration = n_cycles * cycle.period * 1e-9
        a = tt.synth_poisson_stream(t["synth_rate_hz"] / 2.0, duration,
                                    2 * seed, channel=0)
        b = tt.synth_poisson_stream(t["synth_rate_hz"] / 2.0, duration,
                                    2 * seed + 1, channel=1)
        ch = np.concatenate([a.channels, b.channels])
        times = np.concatenate([a.times, b.times])
        order = np.argsort(times, kind="stable")
        stream = tt.TagStream(channels=ch[order], times=times[order])
    elif t["synth_kind"] == "emitter":
        stream = tt.synth_emitter_stream(build_emitter(cfg), cycle,
                                         n_cycles, seed)
    else:
        raise ConfigError("[tags] synth_kind: must be 'poisson' or "
                          "'emitter'")
    tt.write_tags(stream, os.path.join(out, "tags.bin"))
    art.write_json(os.path.join(out, "synth.json"), {
        "kind": t["synth_kind"], "n_cycles": n_cycles, "seed": seed,
        "n_tags": stream.n_tags,
    })
    return ["tags.bin", "synth.json"]


# --- entry point ---

def _add_common(sp):
    sp.add_argument("--config", default=None, help="TOML config file")
    sp.add_argument("--out", default="evtrap_out", help="output directory")
    sp.add_argument("--seed", type=int, default=None,
                    help="override the scan seed")
    sp.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: EVTRAP_THREADS or all)")
    sp.add_argument("--traj", type=int, default=None,
                    help="override trajectories per cell")
    sp.add_argument("--svg", action="store_true",
                    help="also write simple SVG plots")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="evtrap",
        description="trapping-potential, loading-dynamics, tunneling, "
                    "resonator and photon-correlation toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("potential",
                               help="trap profile and metrics"))
    _add_common(sub.add_parser("scan", help="loading phase diagram"))
    _add_common(sub.add_parser("tunneling",
                               help="escape times and survival"))

    res = sub.add_parser("resonator", help="transmission model or fit")
    rsub = res.add_subparsers(dest="subcommand", required=True)
    _add_common(rsub.add_parser("model", help="model spectrum + derived"))
    fit = rsub.add_parser("fit", help="fit a measured spectrum")
    fit.add_argument("file", help="CSV with delta_hz,transmission")
    _add_common(fit)

    tags = sub.add_parser("tags", help="photon time-tag analysis")
    tsub = tags.add_subparsers(dest="subcommand", required=True)
    for name, needs_file in (("analyze", True), ("g2", True),
                             ("synth", False)):
        p = tsub.add_parser(name)
        if needs_file:
            p.add_argument("file", help="tag file (.bin or .csv)")
        _add_common(p)
    return ap


_DISPATCH = {
    ("potential", None): cmd_potential,
    ("scan", None): cmd_scan,
    ("tunneling", None): cmd_tunneling,
    ("resonator", "model"): cmd_resonator_model,
    ("resonator", "fit"): cmd_resonator_fit,
    ("tags", "analyze"): cmd_tags_analyze,
    ("tags", "g2"): cmd_tags_g2,
    ("tags", "synth"): cmd_tags_synth,
}


def run(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    threads = _resolve_threads(args.threads)
    os.makedirs(args.out, exist_ok=True)
    cmd = _DISPATCH[(args.command, getattr(args, "subcommand", None))]
    files = cmd(cfg, args, args.out)
    name = args.command if getattr(args, "subcommand", None) is None \
        else f"{args.command} {args.subcommand}"
    art.write_manifest(args.out, name, cfg, int(cfg["scan"]["seed"]),
                       threads, files + ["manifest.json"])
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
