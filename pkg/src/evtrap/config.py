"""TOML configuration: defaults, validation, and object builders.

One file with sections [atom] [potential] [scan] [tunneling] [resonator]
[tags]; every key has a default matching the published operating point, so
an empty config is a valid run.  Unknown keys and type mismatches raise
ConfigError naming the offending section.key.
"""

from __future__ import annotations

import copy
import math

import numpy as np

try:
    import tomllib as _toml
except ModuleNotFoundError:
    import tomli as _toml

from .constants import ATOMIC_MASS, PLANCK
from .errors import ConfigError
from .potentials import (AtomSpecies, EvanescentField, PotentialStack,
                         SurfaceModel, TweezerField, calibrate_tweezer)
from .resonator import ResonatorParams
from .sslmc import SimParams
from .timetag import CycleSpec, EmitterParams

# tweezer amplitude/phase fitted once so the dark F2 trap sits at
# x_min = 180 nm with freq_x = 650 kHz at r = 0.5 (see calibrate_tweezer)
CALIBRATED_U_INC_HZ = 16293046.248879872
CALIBRATED_PHI_REFL = 3.5637600919989274

DEFAULTS: dict = {
    "atom": {
        "mass_amu": 86.909180527,
        "gamma_hz": 3.03e6,
        "i_sat": 25.0,
        "hyperfine_splitting_hz": 6.8e9,
        "wavelength_m": 780.241209686e-9,
        "branch_to_f2": 0.25,
    },
    "potential": {
        "tweezer_wavelength_m": 835e-9,
        "r_refl": 0.5,
        "u_inc_hz": CALIBRATED_U_INC_HZ,
        "phi_refl": CALIBRATED_PHI_REFL,
        "calibrate": False,
        "x_min_target_m": 180e-9,
        "freq_x_target_hz": 650e3,
        "c3_hz_um3": 900.0,
        "x_contact_m": 5e-9,
        "include_gravity": True,
        "lambda_ev_m": 86e-9,
        "saturation": 0.0,
        "detuning_mhz": 250.0,
        "profile_x_max_m": 1.0e-6,
        "profile_points": 1000,
        "wavelength_sweep_nm": [],
    },
    "scan": {
        "kind": "detuning_saturation",
        "detuning_mhz": [0.0, 400.0, 21],
        "saturation": [1e3, 1e8, 21],
        "velocity": [0.05, 0.85, 9],
        "fixed_saturation": 2e5,
        "n_traj": 300,
        "seed": 12345,
        "v_mean": 0.3,
        "temperature_uk": 30.0,
        "pulse_ms": 0.5,
        "dt_ns": 1.0,
        "threshold": 0.5,
        "lightshift": "ground",
        "back_scatter": False,
        "double_recoil": False,
    },
    "tunneling": {
        "delta_e_mhz": [-5.0, -1.0, 100],
        "wavelengths_nm": [835.0],
        "saturation": 0.0,
        "detuning_mhz": 250.0,
        "survival_tau_s": [1e-4, 10.0, 60],
        "survival_delta_e_mhz": [-5.0, -4.5, -4.0, -3.5, -3.0, -2.5, -2.0,
                                 -1.5, -1.0],
        "survival_weights": [],
    },
    "resonator": {
        "kappa_ex_ghz": 1.15,
        "kappa_i_ghz": 1.16,
        "h_ghz": 1.08,
        "fsr_thz": 1.36,
        "lambda_ev_nm": 86.0,
        "mode_area_nm2": [400.0, 450.0],
        "input_loss": 0.5,
        "p_in_nw": 400.0,
        "detuning_ghz": 6.8,
        "tau_free_ns": 26.2,
        "zeeman_floor": 0.816,
        "g0_max_mhz": 0.0,
        "model_delta_ghz": [-15.0, 15.0, 1201],
    },
    "tags": {
        "period_ms": 20.0,
        "pulse_period_ms": 2.5,
        "n_pulses": 8,
        "exc_offset_ms": 0.5,
        "exc_duration_ms": 2.0,
        "detect_us": 500.0,
        "n_pulses_used": 8,
        "threshold": 2,
        "fold_bin_us": 10.0,
        "tau_max_ns": 3000,
        "tau_bin_ns": 12,
        "smooth": False,
        "synth_kind": "emitter",
        "synth_rate_hz": 40e3,
        "synth_n_cycles": 160,
        "excitation_rate_hz": 2.0e6,
        "lifetime_ns": 26.0,
        "mod_freq_hz": 635e3,
        "mod_depth": 2.0,
        "detection_eff": 0.2,
        "decay_enabled": False,
        "decay_period_ns": 100,
        "decay_bin_ns": 1,
        "decay_fit_start_ns": 10.0,
    },
}

_SCALARS = (bool, int, float, str)


def _check_types(section: str, defaults: dict, values: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in values.items():
        if key not in defaults:
            raise ConfigError(f"[{section}] unknown key '{key}'")
        ref = defaults[key]
        if isinstance(ref, bool):
            if not isinstance(val, bool):
                raise ConfigError(f"[{section}] {key}: expected boolean")
        elif isinstance(ref, (int, float)):
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"[{section}] {key}: expected number")
        elif isinstance(ref, str):
            if not isinstance(val, str):
                raise ConfigError(f"[{section}] {key}: expected string")
        elif isinstance(ref, list):
            if not isinstance(val, list) or any(
                    isinstance(v, bool) or not isinstance(v, (int, float))
                    for v in val):
                raise ConfigError(f"[{section}] {key}: expected number list")
        out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | None) -> dict:
    """Read a TOML file merged over the defaults; None gives pure defaults."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                raw = _toml.load(f)
        except _toml.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
    cfg = {}
    for section, defaults in DEFAULTS.items():
        sub = raw.pop(section, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"[{section}] must be a table")
        cfg[section] = _check_types(section, defaults, sub)
    if raw:
        raise ConfigError(f"unknown config section '{next(iter(raw))}'")
    return cfg


def _grid3(section: str, key: str, spec, log: bool = False,
           integer_n: bool = True):
    if len(spec) != 3:
        raise ConfigError(f"[{section}] {key}: expected [start, stop, n]")
    start, stop, n = spec
    if integer_n and (n != int(n) or int(n) < 1):
        raise ConfigError(f"[{section}] {key}: n must be a positive integer")
    n = int(n)
    if log:
        if start <= 0 or stop <= 0:
            raise ConfigError(f"[{section}] {key}: log grid needs positive "
                              "endpoints")
        return np.logspace(math.log10(start), math.log10(stop), n)
    return np.linspace(start, stop, n)


def build_atom(cfg: dict) -> AtomSpecies:
    a = cfg["atom"]
    for key in ("mass_amu", "gamma_hz", "i_sat", "hyperfine_splitting_hz",
                "wavelength_m"):
        if a[key] <= 0:
            raise ConfigError(f"[atom] {key}: must be positive")
    if not 0.0 <= a["branch_to_f2"] <= 1.0:
        raise ConfigError("[atom] branch_to_f2: must be in [0, 1]")
    return AtomSpecies(
        mass=a["mass_amu"] * ATOMIC_MASS,
        gamma=a["gamma_hz"],
        i_sat=a["i_sat"],
        hyperfine_splitting=a["hyperfine_splitting_hz"],
        wavelength=a["wavelength_m"],
        branch_to_f1=1.0 - a["branch_to_f2"],
        branch_to_f2=a["branch_to_f2"],
    )


def build_stack(cfg: dict, wavelength_m: float | None = None,
                saturation: float | None = None,
                detuning_mhz: float | None = None) -> PotentialStack:
    """Assemble the potential stack; optional arguments override [potential].

    With calibrate=true the tweezer amplitude and phase are refit to the
    configured trap targets; otherwise the stored values are used as-is.
    """
    p = cfg["potential"]
    atom = build_atom(cfg)
    if p["r_refl"] < 0 or p["r_refl"] > 1:
        raise ConfigError("[potential] r_refl: must be in [0, 1]")
    if p["x_contact_m"] <= 0:
        raise ConfigError("[potential] x_contact_m: must be positive")
    if p["lambda_ev_m"] <= 0:
        raise ConfigError("[potential] lambda_ev_m: must be positive")
    sat = p["saturation"] if saturation is None else saturation
    if sat < 0:
        raise ConfigError("[potential] saturation: must be non-negative")
    det = p["detuning_mhz"] if detuning_mhz is None else detuning_mhz
    lam = p["tweezer_wavelength_m"] if wavelength_m is None else wavelength_m
    if lam <= 0:
        raise ConfigError("[potential] tweezer_wavelength_m: must be "
                          "positive")
    stack = PotentialStack(
        atom=atom,
        evanescent=EvanescentField(
            i0=sat * atom.i_sat,
            detuning_f1=2.0 * math.pi * det * 1e6,
            lambda_ev=p["lambda_ev_m"]),
        tweezer=TweezerField(
            u_inc=p["u_inc_hz"] * PLANCK,
            r_refl=p["r_refl"],
            phi_refl=p["phi_refl"],
            wavelength=lam),
        surface=SurfaceModel(
            c3=p["c3_hz_um3"] * PLANCK * 1e-18,
            x_contact=p["x_contact_m"]),
        include_gravity=p["include_gravity"],
    )
    if p["calibrate"]:
        cal = calibrate_tweezer(stack, x_min_target=p["x_min_target_m"],
                                freq_x_target=p["freq_x_target_hz"])
        stack = cal.stack
    return stack


def build_sim_params(cfg: dict, n_traj: int | None = None,
                     seed: int | None = None) -> SimParams:
    s = cfg["scan"]
    if s["lightshift"] not in ("ground", "none"):
        raise ConfigError("[scan] lightshift: must be 'ground' or 'none'")
    n = s["n_traj"] if n_traj is None else n_traj
    if n != int(n) or int(n) < 1:
        raise ConfigError("[scan] n_traj: must be a positive integer")
    if s["pulse_ms"] <= 0 or s["dt_ns"] <= 0:
        raise ConfigError("[scan] pulse_ms and dt_ns must be positive")
    if not 0.0 < s["threshold"] <= 1.0:
        raise ConfigError("[scan] threshold: must be in (0, 1]")
    try:
        return SimParams(
            pulse_duration=s["pulse_ms"] * 1e-3,
            dt=s["dt_ns"] * 1e-9,
            v_mean=s["v_mean"],
            temperature=s["temperature_uk"] * 1e-6,
            n_traj=int(n),
            seed=int(s["seed"] if seed is None else seed),
            trapped_fraction_threshold=s["threshold"],
            include_back_scatter_to_f1=s["back_scatter"],
            lightshift=s["lightshift"],
            double_recoil=s["double_recoil"],
        )
    except ValueError as exc:
        raise ConfigError(f"[scan] {exc}")


def scan_grids(cfg: dict):
    """(detunings Hz, saturations, velocities) arrays from [scan]."""
    s = cfg["scan"]
    det = _grid3("scan", "detuning_mhz", s["detuning_mhz"]) * 1e6
    sat = _grid3("scan", "saturation", s["saturation"], log=True)
    vel = _grid3("scan", "velocity", s["velocity"])
    if det.size == 0 or sat.size == 0 or vel.size == 0:
        raise ConfigError("[scan] grids must be non-empty")
    return det, sat, vel


def build_resonator(cfg: dict) -> ResonatorParams:
    r = cfg["resonator"]
    if r["kappa_ex_ghz"] < 0:
        raise ConfigError("[resonator] kappa_ex_ghz: must be non-negative")
    for key in ("kappa_i_ghz", "fsr_thz", "tau_free_ns"):
        if r[key] <= 0:
            raise ConfigError(f"[resonator] {key}: must be positive")
    if r["h_ghz"] < 0 or r["g0_max_mhz"] < 0:
        raise ConfigError("[resonator] rates must be non-negative")
    if not 0.0 < r["zeeman_floor"] <= 1.0:
        raise ConfigError("[resonator] zeeman_floor: must be in (0, 1]")
    if not 0.0 < r["input_loss"] <= 1.0:
        raise ConfigError("[resonator] input_loss: must be in (0, 1]")
    area = r["mode_area_nm2"]
    if len(area) != 2 or area[0] <= 0 or area[1] <= 0:
        raise ConfigError("[resonator] mode_area_nm2: expected two positive "
                          "extents")
    return ResonatorParams(
        kappa_ex=r["kappa_ex_ghz"] * 1e9,
        kappa_i=r["kappa_i_ghz"] * 1e9,
        h_backscatter=r["h_ghz"] * 1e9,
        fsr=r["fsr_thz"] * 1e12,
        mode_area=area[0] * 1e-9 * area[1] * 1e-9,
        lambda_ev=r["lambda_ev_nm"] * 1e-9,
        g0_max=r["g0_max_mhz"] * 1e6,
        zeeman_floor=r["zeeman_floor"],
    )


def build_cycle(cfg: dict) -> CycleSpec:
    t = cfg["tags"]
    try:
        return CycleSpec(
            period=int(round(t["period_ms"] * 1e6)),
            pulse_period=int(round(t["pulse_period_ms"] * 1e6)),
            n_pulses=int(t["n_pulses"]),
            exc_offset=int(round(t["exc_offset_ms"] * 1e6)),
            exc_duration=int(round(t["exc_duration_ms"] * 1e6)),
            detect_ns=int(round(t["detect_us"] * 1e3)),
            n_pulses_used=int(t["n_pulses_used"]),
        )
    except ValueError as exc:
        raise ConfigError(f"[tags] {exc}")


def build_emitter(cfg: dict) -> EmitterParams:
    t = cfg["tags"]
    try:
        return EmitterParams(
            excitation_rate=t["excitation_rate_hz"],
            lifetime=t["lifetime_ns"] * 1e-9,
            mod_freq=t["mod_freq_hz"],
            mod_depth=t["mod_depth"],
            detection_eff=t["detection_eff"],
        )
    except ValueError as exc:
        raise ConfigError(f"[tags] {exc}")
