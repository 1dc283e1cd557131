"""Single-stroke-loading Monte-Carlo: trajectories, ensembles, phase diagrams.

An atom approaches the chip in the repelled hyperfine state F1; a single
spontaneous-Raman scattering event can drop it into F2, whose potential near
the surface is a trap.  Trajectories integrate the state-dependent potential
with quantum jumps at the local scattering rate and classify each atom as
Trapped, SurfaceHit or Reflected.  Scans over (detuning, saturation) or
(velocity, detuning) reproduce the loading phase diagrams.

Determinism contract: every trajectory draws from its own counter-based
stream keyed by (seed, cell index, trajectory index), and aggregation runs in
fixed index order, so identical seeds give identical results for any thread
count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from . import kernels as K
from .constants import HBAR, KB, Z95
from .errors import NoMinimum, StepTooLarge
from .potentials import F1, F2, Hyperfine, PotentialStack, \
    evanescent_potential, total_potential, trap_metrics, tweezer_potential
from .resonator import ResonatorParams, circulating_power, peak_intensity


class Outcome(IntEnum):
    TRAPPED = 0
    SURFACE_HIT = 1
    REFLECTED = 2


@dataclass(frozen=True)
class SimParams:
    """Integration, initial-condition and classification settings.

    x_start=None snaps the launch point to the standing-wave crest nearest
    2 um; the plane-wave tweezer surrogate keeps full lattice contrast at all
    distances, so a mid-lattice start would block slow atoms that a focused
    beam (whose contrast vanishes far out) lets through.  x_escape=None
    reuses the start position.  trap_region=None derives [x_contact,
    F2 outer barrier] per stack.
    """

    pulse_duration: float = 0.5e-3
    dt: float = 1e-9
    x_start: float | None = None
    x_escape: float | None = None
    v_mean: float = 0.3
    temperature: float = 30e-6
    n_traj: int = 300
    seed: int = 12345
    trapped_fraction_threshold: float = 0.5
    trap_region: tuple[float, float] | None = None
    include_back_scatter_to_f1: bool = False
    lightshift: str = "ground"
    excited_shift_scale: float = 0.0
    scattering: str = "physical"
    forced_rate: float = 0.0
    freeze_motion: bool = False
    double_recoil: bool = False
    record_stride: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.pulse_duration / self.dt < 1e3:
            raise ValueError("pulse_duration/dt must be at least 1e3")
        if not 0.0 < self.trapped_fraction_threshold <= 1.0:
            raise ValueError("trapped_fraction_threshold must be in (0, 1]")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.n_traj < 1:
            raise ValueError("n_traj must be at least 1")
        if self.lightshift not in ("ground", "none"):
            raise ValueError("lightshift must be 'ground' or 'none'")
        if self.scattering not in ("physical", "off", "forced"):
            raise ValueError("scattering must be physical, off or forced")

    @property
    def n_steps(self) -> int:
        return int(round(self.pulse_duration / self.dt))


def crest_position(stack: PotentialStack, near: float = 2e-6) -> float:
    """Standing-wave crest (potential maximum) closest to `near`."""
    tw = stack.tweezer
    k2 = 2.0 * tw.k
    n = round((k2 * near + tw.phi_refl - math.pi) / (2.0 * math.pi))
    return (math.pi - tw.phi_refl + 2.0 * math.pi * n) / k2


def scattering_rate(x, f_state: Hyperfine, stack: PotentialStack,
                    lightshift: str = "ground",
                    excited_shift_scale: float = 0.0):
    """Saturation-broadened photon scattering rate (1/s).

    rate = gamma_rate * s / (1 + s + (delta_eff/gamma)^2) with
    s(x) = I0 exp(-2x/Lambda)/I_sat and gamma_rate the half of the excited
    decay rate (the saturated limit).  With lightshift="ground" the effective
    detuning includes the ground-state optical shift, scaled toward zero by
    an excited shift equal to excited_shift_scale times the ground shift.
    """
    x = np.asarray(x, dtype=float)
    ev = stack.evanescent
    s = (ev.i0 / stack.atom.i_sat) * np.exp(-2.0 * x / ev.lambda_ev)
    gamma_ang = stack.atom.gamma_angular
    det = stack.detuning(f_state)
    if lightshift == "ground":
        u_opt = evanescent_potential(x, f_state, ev, stack.atom) \
            + tweezer_potential(x, stack.tweezer)
        det = det + (1.0 - excited_shift_scale) * u_opt / HBAR
    elif lightshift != "none":
        raise ValueError("lightshift must be 'ground' or 'none'")
    return gamma_ang * s / (1.0 + s + (det / gamma_ang) ** 2)


@dataclass(frozen=True)
class TrapRegion:
    """Per-cell F2 trap geometry used for classification and normalisation."""

    x_a: float
    x_b: float
    u_min: float
    depth: float
    destroyed: bool


def derive_trap_region(stack: PotentialStack) -> TrapRegion:
    """Trap region [x_contact, F2 outer barrier] and the binding depth.

    The depth is the lower of the surface-side barrier and the outer barrier
    height above the minimum.  A stack whose F2 well has been destroyed (no
    minimum, or zero depth) is flagged; its region is empty so no residency
    accumulates.
    """
    try:
        m = trap_metrics(stack, F2)
    except NoMinimum:
        return TrapRegion(x_a=0.0, x_b=0.0, u_min=math.nan, depth=0.0,
                          destroyed=True)
    u_out = float(total_potential(m.x_barrier_out, F2, stack))
    depth = min(m.barrier_to_surface, u_out - m.u_min)
    if depth <= 0.0:
        return TrapRegion(x_a=0.0, x_b=0.0, u_min=m.u_min, depth=0.0,
                          destroyed=True)
    return TrapRegion(x_a=stack.surface.x_contact, x_b=m.x_barrier_out,
                      u_min=m.u_min, depth=depth, destroyed=False)


def _phys_row(stack: PotentialStack, params: SimParams,
              region: TrapRegion) -> np.ndarray:
    p = np.zeros(K.NP_PHYS)
    atom, ev, tw = stack.atom, stack.evanescent, stack.tweezer
    p[K.P_I0] = ev.i0
    p[K.P_LAM] = ev.lambda_ev
    p[K.P_DET1] = stack.detuning(F1)
    p[K.P_DET2] = stack.detuning(F2)
    p[K.P_UINC] = tw.u_inc
    p[K.P_R] = tw.r_refl
    p[K.P_PHI] = tw.phi_refl
    p[K.P_K] = tw.k
    p[K.P_C3] = stack.surface.c3
    p[K.P_XC] = stack.surface.x_contact
    p[K.P_MASS] = atom.mass
    p[K.P_GRAV] = stack.gravity_accel if stack.include_gravity else 0.0
    p[K.P_GAMMA] = atom.gamma_angular
    p[K.P_ISAT] = atom.i_sat
    p[K.P_BR2] = atom.branch_to_f2
    p[K.P_VREC] = atom.recoil_velocity
    p[K.P_FRATE] = params.forced_rate
    p[K.P_EXSC] = params.excited_shift_scale
    p[K.P_DT] = params.dt
    x_start = params.x_start if params.x_start is not None \
        else crest_position(stack)
    x_escape = params.x_escape if params.x_escape is not None else x_start
    p[K.P_X0] = x_start
    p[K.P_XESC] = x_escape
    p[K.P_XA] = region.x_a
    p[K.P_XB] = region.x_b
    p[K.P_GUARD] = ev.lambda_ev / 10.0
    p[K.P_VMEAN] = params.v_mean
    p[K.P_SIGV] = math.sqrt(KB * params.temperature / atom.mass)
    p[K.P_V0] = 0.0
    return p


_RATE_MODES = {"physical": 0, "off": 1, "forced": 2}


def _flags(params: SimParams, f0: Hyperfine, sample_v: bool) -> np.ndarray:
    fl = np.zeros(K.NF_FLAGS, dtype=np.int64)
    fl[K.F_RATEMODE] = _RATE_MODES[params.scattering]
    fl[K.F_LSHIFT] = 1 if params.lightshift == "ground" else 0
    fl[K.F_BACK] = 1 if params.include_back_scatter_to_f1 else 0
    fl[K.F_FREEZE] = 1 if params.freeze_motion else 0
    fl[K.F_DOUBLE] = 1 if params.double_recoil else 0
    fl[K.F_NSTEPS] = params.n_steps
    fl[K.F_F0] = int(f0)
    fl[K.F_SAMPLEV] = 1 if sample_v else 0
    fl[K.F_STRIDE] = params.record_stride
    return fl


_CODE_OUTCOME = {1: Outcome.SURFACE_HIT, 2: Outcome.REFLECTED}


def classify_outcome(code: int, time_in_region: float,
                     params: SimParams) -> Outcome:
    """Map a termination code and residency onto the outcome label.

    Trapped requires surviving to pulse end with residency at or above the
    threshold fraction (inclusive); a pulse-end trajectory below threshold
    counts as Reflected.
    """
    if code == 3:
        raise StepTooLarge("trajectory step exceeded the resolution guard; "
                           "reduce dt")
    if code in _CODE_OUTCOME:
        return _CODE_OUTCOME[code]
    thr = params.trapped_fraction_threshold * params.pulse_duration
    return Outcome.TRAPPED if time_in_region >= thr else Outcome.REFLECTED


@dataclass(frozen=True)
class TrajectoryRecord:
    """One simulated trajectory with its sampled path and scatter log."""

    outcome: Outcome
    code: int
    t_end: float
    x_end: float
    v_end: float
    f_end: Hyperfine
    time_in_trap_region: float
    final_energy: float
    n_scatter: int
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    f: np.ndarray
    scatter_t: np.ndarray
    scatter_x: np.ndarray
    scatter_dest: np.ndarray
    scatter_sign: np.ndarray


def simulate_trajectory(stack: PotentialStack, params: SimParams,
                        init: tuple[float, float, Hyperfine] | None = None,
                        cell_index: int = 0, traj_index: int = 0,
                        region: TrapRegion | None = None
                        ) -> TrajectoryRecord:
    """Integrate a single trajectory.

    With init=None the start position and velocity follow the ensemble
    convention (crest start, sampled thermal velocity) using the stream keyed
    by (seed, cell_index, traj_index); an explicit init=(x0, v0, F) bypasses
    velocity sampling and consumes no draws for it.
    """
    if region is None:
        region = derive_trap_region(stack)
    p = _phys_row(stack, params, region)
    if init is not None:
        x0, v0, f0 = init
        p[K.P_X0] = x0
        p[K.P_V0] = v0
        fl = _flags(params, f0, sample_v=False)
    else:
        fl = _flags(params, F1, sample_v=True)

    stride = params.record_stride
    if stride > 0:
        cap = params.n_steps // stride + 2
        rec_step = np.zeros(cap, dtype=np.int64)
        rec_x = np.zeros(cap)
        rec_v = np.zeros(cap)
        rec_f = np.zeros(cap, dtype=np.int64)
    else:
        rec_step = np.empty(0, dtype=np.int64)
        rec_x = np.empty(0)
        rec_v = np.empty(0)
        rec_f = np.empty(0, dtype=np.int64)
    sc_cap = 4096
    sc_step = np.zeros(sc_cap, dtype=np.int64)
    sc_x = np.zeros(sc_cap)
    sc_dest = np.zeros(sc_cap, dtype=np.int64)
    sc_sign = np.zeros(sc_cap, dtype=np.int64)

    code, steps, x_end, v_end, f_end, region_steps, n_scat, n_rec = \
        K.simulate_one(p, fl, params.seed, cell_index, traj_index,
                       rec_step, rec_x, rec_v, rec_f,
                       sc_step, sc_x, sc_dest, sc_sign)
    time_in_region = region_steps * params.dt
    outcome = classify_outcome(code, time_in_region, params)
    u_ref = region.u_min if not region.destroyed else 0.0
    if math.isnan(u_ref):
        u_ref = 0.0
    if x_end > stack.surface.x_contact:
        e_final = 0.5 * stack.atom.mass * v_end ** 2 \
            + float(total_potential(x_end, Hyperfine(f_end), stack)) - u_ref
    else:
        e_final = math.nan
    n_sc = min(n_scat, sc_cap)
    return TrajectoryRecord(
        outcome=outcome, code=code, t_end=steps * params.dt, x_end=x_end,
        v_end=v_end, f_end=Hyperfine(f_end),
        time_in_trap_region=time_in_region, final_energy=e_final,
        n_scatter=n_scat,
        t=rec_step[:n_rec] * params.dt, x=rec_x[:n_rec].copy(),
        v=rec_v[:n_rec].copy(), f=rec_f[:n_rec].copy(),
        scatter_t=sc_step[:n_sc] * params.dt, scatter_x=sc_x[:n_sc].copy(),
        scatter_dest=sc_dest[:n_sc].copy(),
        scatter_sign=sc_sign[:n_sc].copy())


def wilson_halfwidth(k: int, n: int, z: float = Z95) -> float:
    """Half-width of the Wilson score interval for k successes of n."""
    if n <= 0:
        raise ValueError("n must be positive")
    p = k / n
    denom = 1.0 + z * z / n
    return (z / denom) * math.sqrt(p * (1.0 - p) / n
                                   + z * z / (4.0 * n * n))


@dataclass(frozen=True)
class EnsembleStats:
    """Aggregated outcome statistics of one grid cell."""

    n_traj: int
    n_trapped: int
    n_surface: int
    n_reflected: int
    trapped_fraction: float
    surface_fraction: float
    reflected_fraction: float
    wilson_trapped: float
    wilson_surface: float
    wilson_reflected: float
    mean_energy: float          # J relative to the F2 minimum; nan if none
    mean_energy_over_depth: float
    trap_depth: float           # J
    destroyed: bool
    mean_scatters: float


def _aggregate(codes, region_steps, energies, n_scat, params: SimParams,
               region: TrapRegion) -> EnsembleStats:
    n = codes.size
    thr_steps = params.trapped_fraction_threshold * params.n_steps
    trapped = (codes == 0) & (region_steps >= thr_steps)
    surface = codes == 1
    reflected = ~trapped & ~surface
    k_t, k_s, k_r = int(trapped.sum()), int(surface.sum()), \
        int(reflected.sum())
    if k_t:
        mean_e = float(energies[trapped].sum() / k_t)
        mean_ed = mean_e / region.depth if region.depth > 0 else math.nan
    else:
        mean_e = math.nan
        mean_ed = math.nan
    return EnsembleStats(
        n_traj=n, n_trapped=k_t, n_surface=k_s, n_reflected=k_r,
        trapped_fraction=k_t / n, surface_fraction=k_s / n,
        reflected_fraction=k_r / n,
        wilson_trapped=wilson_halfwidth(k_t, n),
        wilson_surface=wilson_halfwidth(k_s, n),
        wilson_reflected=wilson_halfwidth(k_r, n),
        mean_energy=mean_e, mean_energy_over_depth=mean_ed,
        trap_depth=region.depth, destroyed=region.destroyed,
        mean_scatters=float(n_scat.sum()) / n)


def _run_cells(stacks, regions, cell_ids, params: SimParams,
               collect_failures: bool = False):
    """Run the batch kernel over prepared cells and aggregate per cell.

    With collect_failures the entry for any cell whose ensemble tripped the
    step guard is None instead of raising, so the caller can rerun those
    cells at a finer dt.
    """
    n_cells = len(stacks)
    phys = np.empty((n_cells, K.NP_PHYS))
    for i, (st, rg) in enumerate(zip(stacks, regions)):
        phys[i] = _phys_row(st, params, rg)
    fl = _flags(params, F1, sample_v=True)
    n = params.n_traj
    ntot = n_cells * n
    out_code = np.empty(ntot, dtype=np.int64)
    out_steps = np.empty(ntot, dtype=np.int64)
    out_x = np.empty(ntot)
    out_v = np.empty(ntot)
    out_f = np.empty(ntot, dtype=np.int64)
    out_region = np.empty(ntot, dtype=np.int64)
    out_nscat = np.empty(ntot, dtype=np.int64)
    K.simulate_batch(phys, fl, params.seed,
                     np.asarray(cell_ids, dtype=np.int64), n,
                     out_code, out_steps, out_x, out_v, out_f,
                     out_region, out_nscat)
    guard_hit = (out_code == 3).reshape(n_cells, n).any(axis=1)
    if guard_hit.any() and not collect_failures:
        bad = int(np.argmax(out_code == 3))
        raise StepTooLarge(
            f"step guard tripped in cell {cell_ids[bad // n]}, trajectory "
            f"{bad % n}; reduce dt")
    stats = []
    for i, (st, rg) in enumerate(zip(stacks, regions)):
        if guard_hit[i]:
            stats.append(None)
            continue
        sl = slice(i * n, (i + 1) * n)
        u_ref = rg.u_min if not rg.destroyed and not math.isnan(rg.u_min) \
            else 0.0
        # only pulse-end survivors need energies; terminated trajectories
        # can end below the contact radius where the potential is undefined
        u_end = np.full(n, math.nan)
        for fs in (1, 2):
            mask = (out_f[sl] == fs) & (out_code[sl] == 0)
            if mask.any():
                u_end[mask] = total_potential(out_x[sl][mask],
                                              Hyperfine(fs), st)
        energies = 0.5 * st.atom.mass * out_v[sl] ** 2 + u_end - u_ref
        stats.append(_aggregate(out_code[sl], out_region[sl], energies,
                                out_nscat[sl], params, rg))
    return stats


def _run_cells_refined(stacks, regions, cell_ids, params: SimParams,
                       max_refine: int = 6):
    """Run cells, halving dt for any cell that trips the step guard.

    The guard marks cells whose dynamics outrun the base step (ejection
    through a steep near-surface slope converts GHz-scale potential into
    m/s-scale speed); those cells rerun at dt/2, dt/4, ... until clean.
    Refinement depends only on (seed, cell, physics), so results stay
    bit-identical across worker counts.  Returns (stats, dt_per_cell_s).
    """
    stats = _run_cells(stacks, regions, cell_ids, params,
                       collect_failures=True)
    dt_eff = [params.dt] * len(stacks)
    pending = [i for i, s in enumerate(stats) if s is None]
    level = 0
    while pending and level < max_refine:
        level += 1
        p_fine = replace(params, dt=params.dt / 2 ** level)
        redo = _run_cells([stacks[i] for i in pending],
                          [regions[i] for i in pending],
                          [cell_ids[i] for i in pending],
                          p_fine, collect_failures=True)
        still = []
        for i, s in zip(pending, redo):
            if s is None:
                still.append(i)
            else:
                stats[i] = s
                dt_eff[i] = p_fine.dt
        pending = still
    if pending:
        raise StepTooLarge(
            f"step guard still tripping in cell {cell_ids[pending[0]]} "
            f"after {max_refine} dt halvings")
    return stats, dt_eff


def run_ensemble(stack: PotentialStack, params: SimParams,
                 cell_index: int = 0) -> EnsembleStats:
    """Simulate one ensemble (one phase-diagram cell)."""
    region = derive_trap_region(stack)
    return _run_cells([stack], [region], [cell_index], params)[0]


@dataclass(frozen=True)
class PhaseDiagram:
    """Cell statistics over a 2-d parameter grid.

    kind is "detuning_saturation" (rows: saturation, columns: detuning) or
    "velocity_detuning" (rows: velocity, columns: detuning).  All cell arrays
    are indexed [row, column].
    """

    kind: str
    rows: np.ndarray
    cols: np.ndarray
    trapped: np.ndarray
    surface: np.ndarray
    reflected: np.ndarray
    wilson_trapped: np.ndarray
    wilson_surface: np.ndarray
    wilson_reflected: np.ndarray
    mean_energy_over_depth: np.ndarray
    trap_depth: np.ndarray
    destroyed: np.ndarray
    dt_ns: np.ndarray
    counts: int
    seed: int
    fixed: dict = field(default_factory=dict)

    @property
    def row_label(self) -> str:
        return "saturation" if self.kind == "detuning_saturation" \
            else "v_mean_m_s"


def _diagram_from_stats(kind, rows, cols, stats, dt_eff, params, fixed):
    nr, nc = len(rows), len(cols)

    def grid(getter):
        return np.array([getter(s) for s in stats]).reshape(nr, nc)

    return PhaseDiagram(
        kind=kind, rows=np.asarray(rows, dtype=float),
        cols=np.asarray(cols, dtype=float),
        trapped=grid(lambda s: s.trapped_fraction),
        surface=grid(lambda s: s.surface_fraction),
        reflected=grid(lambda s: s.reflected_fraction),
        wilson_trapped=grid(lambda s: s.wilson_trapped),
        wilson_surface=grid(lambda s: s.wilson_surface),
        wilson_reflected=grid(lambda s: s.wilson_reflected),
        mean_energy_over_depth=grid(lambda s: s.mean_energy_over_depth),
        trap_depth=grid(lambda s: s.trap_depth),
        destroyed=grid(lambda s: s.destroyed).astype(bool),
        dt_ns=np.asarray(dt_eff, dtype=float).reshape(nr, nc) * 1e9,
        counts=params.n_traj, seed=params.seed, fixed=dict(fixed))


def stack_with_saturation(stack: PotentialStack, saturation: float,
                          detuning_f1: float) -> PotentialStack:
    """Template stack with the evanescent field set from (s0, detuning)."""
    ev = replace(stack.evanescent, i0=saturation * stack.atom.i_sat,
                 detuning_f1=detuning_f1)
    return replace(stack, evanescent=ev)


def scan_detuning_intensity(stack: PotentialStack, params: SimParams,
                            detunings_hz, saturations) -> PhaseDiagram:
    """Phase diagram over loading detuning (columns) and saturation (rows).

    detunings_hz are ordinary frequencies of the F1 detuning; saturations are
    peak s0 = I0/I_sat values.  Cell ids run row-major so the RNG stream
    assignment is part of the grid definition.
    """
    detunings_hz = np.asarray(detunings_hz, dtype=float)
    saturations = np.asarray(saturations, dtype=float)
    if detunings_hz.size == 0 or saturations.size == 0:
        raise ValueError("grids must be non-empty")
    stacks, regions, ids = [], [], []
    for i, s0 in enumerate(saturations):
        for j, det in enumerate(detunings_hz):
            st = stack_with_saturation(stack, s0, 2.0 * math.pi * det)
            stacks.append(st)
            regions.append(derive_trap_region(st))
            ids.append(i * detunings_hz.size + j)
    stats, dt_eff = _run_cells_refined(stacks, regions, ids, params)
    return _diagram_from_stats("detuning_saturation", saturations,
                               detunings_hz, stats, dt_eff, params, {})


def scan_velocity_detuning(stack: PotentialStack, params: SimParams,
                           v_means, detunings_hz,
                           saturation: float) -> PhaseDiagram:
    """Phase diagram over mean incoming velocity (rows) and detuning."""
    v_means = np.asarray(v_means, dtype=float)
    detunings_hz = np.asarray(detunings_hz, dtype=float)
    if v_means.size == 0 or detunings_hz.size == 0:
        raise ValueError("grids must be non-empty")
    stacks, regions = [], []
    for det in detunings_hz:
        st = stack_with_saturation(stack, saturation, 2.0 * math.pi * det)
        stacks.append(st)
        regions.append(derive_trap_region(st))
    all_stats, all_dt = [], []
    for i, v in enumerate(v_means):
        p_v = replace(params, v_mean=float(v))
        ids = [i * detunings_hz.size + j for j in range(detunings_hz.size)]
        row_stats, row_dt = _run_cells_refined(stacks, regions, ids, p_v)
        all_stats.extend(row_stats)
        all_dt.extend(row_dt)
    return _diagram_from_stats("velocity_detuning", v_means, detunings_hz,
                               all_stats, all_dt, params,
                               {"saturation": float(saturation)})


@dataclass(frozen=True)
class PowerChain:
    """Input power converted through the resonator to a saturation value."""

    p_circ: float
    i0: float
    saturation: float


def power_to_saturation(p_in: float, detuning: float, res: ResonatorParams,
                        i_sat: float = 25.0,
                        input_loss: float = 0.5) -> PowerChain:
    """Saturation parameter reached by p_in after the resonator build-up.

    detuning is the drive offset from resonance in angular units (rad/s);
    the Lorentzian roll-off uses ordinary frequencies internally.
    """
    p_circ = circulating_power(p_in, detuning / (2.0 * math.pi), res,
                               input_loss)
    i0 = peak_intensity(p_circ, res)
    return PowerChain(p_circ=p_circ, i0=i0, saturation=i0 / i_sat)
