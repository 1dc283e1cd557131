"""Compiled trajectory kernels for the loading Monte-Carlo.

The integrator is velocity Verlet (kick-drift-kick leapfrog) over the
state-dependent total potential, with quantum jumps sampled per step from the
local scattering rate.  Every trajectory owns a counter-based splitmix64
random stream keyed by (seed, cell index, trajectory index), so results are
bit-identical for any thread count or execution order.

Scalar cell parameters travel in a flat float64 vector (indices P_*) and the
shared integer switches in an int64 vector (indices F_*); this keeps the
kernel signatures stable and numba-friendly.  Termination codes: 0 pulse end,
1 surface contact, 2 escaped outward, 3 step-size guard tripped.
"""

import math

import numba as nb
import numpy as np

from .constants import HBAR

# parameter vector layout (per cell)
P_I0 = 0        # peak evanescent intensity W/m^2
P_LAM = 1       # evanescent decay length m
P_DET1 = 2      # angular detuning of F1 rad/s
P_DET2 = 3      # angular detuning of F2 rad/s
P_UINC = 4      # tweezer incident depth J
P_R = 5         # tweezer reflection amplitude
P_PHI = 6       # tweezer reflection phase rad
P_K = 7         # tweezer wavenumber rad/m
P_C3 = 8        # Casimir-Polder coefficient J m^3
P_XC = 9        # contact radius m
P_MASS = 10     # atom mass kg
P_GRAV = 11     # gravitational acceleration (0 when disabled)
P_GAMMA = 12    # half linewidth, angular rad/s
P_ISAT = 13     # saturation intensity W/m^2
P_BR2 = 14      # branching probability into F2
P_VREC = 15     # recoil speed m/s
P_FRATE = 16    # forced scattering rate 1/s
P_EXSC = 17     # excited-state shift scale
P_DT = 18       # time step s
P_XESC = 19     # escape boundary m
P_XA = 20       # trap region lower edge m
P_XB = 21       # trap region upper edge m
P_GUARD = 22    # max |dx| per step m
P_X0 = 23       # start position m
P_VMEAN = 24    # mean inward speed m/s
P_SIGV = 25     # thermal speed spread m/s
P_V0 = 26       # explicit initial velocity m/s
NP_PHYS = 27

# flag vector layout (shared per batch)
F_RATEMODE = 0  # 0 physical, 1 off, 2 forced
F_LSHIFT = 1    # 0 none, 1 ground-state shift in the effective detuning
F_BACK = 2      # 1 enables off-resonant scattering out of F2
F_FREEZE = 3    # 1 freezes motion (jump statistics tests)
F_DOUBLE = 4    # 1 applies two recoil kicks per scatter
F_NSTEPS = 5    # total integration steps
F_F0 = 6        # initial hyperfine state (1 or 2)
F_SAMPLEV = 7   # 1 draws v0 from the stream, 0 uses P_V0
F_STRIDE = 8    # record every n-th step (0 disables)
NF_FLAGS = 9

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(nb.uint64(nb.uint64), cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> _U30)) * _MIX1
    z = (z ^ (z >> _U27)) * _MIX2
    return z ^ (z >> _U31)


@nb.njit(nb.uint64(nb.uint64, nb.uint64, nb.uint64), cache=True)
def stream_state(seed, cell, traj):
    """Initial counter of the (seed, cell, traj) random stream."""
    s = _mix(seed + _GOLD)
    s = _mix(s ^ _mix(cell + _GOLD))
    return _mix(s ^ _mix(traj + _GOLD))


@nb.njit(nb.float64(nb.uint64), cache=True, inline="always")
def _unit(z):
    # uniform in [0, 1) from the top 53 bits
    return float(z >> _U11) * _INV53


@nb.njit(cache=True, inline="always")
def _u_total(x, f, p):
    det = p[P_DET1] if f == 1 else p[P_DET2]
    ga = p[P_GAMMA]
    ev = 0.5 * HBAR * det / (1.0 + (det / ga) ** 2) \
        * (p[P_I0] / p[P_ISAT]) * math.exp(-2.0 * x / p[P_LAM])
    r = p[P_R]
    tw = -p[P_UINC] * (1.0 + r * r
                       + 2.0 * r * math.cos(2.0 * p[P_K] * x + p[P_PHI]))
    cp = -p[P_C3] / (x * x * x)
    gr = -p[P_MASS] * p[P_GRAV] * x
    return ev + tw + cp + gr


@nb.njit(cache=True, inline="always")
def _u_optical(x, f, p):
    # light-shift terms only (no surface or gravity), for the effective
    # detuning entering the scattering rate
    det = p[P_DET1] if f == 1 else p[P_DET2]
    ga = p[P_GAMMA]
    ev = 0.5 * HBAR * det / (1.0 + (det / ga) ** 2) \
        * (p[P_I0] / p[P_ISAT]) * math.exp(-2.0 * x / p[P_LAM])
    r = p[P_R]
    tw = -p[P_UINC] * (1.0 + r * r
                       + 2.0 * r * math.cos(2.0 * p[P_K] * x + p[P_PHI]))
    return ev + tw


@nb.njit(cache=True, inline="always")
def _accel(x, f, p):
    det = p[P_DET1] if f == 1 else p[P_DET2]
    ga = p[P_GAMMA]
    ev = 0.5 * HBAR * det / (1.0 + (det / ga) ** 2) \
        * (p[P_I0] / p[P_ISAT]) * math.exp(-2.0 * x / p[P_LAM])
    d_ev = ev * (-2.0 / p[P_LAM])
    d_tw = 4.0 * p[P_UINC] * p[P_R] * p[P_K] \
        * math.sin(2.0 * p[P_K] * x + p[P_PHI])
    d_cp = 3.0 * p[P_C3] / (x * x * x * x)
    d_g = -p[P_MASS] * p[P_GRAV]
    return -(d_ev + d_tw + d_cp + d_g) / p[P_MASS]


@nb.njit(cache=True, inline="always")
def _rate(x, f, p, lshift):
    """Photon scattering rate; saturates at the half decay rate gamma."""
    s = (p[P_I0] / p[P_ISAT]) * math.exp(-2.0 * x / p[P_LAM])
    if s <= 0.0:
        return 0.0
    det = p[P_DET1] if f == 1 else p[P_DET2]
    if lshift == 1:
        shift = (1.0 - p[P_EXSC]) * _u_optical(x, f, p) / HBAR
        det = det + shift
    ga = p[P_GAMMA]
    return ga * s / (1.0 + s + (det / ga) ** 2)


@nb.njit(cache=True)
def simulate_one(p, flags, seed, cell_idx, traj_idx,
                 rec_step, rec_x, rec_v, rec_f,
                 sc_step, sc_x, sc_dest, sc_sign):
    """Integrate one trajectory; returns its terminal summary.

    Returns (code, steps_done, x, v, f, region_steps, n_scatter, n_recorded).
    Recording and scatter-event buffers may be zero length to disable them.
    """
    c = stream_state(np.uint64(seed), np.uint64(cell_idx),
                     np.uint64(traj_idx))
    dt = p[P_DT]
    x = p[P_X0]
    f = int(flags[F_F0])
    n_steps = flags[F_NSTEPS]
    stride = flags[F_STRIDE]
    freeze = flags[F_FREEZE] == 1
    rmode = flags[F_RATEMODE]
    lshift = flags[F_LSHIFT]
    back = flags[F_BACK] == 1
    double_kick = flags[F_DOUBLE] == 1

    if flags[F_SAMPLEV] == 1:
        c += _GOLD
        u1 = _unit(_mix(c))
        c += _GOLD
        u2 = _unit(_mix(c))
        z = math.sqrt(-2.0 * math.log(1.0 - u1)) \
            * math.cos(2.0 * math.pi * u2)
        v = -(p[P_VMEAN] + z * p[P_SIGV])
    else:
        v = p[P_V0]

    a = 0.0 if freeze else _accel(x, f, p)
    code = 0
    region_steps = 0
    n_scat = 0
    n_rec = 0
    if stride > 0 and rec_step.size > 0:
        rec_step[0] = 0
        rec_x[0] = x
        rec_v[0] = v
        rec_f[0] = f
        n_rec = 1
    steps_done = 0

    for step in range(n_steps):
        steps_done = step + 1
        if not freeze:
            vh = v + 0.5 * dt * a
            xn = x + dt * vh
            dx = xn - x
            x = xn
            if x <= p[P_XC]:
                code = 1
                v = vh
                break
            if abs(dx) > p[P_GUARD]:
                code = 3
                v = vh
                break
            a = _accel(x, f, p)
            v = vh + 0.5 * dt * a
            if x >= p[P_XESC] and v > 0.0:
                code = 2
                break
        if p[P_XA] <= x <= p[P_XB]:
            region_steps += 1
        if rmode != 1:
            if rmode == 2:
                rate = p[P_FRATE]
            elif f == 1:
                rate = _rate(x, 1, p, lshift)
            elif back:
                rate = _rate(x, 2, p, lshift)
            else:
                rate = 0.0
            if rate > 0.0:
                pj = 1.0 - math.exp(-rate * dt)
                c += _GOLD
                if _unit(_mix(c)) < pj:
                    c += _GOLD
                    dest = 2 if _unit(_mix(c)) < p[P_BR2] else 1
                    c += _GOLD
                    kick = p[P_VREC] if _unit(_mix(c)) < 0.5 else -p[P_VREC]
                    v += kick
                    if double_kick:
                        c += _GOLD
                        v += p[P_VREC] if _unit(_mix(c)) < 0.5 \
                            else -p[P_VREC]
                    f = dest
                    if not freeze:
                        a = _accel(x, f, p)
                    if n_scat < sc_step.size:
                        sc_step[n_scat] = steps_done
                        sc_x[n_scat] = x
                        sc_dest[n_scat] = dest
                        sc_sign[n_scat] = 1 if kick > 0.0 else -1
                    n_scat += 1
        if stride > 0 and steps_done % stride == 0 and n_rec < rec_step.size:
            rec_step[n_rec] = steps_done
            rec_x[n_rec] = x
            rec_v[n_rec] = v
            rec_f[n_rec] = f
            n_rec += 1

    return code, steps_done, x, v, f, region_steps, n_scat, n_rec


@nb.njit(cache=True, parallel=True)
def simulate_batch(phys, flags, seed, cell_ids, n_traj,
                   out_code, out_steps, out_x, out_v, out_f,
                   out_region, out_nscat):
    """Run n_traj trajectories for every parameter row, in parallel.

    phys is (n_cells, NP_PHYS); outputs are flat arrays of length
    n_cells * n_traj indexed cell-major.  Work items are independent, so the
    schedule cannot affect results.
    """
    n_cells = phys.shape[0]
    empty_i = np.empty(0, np.int64)
    empty_f = np.empty(0, np.float64)
    for idx in nb.prange(n_cells * n_traj):
        ci = idx // n_traj
        tj = idx - ci * n_traj
        res = simulate_one(phys[ci], flags, seed, cell_ids[ci], tj,
                           empty_i, empty_f, empty_f, empty_i,
                           empty_i, empty_f, empty_i, empty_i)
        out_code[idx] = res[0]
        out_steps[idx] = res[1]
        out_x[idx] = res[2]
        out_v[idx] = res[3]
        out_f[idx] = res[4]
        out_region[idx] = res[5]
        out_nscat[idx] = res[6]
