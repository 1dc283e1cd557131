"""State-dependent trapping potentials near a dielectric surface.

The total potential seen by a ground-state alkali atom at distance x from the
chip surface is assembled from four terms:

* a repulsive evanescent-field light shift U_ev = (hbar/2) * Delta_F /
  (1 + (Delta_F/gamma)^2) * (I0/I_sat) * exp(-2 x / Lambda), where Delta_F is
  the (hyperfine-state dependent) angular detuning and Lambda the evanescent
  decay length,
* an attractive standing-wave tweezer surrogate U_tw = -u_inc * (1 + r^2 +
  2 r cos(2 k x + phi)) built from an incident wave of depth u_inc partially
  reflected off the surface with amplitude r and phase phi,
* the Casimir-Polder surface attraction U_cp = -C3 / x^3,
* gravity U_g = -m g x (the chip faces down, x increases away from it).

The two hyperfine ground states F1 and F2 share the optical fields but see
different detunings, Delta_F2 = Delta_F1 + 2 pi * hyperfine splitting, which
suppresses the evanescent repulsion for F2 by roughly the squared detuning
ratio.  All distances are metres, energies Joule, detunings angular (rad/s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .constants import ATOMIC_MASS, G_ACCEL, HBAR, PLANCK
from .errors import CalibrationFailed, NoMinimum


class Hyperfine(IntEnum):
    F1 = 1
    F2 = 2


F1 = Hyperfine.F1
F2 = Hyperfine.F2


@dataclass(frozen=True)
class AtomSpecies:
    """Atomic parameters for the two-ground-state model.

    gamma is the half linewidth in ordinary frequency (Hz); the excited-state
    population decay rate is 2*gamma in angular units.  branch_to_f1 and
    branch_to_f2 give the spontaneous branching ratios from the excited state
    driven during loading.
    """

    mass: float
    gamma: float
    i_sat: float
    hyperfine_splitting: float
    wavelength: float
    branch_to_f1: float = 0.75
    branch_to_f2: float = 0.25

    def __post_init__(self):
        if self.mass <= 0 or self.gamma <= 0 or self.i_sat <= 0:
            raise ValueError("mass, gamma and i_sat must be positive")
        if self.hyperfine_splitting < 0:
            raise ValueError("hyperfine_splitting must be non-negative")
        if not math.isclose(self.branch_to_f1 + self.branch_to_f2, 1.0,
                            rel_tol=0, abs_tol=1e-12):
            raise ValueError("branching ratios must sum to 1")

    @property
    def gamma_angular(self) -> float:
        return 2.0 * math.pi * self.gamma

    @property
    def recoil_velocity(self) -> float:
        return PLANCK / (self.mass * self.wavelength)

    @property
    def recoil_energy(self) -> float:
        return 0.5 * self.mass * self.recoil_velocity ** 2


def rb87() -> AtomSpecies:
    """Rubidium-87 driven on the 780 nm D2 line."""
    return AtomSpecies(
        mass=86.909180527 * ATOMIC_MASS,
        gamma=3.03e6,
        i_sat=25.0,
        hyperfine_splitting=6.8e9,
        wavelength=780.241209686e-9,
    )


@dataclass(frozen=True)
class EvanescentField:
    """Blue-detuned evanescent field of the resonator mode.

    i0 is the peak intensity at the surface (W/m^2), lambda_ev the 1/e decay
    length of the field amplitude squared ... i.e. the intensity falls as
    exp(-2x/lambda_ev).  detuning_f1 is the angular detuning of the light from
    the F1 ground state transition.
    """

    i0: float
    detuning_f1: float
    lambda_ev: float = 86e-9

    def __post_init__(self):
        if self.i0 < 0:
            raise ValueError("intensity must be non-negative")
        if self.lambda_ev <= 0:
            raise ValueError("lambda_ev must be positive")

    def detuning(self, f_state: Hyperfine, atom: AtomSpecies) -> float:
        """Angular detuning seen by the given hyperfine state."""
        if f_state == Hyperfine.F1:
            return self.detuning_f1
        return self.detuning_f1 + 2.0 * math.pi * atom.hyperfine_splitting


@dataclass(frozen=True)
class TweezerField:
    """Standing-wave surrogate for the reflected optical tweezer.

    u_inc is the light-shift depth of the incident travelling wave alone (J,
    positive number for an attractive trap), r the field reflection amplitude
    off the chip and phi the reflection phase at x = 0.
    """

    u_inc: float
    r_refl: float
    phi_refl: float
    wavelength: float = 835e-9

    def __post_init__(self):
        if self.u_inc < 0:
            raise ValueError("u_inc must be non-negative")
        if not 0.0 <= self.r_refl <= 1.0:
            raise ValueError("r_refl must lie in [0, 1]")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.wavelength


@dataclass(frozen=True)
class SurfaceModel:
    """Casimir-Polder coefficient and the hard-contact cutoff."""

    c3: float
    x_contact: float = 5e-9

    def __post_init__(self):
        if self.c3 < 0:
            raise ValueError("c3 must be non-negative")
        if self.x_contact <= 0:
            raise ValueError("x_contact must be positive")


@dataclass(frozen=True)
class PotentialStack:
    """Everything needed to evaluate the total potential."""

    atom: AtomSpecies
    evanescent: EvanescentField
    tweezer: TweezerField
    surface: SurfaceModel
    include_gravity: bool = True
    gravity_accel: float = G_ACCEL

    def detuning(self, f_state: Hyperfine) -> float:
        return self.evanescent.detuning(f_state, self.atom)


def evanescent_potential(x, f_state: Hyperfine, field: EvanescentField,
                         atom: AtomSpecies):
    """Light-shift potential of the evanescent field for one hyperfine state."""
    x = np.asarray(x, dtype=float)
    delta = field.detuning(f_state, atom)
    gamma_ang = atom.gamma_angular
    pref = 0.5 * HBAR * delta / (1.0 + (delta / gamma_ang) ** 2)
    return pref * (field.i0 / atom.i_sat) * np.exp(-2.0 * x / field.lambda_ev)


def tweezer_potential(x, field: TweezerField):
    """Standing-wave tweezer potential (negative where attractive)."""
    x = np.asarray(x, dtype=float)
    r = field.r_refl
    return -field.u_inc * (1.0 + r * r
                           + 2.0 * r * np.cos(2.0 * field.k * x + field.phi_refl))


def casimir_polder(x, surface: SurfaceModel):
    """Surface attraction -C3/x^3; only valid outside the contact radius."""
    x = np.asarray(x, dtype=float)
    if np.any(x < surface.x_contact):
        raise ValueError("casimir_polder evaluated inside the contact radius")
    return -surface.c3 / x ** 3


def gravity_potential(x, stack: PotentialStack):
    x = np.asarray(x, dtype=float)
    if not stack.include_gravity:
        return np.zeros_like(x)
    return -stack.atom.mass * stack.gravity_accel * x


def potential_terms(x, f_state: Hyperfine, stack: PotentialStack) -> dict:
    """Individual terms of the total potential, keyed by name."""
    return {
        "evanescent": evanescent_potential(x, f_state, stack.evanescent,
                                           stack.atom),
        "tweezer": tweezer_potential(x, stack.tweezer),
        "casimir_polder": casimir_polder(x, stack.surface),
        "gravity": gravity_potential(x, stack),
    }


def total_potential(x, f_state: Hyperfine, stack: PotentialStack):
    """Sum of evanescent, tweezer, Casimir-Polder and gravity terms."""
    terms = potential_terms(x, f_state, stack)
    return terms["evanescent"] + terms["tweezer"] + terms["casimir_polder"] \
        + terms["gravity"]


def potential_gradient(x, f_state: Hyperfine, stack: PotentialStack):
    """Analytic dU/dx of the total potential."""
    x = np.asarray(x, dtype=float)
    if np.any(x < stack.surface.x_contact):
        raise ValueError("gradient evaluated inside the contact radius")
    ev = evanescent_potential(x, f_state, stack.evanescent, stack.atom)
    d_ev = ev * (-2.0 / stack.evanescent.lambda_ev)
    tw = stack.tweezer
    d_tw = 2.0 * tw.u_inc * tw.r_refl * 2.0 * tw.k \
        * np.sin(2.0 * tw.k * x + tw.phi_refl)
    d_cp = 3.0 * stack.surface.c3 / x ** 4
    d_g = -stack.atom.mass * stack.gravity_accel if stack.include_gravity \
        else 0.0
    return d_ev + d_tw + d_cp + d_g


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(fun, a: float, b: float, xtol: float) -> float:
    """Golden-section minimum of fun on [a, b] to absolute tolerance xtol."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    while (b - a) > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


# grid pitch for bracketing extrema and the refinement tolerance
_GRID_STEP = 0.5e-9
_XTOL = 1e-11


def default_window(stack: PotentialStack) -> tuple[float, float]:
    """Search window covering the first standing-wave trap site only.

    The upper edge sits just past the first outer barrier (0.55 tweezer
    wavelengths) so the second lattice site never masquerades as the trap.
    """
    return (stack.surface.x_contact, 0.55 * stack.tweezer.wavelength)


def _grid(window: tuple[float, float]) -> np.ndarray:
    lo, hi = window
    n = max(int(round((hi - lo) / _GRID_STEP)), 16)
    return np.linspace(lo, hi, n + 1)


def find_trap_minimum(stack: PotentialStack, f_state: Hyperfine = F2,
                      window: tuple[float, float] | None = None
                      ) -> tuple[float, float]:
    """Locate the global interior minimum of the total potential.

    Scans a 0.5 nm grid over the window, brackets every strict interior local
    minimum, refines the deepest with a golden-section search to 0.01 nm and
    returns (x_min, u_min).  Raises NoMinimum when the potential is monotone
    over the window (no interior minimum exists).
    """
    if window is None:
        window = default_window(stack)
    lo, hi = window
    if not (stack.surface.x_contact <= lo < hi):
        raise ValueError("window must satisfy x_contact <= lo < hi")
    xs = _grid(window)
    us = total_potential(xs, f_state, stack)
    interior = np.flatnonzero((us[1:-1] < us[:-2]) & (us[1:-1] <= us[2:])) + 1
    if interior.size == 0:
        raise NoMinimum(
            f"no interior potential minimum for {f_state.name} in "
            f"[{lo:.3e}, {hi:.3e}] m")
    best = interior[np.argmin(us[interior])]

    def cost(x):
        return float(total_potential(x, f_state, stack))

    x_min = _golden_min(cost, xs[best - 1], xs[best + 1], _XTOL)
    return x_min, cost(x_min)


@dataclass(frozen=True)
class TrapMetrics:
    """Scalar descriptors of a trap site.

    Energies are in Joule relative to the trap minimum; x_barrier_in and
    x_barrier_out are the barrier-top positions toward the surface and toward
    vacuum (the latter equals the window edge when the potential rises
    monotonically outward).
    """

    x_min: float
    u_min: float
    depth_to_vacuum: float
    barrier_to_surface: float
    freq_x: float
    x_barrier_in: float
    x_barrier_out: float


def trap_metrics(stack: PotentialStack, f_state: Hyperfine = F2,
                 window: tuple[float, float] | None = None) -> TrapMetrics:
    """Trap position, depths toward both exits and the harmonic frequency.

    barrier_to_surface is the maximum of U between the contact radius and the
    trap minimum, relative to the minimum; an absent barrier is reported as
    zero rather than an error.  depth_to_vacuum takes the lower of the first
    local maximum beyond the minimum and the potential at the window edge.
    freq_x comes from a centred second difference with 0.1 nm step.
    """
    if window is None:
        window = default_window(stack)
    x_min, u_min = find_trap_minimum(stack, f_state, window)

    def neg_u(x):
        return -float(total_potential(x, f_state, stack))

    # barrier toward the surface: maximum over (x_contact, x_min)
    xs_in = np.arange(window[0], x_min, _GRID_STEP)
    if xs_in.size >= 3:
        us_in = total_potential(xs_in, f_state, stack)
        top = int(np.argmax(us_in))
        if 0 < top < xs_in.size - 1:
            x_b_in = _golden_min(neg_u, xs_in[top - 1], xs_in[top + 1], _XTOL)
        else:
            x_b_in = float(xs_in[top])
        barrier_in = max(-neg_u(x_b_in) - u_min, 0.0)
    else:
        x_b_in, barrier_in = window[0], 0.0

    # depth toward vacuum: first local maximum beyond the minimum, capped by
    # the potential at the window edge
    xs_out = np.arange(x_min, window[1], _GRID_STEP)
    u_edge = float(total_potential(window[1], f_state, stack))
    x_b_out, u_out = window[1], u_edge
    if xs_out.size >= 3:
        us_out = total_potential(xs_out, f_state, stack)
        peaks = np.flatnonzero((us_out[1:-1] > us_out[:-2])
                               & (us_out[1:-1] >= us_out[2:])) + 1
        if peaks.size:
            p = peaks[0]
            x_b_out = _golden_min(neg_u, xs_out[p - 1], xs_out[p + 1], _XTOL)
            u_out = -neg_u(x_b_out)
    depth = max(min(u_out, u_edge) - u_min, 0.0)

    # harmonic frequency from the local curvature
    h = 1e-10
    upp = (float(total_potential(x_min + h, f_state, stack))
           - 2.0 * float(total_potential(x_min, f_state, stack))
           + float(total_potential(x_min - h, f_state, stack))) / h ** 2
    freq = math.sqrt(max(upp, 0.0) / stack.atom.mass) / (2.0 * math.pi)

    return TrapMetrics(x_min=x_min, u_min=u_min, depth_to_vacuum=depth,
                       barrier_to_surface=barrier_in, freq_x=freq,
                       x_barrier_in=x_b_in, x_barrier_out=x_b_out)


@dataclass(frozen=True)
class CalibrationResult:
    u_inc: float
    phi_refl: float
    residual: float
    metrics: TrapMetrics
    stack: PotentialStack


def calibrate_tweezer(stack: PotentialStack,
                      x_min_target: float | None = None,
                      freq_x_target: float | None = None,
                      f_state: Hyperfine = F2,
                      window: tuple[float, float] | None = None,
                      max_residual: float = 0.05) -> CalibrationResult:
    """Fit (u_inc, phi_refl) so the trap matches position and/or frequency.

    Targets are matched in the least-squares sense on relative errors; with a
    single target only the corresponding knob is varied (phi for position,
    u_inc for frequency).  Raises CalibrationFailed when the root mean square
    relative miss exceeds max_residual.
    """
    from scipy.optimize import least_squares

    if x_min_target is None and freq_x_target is None:
        raise ValueError("at least one calibration target is required")
    tw = stack.tweezer
    fit_phi = x_min_target is not None
    fit_u = freq_x_target is not None

    # curvature of the standing wave alone fixes the u_inc scale
    if fit_u:
        omega = 2.0 * math.pi * freq_x_target
        u0 = stack.atom.mass * omega ** 2 \
            / (2.0 * max(tw.r_refl, 1e-6) * (2.0 * tw.k) ** 2)
    else:
        u0 = tw.u_inc
        if u0 <= 0:
            raise ValueError("template u_inc must be positive when only the "
                             "position is calibrated")
    # reflection phase putting the cosine minimum at the target position
    if fit_phi:
        phi0 = (math.pi - 2.0 * tw.k * x_min_target) % (2.0 * math.pi)
    else:
        phi0 = tw.phi_refl % (2.0 * math.pi)

    def build(params):
        vals = dict(u_inc=u0, phi_refl=phi0)
        i = 0
        if fit_u:
            vals["u_inc"] = params[i]
            i += 1
        if fit_phi:
            vals["phi_refl"] = params[i] % (2.0 * math.pi)
        return replace(stack, tweezer=replace(tw, **vals))

    def residuals(params):
        try:
            m = trap_metrics(build(params), f_state, window)
        except NoMinimum:
            return np.full(n_res, 1e3)
        out = []
        if fit_phi:
            out.append((m.x_min - x_min_target) / x_min_target)
        if fit_u:
            out.append((m.freq_x - freq_x_target) / freq_x_target)
        return np.array(out)

    x0, lo, hi = [], [], []
    if fit_u:
        x0.append(u0)
        lo.append(u0 * 1e-3)
        hi.append(u0 * 1e3)
    if fit_phi:
        x0.append(phi0)
        lo.append(phi0 - math.pi)
        hi.append(phi0 + math.pi)
    n_res = len(x0)

    sol = least_squares(residuals, x0, bounds=(lo, hi), diff_step=1e-3,
                        xtol=1e-14, ftol=1e-14, gtol=1e-14)
    resid = math.sqrt(float(np.mean(sol.fun ** 2)))
    if not sol.success or resid > max_residual:
        raise CalibrationFailed(
            f"calibration residual {resid:.3g} exceeds {max_residual:.3g}")
    fitted = build(sol.x)
    return CalibrationResult(u_inc=fitted.tweezer.u_inc,
                             phi_refl=fitted.tweezer.phi_refl,
                             residual=resid,
                             metrics=trap_metrics(fitted, f_state, window),
                             stack=fitted)
