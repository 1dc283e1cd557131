"""WKB tunneling lifetimes of trapped atoms through the surface barrier.

An atom bound at energy E below the barrier top escapes toward the surface at
a rate nu * exp(-2 S), where S = integral sqrt(2 m (U - E)) / hbar dx runs
between the classical turning points inside the barrier and the attempt
frequency nu is the inverse of the energy-dependent classical oscillation
period in the well.  Both integrals use a sin^2 substitution that removes the
turning-point singularities before quadrature.

Energies are referenced to the barrier top via delta_e = E - U_barrier, so
delta_e < 0 denotes a bound atom; delta_e >= 0 is flagged as above-barrier
escape within one oscillation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, least_squares

from .constants import HBAR
from .errors import FitDegenerate, NoBarrier
from .potentials import F2, Hyperfine, PotentialStack, total_potential, \
    trap_metrics

_QUAD = dict(epsabs=0.0, epsrel=1e-10, limit=200, full_output=1)


def _quad(integrand):
    # full_output keeps quad from warning about turning-point roundoff,
    # which the sin^2 substitution already renders harmless
    out = quad(integrand, 0.0, 0.5 * math.pi, **_QUAD)
    return out[0]


def barrier_action(u, mass: float, energy: float, x1: float, x2: float
                   ) -> float:
    """WKB action integral sqrt(2 m (U - E)) / hbar between x1 and x2.

    u is a callable potential (J as a function of metres); x1 < x2 are the
    turning points.  The substitution x = x1 + (x2 - x1) sin^2(theta) keeps
    the integrand smooth at both ends; regions where U dips below E
    contribute nothing.
    """
    if not x1 < x2:
        raise ValueError("need x1 < x2")
    w = x2 - x1

    def integrand(theta):
        s = math.sin(theta)
        x = x1 + w * s * s
        gap = max(u(x) - energy, 0.0)
        return math.sqrt(2.0 * mass * gap) * 2.0 * w * s * math.cos(theta)

    return _quad(integrand) / HBAR


def classical_period(u, mass: float, energy: float, x2: float, x3: float
                     ) -> float:
    """Oscillation period of bound motion between turning points x2 < x3."""
    if not x2 < x3:
        raise ValueError("need x2 < x3")
    w = x3 - x2

    def integrand(theta):
        s = math.sin(theta)
        c = math.cos(theta)
        x = x2 + w * s * s
        gap = max(energy - u(x), 0.0)
        v = math.sqrt(2.0 * gap / mass)
        if v == 0.0:
            return 0.0
        return 2.0 * w * s * c / v

    return 2.0 * _quad(integrand)


def escape_time(action: float, attempt_freq: float) -> float:
    """Lifetime for a given WKB action and attempt frequency."""
    if attempt_freq <= 0:
        raise ValueError("attempt frequency must be positive")
    return math.exp(2.0 * action) / attempt_freq


@dataclass(frozen=True)
class TunnelingResult:
    """Escape channel of one bound energy through the surface barrier."""

    time: float
    rate: float
    action: float
    period: float
    attempt_freq: float
    energy: float
    barrier_top: float
    x_inner: float
    x_mid: float
    x_outer: float
    above_barrier: bool


def _crossing(u, energy, a, b):
    return brentq(lambda x: u(x) - energy, a, b, xtol=1e-14, rtol=1e-14)


def wkb_tunneling_time(stack: PotentialStack, delta_e: float,
                       f_state: Hyperfine = F2,
                       window: tuple[float, float] | None = None
                       ) -> TunnelingResult:
    """Tunneling lifetime through the barrier toward the surface.

    delta_e is the atom energy relative to the top of the surface-side
    barrier (J, negative for bound atoms).  Raises NoBarrier when the stack
    has no barrier toward the surface and ValueError when the energy lies
    below the trap minimum.  Above-barrier energies return the half period as
    an indicative transit time with the flag set.
    """
    m = trap_metrics(stack, f_state, window)
    if m.barrier_to_surface <= 0:
        raise NoBarrier("stack has no barrier toward the surface")
    barrier_top = m.u_min + m.barrier_to_surface
    energy = barrier_top + delta_e
    if energy <= m.u_min:
        raise ValueError("energy lies below the trap minimum")

    def u(x):
        return float(total_potential(x, f_state, stack))

    mass = stack.atom.mass
    x_b_in, x_b_out = m.x_barrier_in, m.x_barrier_out

    # outer turning point of the well motion
    if u(x_b_out) > energy:
        x3 = _crossing(u, energy, m.x_min, x_b_out)
    else:
        # energy above the vacuum-side barrier: bound motion approximated as
        # turning at the outer barrier top
        x3 = x_b_out

    if delta_e >= 0.0:
        # classically above the surface barrier: escape within an oscillation
        x2 = stack.surface.x_contact
        period = classical_period(u, mass, energy, x2, x3)
        return TunnelingResult(time=0.5 * period, rate=2.0 / period,
                               action=0.0, period=period,
                               attempt_freq=1.0 / period, energy=energy,
                               barrier_top=barrier_top, x_inner=x2, x_mid=x2,
                               x_outer=x3, above_barrier=True)

    # inner turning point of the well (barrier side)
    x2 = _crossing(u, energy, x_b_in, m.x_min)
    # surface-side turning point of the barrier
    xs = np.linspace(stack.surface.x_contact, x_b_in, 512)
    us = np.array([u(x) for x in xs])
    below = np.flatnonzero(us < energy)
    if below.size:
        a = xs[below[-1]]
        x1 = _crossing(u, energy, a, x_b_in) if a < x_b_in else a
    else:
        # entire surface side is classically forbidden
        x1 = stack.surface.x_contact

    action = barrier_action(u, mass, energy, x1, x2)
    period = classical_period(u, mass, energy, x2, x3)
    nu = 1.0 / period
    rate = nu * math.exp(-2.0 * action)
    return TunnelingResult(time=1.0 / rate, rate=rate, action=action,
                           period=period, attempt_freq=nu, energy=energy,
                           barrier_top=barrier_top, x_inner=x1, x_mid=x2,
                           x_outer=x3, above_barrier=False)


def survival_from_lifetimes(times, weights, tau_grid):
    """Population surviving to each tau for a mixture of exponentials."""
    times = np.asarray(times, dtype=float)
    weights = np.asarray(weights, dtype=float)
    tau_grid = np.asarray(tau_grid, dtype=float)
    if times.shape != weights.shape:
        raise ValueError("times and weights must have matching shapes")
    if np.any(times <= 0) or np.any(weights < 0):
        raise ValueError("lifetimes must be positive and weights "
                         "non-negative")
    wsum = weights.sum()
    if wsum <= 0:
        raise ValueError("weights must not all vanish")
    return (weights[None, :] * np.exp(-tau_grid[:, None] / times[None, :])
            ).sum(axis=1) / wsum


def survival_curve(stack: PotentialStack, delta_e_samples, weights, tau_grid,
                   f_state: Hyperfine = F2,
                   window: tuple[float, float] | None = None):
    """Survival curve of an energy distribution tunneling to the surface.

    Each (delta_e, weight) sample decays exponentially at its WKB rate; the
    ensemble survival is the weighted mixture.  Returns (survival, times).
    """
    delta_e_samples = np.asarray(delta_e_samples, dtype=float)
    weights = np.asarray(weights, dtype=float)
    times = np.array([
        wkb_tunneling_time(stack, de, f_state, window).time
        for de in delta_e_samples])
    return survival_from_lifetimes(times, weights, tau_grid), times


@dataclass(frozen=True)
class LogDecayFit:
    amplitude: float
    b: float
    residual: float


def fit_log_decay(tau, signal) -> LogDecayFit:
    """Fit the slow-decay form A log(1 + b / tau) to a survival curve.

    This form arises when decay rates are distributed uniformly on a log
    scale.  Raises FitDegenerate for flat input or a rank-deficient problem.
    """
    tau = np.asarray(tau, dtype=float)
    signal = np.asarray(signal, dtype=float)
    if tau.shape != signal.shape or tau.ndim != 1 or tau.size < 3:
        raise ValueError("need matching 1-d arrays with at least 3 points")
    if np.any(tau <= 0):
        raise ValueError("tau values must be positive")
    if np.ptp(signal) == 0.0:
        raise FitDegenerate("signal is flat; log-decay fit is degenerate")

    b0 = math.exp(float(np.mean(np.log(tau))))
    a0 = max(float(signal.max()), 1e-12) / math.log(1.0 + b0 / tau.min())

    def residuals(p):
        a, b = p
        return a * np.log1p(b / tau) - signal

    sol = least_squares(residuals, [a0, b0],
                        bounds=([0.0, 0.0], [np.inf, np.inf]),
                        xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if not sol.success:
        raise FitDegenerate(f"log-decay fit failed: {sol.message}")
    sv = np.linalg.svd(sol.jac, compute_uv=False)
    if sv[0] <= 0 or sv[-1] / sv[0] < 1e-12:
        raise FitDegenerate("log-decay fit Jacobian is rank deficient")
    a, b = sol.x
    resid = math.sqrt(float(np.mean(sol.fun ** 2)))
    return LogDecayFit(amplitude=a, b=b, residual=resid)


def recoil_photon_budget(delta_e: float, recoil_energy: float) -> float:
    """Scattered photons needed to sink |delta_e| at two recoils per photon.

    Each scattering event (absorption plus emission) removes two recoil
    energies on average from the atom's motion along the trap axis.
    """
    if delta_e >= 0:
        raise ValueError("delta_e must be negative (energy below the "
                         "barrier top)")
    if recoil_energy <= 0:
        raise ValueError("recoil energy must be positive")
    return abs(delta_e) / (2.0 * recoil_energy)
