import math

import numpy as np
import pytest

from evtrap.constants import HBAR, PLANCK
from evtrap.errors import FitDegenerate, NoBarrier
from evtrap.potentials import rb87
from evtrap.tunneling import (barrier_action, classical_period, escape_time,
                              fit_log_decay, recoil_photon_budget,
                              survival_from_lifetimes, wkb_tunneling_time)

MASS = rb87().mass


def test_rectangular_barrier_action_analytic():
    v0 = 5e6 * PLANCK
    e = 1e6 * PLANCK
    width = 50e-9

    def u(x):
        return v0

    action = barrier_action(u, MASS, e, 0.0, width)
    expect = width * math.sqrt(2 * MASS * (v0 - e)) / HBAR
    assert action == pytest.approx(expect, rel=1e-6)


def test_rectangular_barrier_escape_time_scale():
    v0 = 5e6 * PLANCK
    e = 1e6 * PLANCK
    action = barrier_action(lambda x: v0, MASS, e, 0.0, 50e-9)
    t = escape_time(action, 650e3)
    assert t == pytest.approx(math.exp(2 * action) / 650e3, rel=1e-12)


def test_harmonic_period_matches_analytic():
    omega = 2 * math.pi * 650e3
    e = 1e6 * PLANCK
    amp = math.sqrt(2 * e / (MASS * omega ** 2))

    def u(x):
        return 0.5 * MASS * omega ** 2 * x * x

    period = classical_period(u, MASS, e, -amp, amp)
    assert period == pytest.approx(2 * math.pi / omega, rel=1e-8)


def test_wkb_monotone_and_spanning(base_stack):
    de = np.linspace(-5e6, -1e6, 25) * PLANCK
    times = np.array([wkb_tunneling_time(base_stack, d).time for d in de])
    # deeper below the barrier top means slower escape
    assert np.all(np.diff(times) < 0)
    assert times.max() > 1.0
    assert times.min() < 1e-3


def test_wkb_above_barrier_flag(base_stack):
    r = wkb_tunneling_time(base_stack, 0.5e6 * PLANCK)
    assert r.above_barrier
    assert r.time == pytest.approx(r.period / 2)
    assert r.action == 0.0


def test_wkb_turning_points_ordered(base_stack):
    r = wkb_tunneling_time(base_stack, -2e6 * PLANCK)
    assert base_stack.surface.x_contact <= r.x_inner < r.x_mid < r.x_outer


def test_wkb_no_barrier(cfg):
    from evtrap.config import build_stack
    from evtrap.errors import NoMinimum
    st = build_stack(cfg, saturation=1e8, detuning_mhz=250.0)
    with pytest.raises((NoBarrier, NoMinimum)):
        wkb_tunneling_time(st, -1e6 * PLANCK)


def test_survival_single_energy_is_exponential():
    tau = np.logspace(-3, 1, 40)
    s = survival_from_lifetimes([0.5], [1.0], tau)
    np.testing.assert_allclose(s, np.exp(-tau / 0.5), rtol=1e-12)


def test_survival_mixture_bounds_and_monotonicity():
    tau = np.logspace(-4, 2, 60)
    s = survival_from_lifetimes([1e-2, 1.0, 10.0], [0.2, 0.5, 0.3], tau)
    assert np.all(np.diff(s) < 0)
    assert np.all((s > 0) & (s < 1))
    np.testing.assert_allclose(
        s, 0.2 * np.exp(-tau / 1e-2) + 0.5 * np.exp(-tau)
        + 0.3 * np.exp(-tau / 10.0), rtol=1e-12)


def test_survival_validates_input():
    tau = np.logspace(-2, 0, 5)
    with pytest.raises(ValueError):
        survival_from_lifetimes([1.0, -1.0], [0.5, 0.5], tau)
    with pytest.raises(ValueError):
        survival_from_lifetimes([1.0], [0.0], tau)


def test_log_decay_fit_round_trip():
    tau = np.logspace(-3, 1, 50)
    signal = 0.31 * np.log1p(0.7 / tau)
    fit = fit_log_decay(tau, signal)
    assert fit.amplitude == pytest.approx(0.31, rel=1e-6)
    assert fit.b == pytest.approx(0.7, rel=1e-6)
    assert fit.residual < 1e-9


def test_log_decay_fit_rejects_flat():
    tau = np.logspace(-2, 1, 20)
    with pytest.raises(FitDegenerate):
        fit_log_decay(tau, np.full_like(tau, 0.5))


def test_recoil_budget_scale():
    atom = rb87()
    e_rec = (PLANCK / atom.wavelength) ** 2 / (2 * atom.mass)
    n = recoil_photon_budget(-1e6 * PLANCK, e_rec)
    assert n == pytest.approx(1e6 * PLANCK / (2 * e_rec), rel=1e-12)
    with pytest.raises(ValueError):
        recoil_photon_budget(1e6 * PLANCK, e_rec)
