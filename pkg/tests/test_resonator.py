import math

import numpy as np
import pytest

from evtrap.errors import BadWindow, NonPhysical
from evtrap.resonator import (ResonatorParams, circulating_power,
                              cooperativity, coupling_at_distance,
                              coupling_from_cooperativity, finesse,
                              fit_spectrum, lifetime_to_cooperativity,
                              peak_intensity, transmission)

DEVICE = ResonatorParams(kappa_ex=1.15e9, kappa_i=1.16e9,
                        h_backscatter=1.08e9)


def test_transmission_even_in_detuning():
    d = np.linspace(0.1e9, 12e9, 40)
    np.testing.assert_allclose(transmission(d, DEVICE),
                               transmission(-d, DEVICE), rtol=1e-12)


def test_critical_coupling_without_backscatter():
    res = ResonatorParams(kappa_ex=1.0e9, kappa_i=1.0e9, h_backscatter=0.0)
    assert transmission(0.0, res) == pytest.approx(0.0, abs=1e-15)


def test_far_detuned_transmission_is_unity():
    assert transmission(1e15, DEVICE) == pytest.approx(1.0, rel=1e-6)


def test_finesse_definition():
    assert finesse(DEVICE) == pytest.approx(DEVICE.fsr / (2 * DEVICE.kappa),
                                           rel=1e-12)


def test_resonant_buildup_closed_form():
    p_in = 1e-9
    expect = 0.5 * (finesse(DEVICE) / math.pi) * p_in
    assert circulating_power(p_in, 0.0, DEVICE) == pytest.approx(expect,
                                                                rel=1e-12)
    assert circulating_power(0.0, 1e9, DEVICE) == 0.0


def test_buildup_lorentzian_rolloff():
    p0 = circulating_power(1e-9, 0.0, DEVICE)
    pk = circulating_power(1e-9, DEVICE.kappa, DEVICE)
    assert pk == pytest.approx(p0 / 2, rel=1e-12)


def test_peak_intensity_scale():
    assert peak_intensity(2e-6, DEVICE) == pytest.approx(
        2e-6 / DEVICE.mode_area, rel=1e-12)


def test_cooperativity_round_trip():
    g = coupling_from_cooperativity(1.57, DEVICE, 3.03e6)
    assert cooperativity(g, DEVICE, 3.03e6) == pytest.approx(1.57, rel=1e-12)


def test_lifetime_cooperativity_limits():
    assert lifetime_to_cooperativity(26.2e-9, 26.2e-9) == pytest.approx(0.0)
    with pytest.raises(NonPhysical):
        lifetime_to_cooperativity(30e-9, 26.2e-9)


def test_coupling_decays_with_distance():
    res = ResonatorParams(kappa_ex=1.15e9, kappa_i=1.16e9, g0_max=200e6)
    x = np.linspace(0, 400e-9, 32)
    g_max, g_floor = coupling_at_distance(x, res)
    assert np.all(np.diff(g_max) < 0)
    np.testing.assert_allclose(g_floor, res.zeeman_floor * g_max,
                               rtol=1e-12)
    e_fold, _ = coupling_at_distance(res.lambda_ev, res)
    assert e_fold == pytest.approx(res.g0_max / math.e, rel=1e-9)


def test_spectrum_fit_noiseless_round_trip():
    d = np.linspace(-10e9, 10e9, 401)
    t = transmission(d, DEVICE)
    fit = fit_spectrum(d, t)
    assert fit.kappa_ex == pytest.approx(DEVICE.kappa_ex, rel=1e-5)
    assert fit.kappa_i == pytest.approx(DEVICE.kappa_i, rel=1e-5)
    assert fit.h_backscatter == pytest.approx(DEVICE.h_backscatter, rel=1e-4)
    assert abs(fit.delta0) < 1e3


def test_spectrum_fit_needs_bracketed_minimum():
    d = np.linspace(5e9, 20e9, 64)
    with pytest.raises(BadWindow):
        fit_spectrum(d, transmission(d, DEVICE))
