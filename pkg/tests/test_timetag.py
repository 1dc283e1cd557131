"""Time-tag chain: folding, event detection, g2 estimator, lifetime fits."""

import math

import numpy as np
import pytest

from evtrap.errors import (BadWindow, EmptyCondition, FitDegenerate,
                           NoCrossing, NonPhysical)
from evtrap.timetag import (CycleSpec, EmitterParams, EventTable, TagStream,
                            aggregate_decay_times, detect_events,
                            fit_decay_lifetime, fold_histogram,
                            g2_correlation, default_cycle, photon_number_stats,
                            read_tags, survival_decay_times,
                            synth_emitter_stream, synth_poisson_stream,
                            write_tags)

# small cycle used throughout: 4 blocks of 2 us in a 10 us period,
# excitation at 400 ns for 1500 ns, 500 ns detect window, 3 blocks used
CY = CycleSpec(period=10_000, pulse_period=2_000, n_pulses=4,
               exc_offset=400, exc_duration=1_500, detect_ns=500,
               n_pulses_used=3)


def _stream(times, channels=None):
    t = np.asarray(times, dtype=np.int64)
    ch = np.zeros(t.size, dtype=np.uint8) if channels is None \
        else np.asarray(channels, dtype=np.uint8)
    order = np.argsort(t, kind="stable")
    return TagStream(channels=ch[order], times=t[order])


def _window_start(c, p, cycle=CY):
    return c * cycle.period + p * cycle.pulse_period + cycle.exc_offset


# ---------------------------------------------------------------- folding

def test_fold_preserves_counts_and_period_shift():
    rng = np.random.default_rng(7)
    t = rng.integers(0, 10 * CY.period, size=5000)
    h = fold_histogram(t, CY.period, 100)
    assert h.sum() == t.size
    h_shift = fold_histogram(t + 3 * CY.period, CY.period, 100)
    np.testing.assert_array_equal(h, h_shift)


def test_fold_rejects_non_divisor_bin():
    with pytest.raises(ValueError):
        fold_histogram(np.arange(10), 1000, 300)


def test_fold_empty_stream_is_zero():
    h = fold_histogram(np.empty(0, dtype=np.int64), 1000, 100)
    assert h.shape == (10,) and h.sum() == 0


# ------------------------------------------------------------- tag files

def test_tag_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    t = np.sort(rng.integers(0, 10**9, size=400))
    ch = rng.integers(0, 2, size=400).astype(np.uint8)
    s = _stream(t, ch)
    for name in ("tags.bin", "tags.csv"):
        path = tmp_path / name
        write_tags(s, path)
        back = read_tags(path)
        np.testing.assert_array_equal(back.times, s.times)
        np.testing.assert_array_equal(back.channels, s.channels)


# -------------------------------------------------------- event detection

def test_detect_events_synthetic_exact():
    times = []
    # cycle 0 pulse 0: 3 photons in the detect window
    times += [_window_start(0, 0) + d for d in (0, 100, 499)]
    # cycle 0 pulse 1: a single photon (below threshold)
    times += [_window_start(0, 1) + 250]
    # cycle 1 pulse 2: exactly at threshold
    times += [_window_start(1, 2) + d for d in (10, 20)]
    # cycle 1 pulse 0: two photons in the false-positive window
    # (last detect_ns of the excitation window)
    fp0 = _window_start(1, 0) + CY.exc_duration - CY.detect_ns
    times += [fp0 + 5, fp0 + 400]
    # photons that must not count: loading interval, unused pulse 3,
    # past the detect window, trailing partial cycle
    times += [0 * CY.period + 100,
              _window_start(0, 3) + 10,
              _window_start(0, 0) + 501,
              2 * CY.period + 123]
    ev = detect_events(_stream(times), CY, threshold=2)

    assert ev.n_cycles == 2
    assert ev.counts.shape == (2, 3)
    expect = np.zeros((2, 3), dtype=np.int64)
    expect[0, 0] = 3
    expect[0, 1] = 1
    expect[1, 2] = 2
    np.testing.assert_array_equal(ev.counts, expect)
    assert ev.n_events == 2
    assert ev.trapping_probability == pytest.approx(2 / 6)
    assert ev.false_counts[1, 0] == 2
    assert ev.false_positive_rate == pytest.approx(1 / 6)


def test_detect_events_requires_complete_cycle():
    with pytest.raises(ValueError):
        detect_events(_stream([100, 200]), CY)
    with pytest.raises(ValueError):
        detect_events(_stream([]), CY)


def test_detect_events_explicit_cycle_count():
    times = [_window_start(0, 0) + 1, _window_start(0, 0) + 2]
    ev = detect_events(_stream(times), CY, threshold=2, n_cycles=3)
    assert ev.counts.shape == (3, 3)
    assert ev.trapping_probability == pytest.approx(1 / 9)


# ------------------------------------------------------- photon numbers

def _table_from_counts(counts):
    counts = np.asarray(counts, dtype=np.int64).reshape(-1, 1)
    flags = counts >= 2
    return EventTable(counts=counts, flags=flags,
                      false_counts=np.zeros_like(counts), threshold=2,
                      n_cycles=counts.shape[0],
                      trapping_probability=float(flags.mean()),
                      false_positive_rate=0.0)


def test_photon_number_recovers_exponential_tail():
    n0 = 1.7
    vals = []
    for n in range(2, 13):
        vals += [n] * int(round(20000 * math.exp(-n / n0)))
    vals += [0] * 3000 + [1] * 2000
    stats = photon_number_stats(_table_from_counts(vals))
    assert stats.n0 == pytest.approx(n0, rel=0.02)
    assert stats.residual < 0.01
    assert stats.p_n.sum() == pytest.approx(1.0)


def test_photon_number_flags_curved_tail():
    # a Poisson-shaped distribution is curved in log space, so the same
    # fit must leave a much larger residual than the exponential tail
    from scipy.stats import poisson
    mu = 4.0
    vals = []
    for n in range(16):
        vals += [n] * int(round(50000 * poisson.pmf(n, mu)))
    exp_vals = []
    for n in range(2, 13):
        exp_vals += [n] * int(round(20000 * math.exp(-n / 1.7)))
    r_pois = photon_number_stats(_table_from_counts(vals)).residual
    r_exp = photon_number_stats(_table_from_counts(exp_vals)).residual
    assert r_pois > 5 * r_exp


def test_photon_number_needs_support():
    with pytest.raises(FitDegenerate):
        photon_number_stats(_table_from_counts([0, 1, 2, 2, 3]))
    with pytest.raises(NonPhysical):
        # rising tail
        photon_number_stats(_table_from_counts(
            [2] * 10 + [3] * 20 + [4] * 40 + [5] * 80))


# ------------------------------------------------------------ g2 chain

def _random_conditioned_stream(seed, n_cycles=6, mean=4.0):
    rng = np.random.default_rng(seed)
    times, chans = [], []
    for c in range(n_cycles):
        for p in range(CY.n_pulses_used):
            for ch in (0, 1):
                k = rng.poisson(mean)
                off = rng.integers(0, CY.detect_ns, size=k)
                times += list(_window_start(c, p) + off)
                chans += [ch] * k
    return _stream(times, chans)


def test_g2_numerator_matches_brute_force():
    tau_bin, tau_max = 50, 200
    s = _random_conditioned_stream(11)
    ev = detect_events(s, CY, threshold=2, n_cycles=6)
    res = g2_correlation(s, CY, ev, tau_max, tau_bin)
    assert res.n_units == ev.n_events

    nd = tau_max // tau_bin
    bf = np.zeros(2 * nd + 1, dtype=np.int64)
    for ta in s.channel_times(0):
        ca, ra = divmod(int(ta), CY.period)
        pa, wa = divmod(ra, CY.pulse_period)
        rel_a = wa - CY.exc_offset
        if not (0 <= rel_a < CY.detect_ns and pa < CY.n_pulses_used
                and ca < ev.n_cycles and ev.flags[ca, pa]):
            continue
        for tb in s.channel_times(1):
            cb, rb = divmod(int(tb), CY.period)
            pb, wb = divmod(rb, CY.pulse_period)
            rel_b = wb - CY.exc_offset
            if not (0 <= rel_b < CY.detect_ns and (cb, pb) == (ca, pa)):
                continue
            lag = rel_b // tau_bin - rel_a // tau_bin
            if abs(lag) <= nd:
                bf[lag + nd] += 1
    np.testing.assert_array_equal(res.numerator, bf)


def test_g2_denominator_matches_g1_product():
    tau_bin, tau_max = 50, 200
    s = _random_conditioned_stream(12)
    ev = detect_events(s, CY, threshold=2, n_cycles=6)
    res = g2_correlation(s, CY, ev, tau_max, tau_bin)

    nbins = CY.detect_ns // tau_bin
    g1 = {0: np.zeros(nbins, dtype=np.int64),
          1: np.zeros(nbins, dtype=np.int64)}
    for ch in (0, 1):
        for t in s.channel_times(ch):
            c, r = divmod(int(t), CY.period)
            p, w = divmod(r, CY.pulse_period)
            rel = w - CY.exc_offset
            if 0 <= rel < CY.detect_ns and p < CY.n_pulses_used \
                    and c < ev.n_cycles and ev.flags[c, p]:
                g1[ch][rel // tau_bin] += 1
    nd = tau_max // tau_bin
    for i, d in enumerate(range(-nd, nd + 1)):
        if d >= 0:
            den = np.dot(g1[0][:nbins - d], g1[1][d:])
        else:
            den = np.dot(g1[0][-d:], g1[1][:nbins + d])
        assert res.denominator[i] == den


def test_g2_stationary_reduction_exact():
    # a comb with one photon per channel in every tau bin of every window
    # has a flat G1, so the general estimator must reduce to the textbook
    # stationary normalization to floating-point exactness
    tau_bin, tau_max = 50, 200
    nbins = CY.detect_ns // tau_bin
    times, chans = [], []
    n_cycles = 4
    for c in range(n_cycles):
        for p in range(CY.n_pulses_used):
            w0 = _window_start(c, p)
            for b in range(nbins):
                times += [w0 + b * tau_bin + 7, w0 + b * tau_bin + 13]
                chans += [0, 1]
    s = _stream(times, chans)
    ev = detect_events(s, CY, threshold=2, n_cycles=n_cycles)
    assert ev.n_events == n_cycles * CY.n_pulses_used
    res = g2_correlation(s, CY, ev, tau_max, tau_bin)

    n_units = ev.n_events
    nd = tau_max // tau_bin
    lags = np.arange(-nd, nd + 1)
    stationary = n_units * res.numerator \
        / ((nbins - np.abs(lags)) * n_units ** 2)
    assert np.all(np.isfinite(res.g2))
    np.testing.assert_allclose(res.g2, stationary, rtol=0, atol=1e-12)


def test_g2_rejects_bad_windows():
    s = _random_conditioned_stream(13)
    ev = detect_events(s, CY, threshold=2, n_cycles=6)
    with pytest.raises(BadWindow):
        g2_correlation(s, CY, ev, tau_max=CY.detect_ns, tau_bin=50)
    with pytest.raises(ValueError):
        g2_correlation(s, CY, ev, tau_max=130, tau_bin=50)


def test_g2_requires_conditioned_pulses():
    s = _random_conditioned_stream(14)
    ev = detect_events(s, CY, threshold=10**6, n_cycles=6)
    with pytest.raises(EmptyCondition):
        g2_correlation(s, CY, ev, tau_max=200, tau_bin=50)


# ------------------------------------------------------------ synthesis

def test_poisson_stream_deterministic_and_bounded():
    a = synth_poisson_stream(40e3, 0.05, seed=5)
    b = synth_poisson_stream(40e3, 0.05, seed=5)
    c = synth_poisson_stream(40e3, 0.05, seed=6)
    np.testing.assert_array_equal(a.times, b.times)
    assert a.times.size != c.times.size or np.any(a.times != c.times)
    assert a.times.min() >= 0
    assert a.times.max() < 0.05 * 1e9
    assert np.all(np.diff(a.times) >= 0)
    # mean count sanity: 2000 expected, allow 5 sigma
    assert abs(a.n_tags - 2000) < 5 * math.sqrt(2000)


def test_emitter_stream_deterministic_and_in_window():
    params = EmitterParams()
    cyc = default_cycle()
    a = synth_emitter_stream(params, cyc, n_cycles=3, seed=9)
    b = synth_emitter_stream(params, cyc, n_cycles=3, seed=9)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.channels, b.channels)
    assert a.n_tags > 0
    c, r = np.divmod(a.times, cyc.period)
    p, w = np.divmod(r, cyc.pulse_period)
    rel = w - cyc.exc_offset
    assert np.all(c < 3)
    assert np.all(p < cyc.n_pulses_used)
    assert np.all((rel >= 0) & (rel < cyc.detect_ns))


# ----------------------------------------------------------- decay fits

def test_lifetime_fit_recovers_generator():
    rng = np.random.default_rng(21)
    tau, amp, bg = 26.0, 400.0, 20.0
    t = np.arange(100) + 0.5
    folded = rng.poisson(amp * np.exp(-t / tau) + bg)
    background = rng.poisson(bg, size=100)
    fit = fit_decay_lifetime(folded, background, bin_ns=1.0,
                             fit_start_ns=10.0)
    assert fit.lifetime == pytest.approx(tau * 1e-9, rel=0.15)
    assert abs(fit.lifetime - tau * 1e-9) < 3 * fit.sigma_lifetime


def test_lifetime_fit_rejects_flat():
    flat = np.full(50, 30.0)
    with pytest.raises(FitDegenerate):
        fit_decay_lifetime(flat, np.zeros(50), bin_ns=1.0)


def test_survival_times_on_analytic_exponential():
    tau0 = 2e-3
    tau_d = np.logspace(-5, 0, 40)
    sig = np.exp(-tau_d / tau0)
    sigma = np.full_like(sig, 0.01)
    st = survival_decay_times(tau_d, sig, sigma, seed=0)
    assert st.t50 == pytest.approx(tau0 * math.log(2), rel=0.02)
    assert st.t10 == pytest.approx(tau0 * math.log(10), rel=0.02)
    assert st.t50_err[0] > 0 and st.t50_err[1] > 0
    again = survival_decay_times(tau_d, sig, sigma, seed=0)
    assert again.t50 == st.t50 and again.t10 == st.t10


def test_survival_times_validation():
    tau_d = np.logspace(-5, 0, 40)
    sig = np.exp(-tau_d / 2e-3)
    sigma = np.full_like(sig, 0.01)
    with pytest.raises(ValueError):
        survival_decay_times(tau_d[:5], sig[:5], sigma[:5])
    with pytest.raises(ValueError):
        survival_decay_times(tau_d - tau_d[0] * 2, sig, sigma)
    with pytest.raises(ValueError):
        survival_decay_times(np.linspace(1, 2, 40), sig, sigma)
    with pytest.raises(NoCrossing):
        survival_decay_times(tau_d, np.linspace(1.0, 0.8, 40), sigma)


def test_aggregate_decay_times():
    gm, lo, hi = aggregate_decay_times(np.array([1e-3, 4e-3]))
    assert gm == pytest.approx(2e-3, rel=1e-12)
    assert lo > 0 and hi > 0 and hi > lo
    gm1, lo1, hi1 = aggregate_decay_times(np.array([5e-3]))
    assert gm1 == pytest.approx(5e-3)
    assert math.isnan(lo1) and math.isnan(hi1)
    with pytest.raises(ValueError):
        aggregate_decay_times(np.array([]))
    with pytest.raises(ValueError):
        aggregate_decay_times(np.array([1e-3, -1.0]))


# ------------------------------------------------------- cycle validation

@pytest.mark.parametrize("kwargs", [
    dict(period=7_000),                      # blocks exceed the period
    dict(exc_offset=800, exc_duration=1_500),  # window exceeds the block
    dict(detect_ns=900),                     # detect/false windows overlap
    dict(n_pulses_used=5),                   # more used than present
    dict(pulse_period=2_000.5),              # non-integer ns
    dict(n_pulses=0),
])
def test_cycle_spec_validation(kwargs):
    base = dict(period=10_000, pulse_period=2_000, n_pulses=4,
                exc_offset=400, exc_duration=1_500, detect_ns=500,
                n_pulses_used=3)
    base.update(kwargs)
    with pytest.raises(ValueError):
        CycleSpec(**base)
