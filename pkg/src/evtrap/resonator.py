"""Resonator optics: transmission spectra, power budget and cavity QED rates.

A whispering-gallery style microresonator side-coupled to a bus waveguide is
described by its external coupling rate kappa_ex, intrinsic loss rate kappa_i
and the backscattering rate h that lifts the degeneracy of the two travelling
modes.  All rates are ordinary frequencies in Hz (not angular); g denotes the
single-photon coupling rate on the same convention.

The normalised transmission past the resonator at detuning delta from the
mode is

    T(delta) = | 1 - 2 i kappa_ex (i kappa + delta) /
                    ((i kappa + delta)^2 - h^2) |^2

with kappa = kappa_ex + kappa_i the total half linewidth.  The circulating
power on resonance follows from the input power, a fixed input-path loss and
the resonator finesse; far from resonance it rolls off as a Lorentzian in
(delta/kappa).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadWindow, FitDegenerate, NonPhysical

# free-space excited state lifetime used to convert modified lifetimes into
# cooperativities: (2 gamma)^-1 with gamma the half linewidth
TAU_FREE = 26.2e-9


@dataclass(frozen=True)
class ResonatorParams:
    """Loss rates, geometry and field parameters of the resonator.

    kappa_ex, kappa_i, h_backscatter and fsr are ordinary frequencies (Hz);
    mode_area is the effective cross section of the mode (m^2), lambda_ev the
    evanescent intensity decay length (m), g0_max the coupling rate
    extrapolated to the surface (Hz) and zeeman_floor the minimum effective
    transition strength set by the magnetic sublevel distribution.
    """

    kappa_ex: float
    kappa_i: float
    h_backscatter: float = 0.0
    fsr: float = 1.36e12
    mode_area: float = 400e-9 * 450e-9
    lambda_ev: float = 86e-9
    g0_max: float = 0.0
    zeeman_floor: float = 0.816

    def __post_init__(self):
        if self.kappa_ex < 0 or self.kappa_i < 0:
            raise ValueError("loss rates must be non-negative")
        if self.kappa_ex + self.kappa_i <= 0:
            raise ValueError("total linewidth must be positive")
        if self.fsr <= 0 or self.mode_area <= 0 or self.lambda_ev <= 0:
            raise ValueError("fsr, mode_area and lambda_ev must be positive")

    @property
    def kappa(self) -> float:
        return self.kappa_ex + self.kappa_i


def transmission(delta, params: ResonatorParams):
    """Normalised power transmission past the resonator.

    delta is the laser detuning from the unperturbed mode in Hz (scalar or
    array).  Backscattering splits the resonance into hybridised standing-wave
    modes at +-h.
    """
    delta = np.asarray(delta, dtype=float)
    kappa = params.kappa
    z = 1j * kappa + delta
    t = 1.0 - 2j * params.kappa_ex * z / (z * z - params.h_backscatter ** 2)
    return np.abs(t) ** 2


def finesse(params: ResonatorParams) -> float:
    """Finesse = free spectral range over the full linewidth 2 kappa."""
    return params.fsr / (2.0 * params.kappa)


def circulating_power(p_in: float, detuning: float, params: ResonatorParams,
                      input_loss: float = 0.5) -> float:
    """Power circulating in the resonator for a given input power.

    detuning is the drive offset from resonance in Hz.  input_loss is the
    fraction of power surviving the input path to the coupling point.  The
    build-up factor on resonance is finesse/pi, rolled off by a Lorentzian in
    detuning/kappa.
    """
    if p_in < 0:
        raise ValueError("input power must be non-negative")
    if not 0.0 < input_loss <= 1.0:
        raise ValueError("input_loss must lie in (0, 1]")
    lor = 1.0 / (1.0 + (detuning / params.kappa) ** 2)
    return p_in * input_loss * (finesse(params) / math.pi) * lor


def peak_intensity(p_circ: float, params: ResonatorParams) -> float:
    """Peak intensity of the mode for a given circulating power."""
    return p_circ / params.mode_area


def cooperativity(g: float, params: ResonatorParams, gamma: float) -> float:
    """Single-atom cooperativity C = g^2 / (kappa gamma), all rates in Hz."""
    if g < 0 or gamma <= 0:
        raise ValueError("g must be non-negative and gamma positive")
    return g * g / (params.kappa * gamma)


def coupling_from_cooperativity(c: float, params: ResonatorParams,
                                gamma: float) -> float:
    """Invert cooperativity(): g = sqrt(C kappa gamma)."""
    if c < 0 or gamma <= 0:
        raise ValueError("C must be non-negative and gamma positive")
    return math.sqrt(c * params.kappa * gamma)


def lifetime_to_cooperativity(tau_e: float, tau_free: float = TAU_FREE
                              ) -> float:
    """Cooperativity from a Purcell-shortened excited-state lifetime.

    The enhanced decay rate obeys Gamma/gamma = 1 + C, so
    C = tau_free / tau_e - 1.  Raises NonPhysical for lifetimes longer than
    the free-space value.
    """
    if tau_e <= 0:
        raise ValueError("lifetime must be positive")
    if tau_e > tau_free:
        raise NonPhysical(
            f"lifetime {tau_e:.3e} s exceeds the free-space value "
            f"{tau_free:.3e} s")
    return tau_free / tau_e - 1.0


def coupling_at_distance(x, params: ResonatorParams):
    """Coupling rate band at distance x from the surface.

    Returns (g_max, g_floor): the maximally polarised coupling
    g0_max exp(-x/lambda_ev) and the Zeeman-averaged floor obtained by
    scaling with the effective transition strength.  The field amplitude
    decays with twice the intensity decay length.
    """
    x = np.asarray(x, dtype=float)
    g_max = params.g0_max * np.exp(-x / params.lambda_ev)
    return g_max, params.zeeman_floor * g_max


@dataclass(frozen=True)
class SpectrumFit:
    kappa_ex: float
    kappa_i: float
    h_backscatter: float
    delta0: float
    sigma: tuple[float, float, float, float]
    residual: float
    params: ResonatorParams


def fit_spectrum(delta, trans, init: ResonatorParams | None = None,
                 fsr: float = 1.36e12) -> SpectrumFit:
    """Least-squares fit of the transmission model to a measured spectrum.

    delta and trans are matching arrays of detuning (Hz) and normalised
    transmission.  The model adds a centre offset delta0 to the three rate
    parameters.  1-sigma uncertainties come from the Jacobian at the optimum.
    Raises BadWindow when the data do not bracket a transmission minimum and
    FitDegenerate when the problem is rank deficient.
    """
    from scipy.optimize import least_squares

    delta = np.asarray(delta, dtype=float)
    trans = np.asarray(trans, dtype=float)
    if delta.shape != trans.shape or delta.ndim != 1 or delta.size < 8:
        raise ValueError("need matching 1-d arrays with at least 8 points")
    imin = int(np.argmin(trans))
    if imin == 0 or imin == delta.size - 1:
        raise BadWindow("spectrum window does not bracket a transmission "
                        "minimum")

    if init is not None:
        x0 = [init.kappa_ex, init.kappa_i, init.h_backscatter,
              float(delta[imin])]
    else:
        # width at half depth sets the kappa scale
        span = float(delta.max() - delta.min())
        depth = 1.0 - float(trans[imin])
        half = trans < 1.0 - 0.5 * depth
        width = float(delta[half].max() - delta[half].min()) if half.any() \
            else 0.2 * span
        kappa0 = max(width / 2.0, 1e-6 * span)
        x0 = [0.5 * kappa0, 0.5 * kappa0, 0.3 * kappa0, float(delta[imin])]

    def model(p):
        kex, ki, h, d0 = p
        pr = ResonatorParams(kappa_ex=kex, kappa_i=ki, h_backscatter=h,
                             fsr=fsr)
        return transmission(delta - d0, pr)

    def residuals(p):
        return model(p) - trans

    scale = float(np.max(np.abs(delta)))
    sol = least_squares(residuals, x0,
                        bounds=([0.0, 0.0, 0.0, -2 * scale],
                                [np.inf, np.inf, np.inf, 2 * scale]),
                        xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if not sol.success:
        raise FitDegenerate(f"spectrum fit failed: {sol.message}")
    jac = sol.jac
    sv = np.linalg.svd(jac, compute_uv=False)
    if sv[0] <= 0 or sv[-1] / sv[0] < 1e-12:
        raise FitDegenerate("spectrum fit Jacobian is rank deficient")
    dof = max(delta.size - 4, 1)
    var = 2.0 * sol.cost / dof
    cov = var * np.linalg.pinv(jac.T @ jac)
    sigma = tuple(np.sqrt(np.clip(np.diag(cov), 0.0, None)))
    kex, ki, h, d0 = sol.x
    fitted = ResonatorParams(kappa_ex=kex, kappa_i=ki, h_backscatter=h,
                             fsr=fsr)
    resid = math.sqrt(float(np.mean(sol.fun ** 2)))
    return SpectrumFit(kappa_ex=kex, kappa_i=ki, h_backscatter=h, delta0=d0,
                       sigma=sigma, residual=resid, params=fitted)
