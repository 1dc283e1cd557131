"""Shared physical constants (SI units throughout)."""

import math

PLANCK = 6.62607015e-34  # J s, exact
HBAR = PLANCK / (2.0 * math.pi)
KB = 1.380649e-23  # J/K, exact
ATOMIC_MASS = 1.66053906892e-27  # kg
G_ACCEL = 9.81  # m s^-2

# Wilson score interval at 95 % confidence
Z95 = 1.959963984540054
