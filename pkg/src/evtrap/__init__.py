"""Simulation and analysis toolkit for near-surface single-atom trapping.

Modules:
    potentials  state-dependent trapping potential and tweezer calibration
    sslmc       Monte-Carlo loading dynamics and phase-diagram scans
    tunneling   WKB escape times, survival curves, recoil photon budget
    resonator   transmission model, power build-up, cooperativity relations
    timetag     photon time-tag records, event detection, g2 estimation
    cli         configuration-driven command-line front end
"""

__version__ = "0.1.0"
