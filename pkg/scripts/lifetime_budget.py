"""Tunneling lifetimes vs binding energy and the recoil-heating budget."""

import numpy as np

from evtrap.config import build_stack, load_config
from evtrap.potentials import PLANCK
from evtrap.tunneling import (recoil_photon_budget, survival_curve,
                              wkb_tunneling_time)

cfg = load_config(None)
stack = build_stack(cfg)

mass = stack.atom.mass
e_rec = (PLANCK / stack.atom.wavelength) ** 2 / (2 * mass)

print("energy below barrier top -> WKB escape time")
de_mhz = np.linspace(-5.0, -1.0, 17)
for de in de_mhz:
    r = wkb_tunneling_time(stack, de * 1e6 * PLANCK)
    n = recoil_photon_budget(de * 1e6 * PLANCK, e_rec)
    print(f"  dE/h = {de:5.2f} MHz   t = {r.time:10.3e} s   "
          f"S = {r.action:6.2f}   N_recoil = {n:6.1f}")

# ensemble survival for a spread of binding energies, equal weights
samples = np.arange(-5.0, -0.9, 0.5) * 1e6 * PLANCK
tau = np.logspace(-4, 1, 60)
surv, _ = survival_curve(stack, samples, None, tau)
print("\nsurvival of an equal-weight energy mixture")
for t, s in zip(tau[::6], surv[::6]):
    print(f"  tau_d = {t:9.3e} s   S = {s:.3f}")
