"""Reduced loading phase diagram over detuning and intensity.

A coarse 9x9 grid at 100 trajectories per cell; takes a couple of minutes
on a laptop. The full-scale map is `evtrap scan` with the default
config.
"""

import time

import numpy as np

from evtrap.config import build_sim_params, build_stack, load_config
from evtrap.sslmc import scan_detuning_intensity

cfg = load_config(None)
stack = build_stack(cfg)
params = build_sim_params(cfg, n_traj=100)

det = np.linspace(0.0, 400e6, 9)
sat = np.logspace(3, 8, 9)

t0 = time.time()
diagram = scan_detuning_intensity(stack, params, det, sat)
print(f"{det.size * sat.size} cells in {time.time() - t0:.1f} s")

print("\ntrapped fraction (rows: s0 bottom-up, cols: detuning)")
print("        " + "".join(f"{d/1e6:7.0f}" for d in det) + "   MHz")
for i in range(sat.size - 1, -1, -1):
    row = "".join(f"{v:7.2f}" for v in diagram.trapped[i])
    flag = " *" if diagram.destroyed[i].any() else ""
    print(f"{sat[i]:8.1e}{row}{flag}")
print("(* = trap destroyed somewhere in the row)")

best = np.unravel_index(np.argmax(diagram.trapped), diagram.trapped.shape)
print(f"\nbest cell: s0 = {sat[best[0]]:.2e}, "
      f"detuning = {det[best[1]]/1e6:.0f} MHz, "
      f"trapped = {diagram.trapped[best]:.2f} "
      f"+- {diagram.wilson_trapped[best]:.2f}")
print(f"mean energy / depth there: "
      f"{diagram.mean_energy_over_depth[best]:.2f}")
