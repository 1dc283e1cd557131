"""Print the near-surface trap figures for the calibrated tweezer stack.

Runs the dark stack (no loading field), then switches the loading field on
at the operating point to show what the repulsive barrier does to the F=1
and F=2 potentials.
"""

import numpy as np

from evtrap.config import build_stack, load_config
from evtrap.potentials import F1, F2, total_potential, trap_metrics

cfg = load_config(None)
stack = build_stack(cfg)

m = trap_metrics(stack, f_state=F2)
print("dark stack (tweezer + surface forces only)")
print(f"  trap minimum      {m.x_min * 1e9:8.2f} nm")
print(f"  trap frequency    {m.freq_x / 1e3:8.1f} kHz")
print(f"  depth to vacuum   {m.depth_to_vacuum / 6.62607015e-34 / 1e6:8.2f} MHz*h")
print(f"  barrier to chip   {m.barrier_to_surface / 6.62607015e-34 / 1e6:8.2f} MHz*h")

# operating point of the loading pulse
loading = build_stack(cfg, saturation=2e5, detuning_mhz=250.0)
x = np.linspace(20e-9, 600e-9, 30)
u1 = total_potential(x, F1, loading) / 6.62607015e-34 / 1e6
u2 = total_potential(x, F2, loading) / 6.62607015e-34 / 1e6
print("\nloading field on (s0 = 2e5, detuning 250 MHz)")
print("   x nm    U_F1 MHz   U_F2 MHz")
for xi, a, b in zip(x * 1e9, u1, u2):
    print(f"{xi:7.1f} {a:10.3f} {b:10.3f}")

# where does the first trap site sit across tweezer wavelengths
print("\ntweezer wavelength scan (dark stack)")
for lam in (815, 820, 825, 830, 835, 840, 845):
    st = build_stack(cfg, wavelength_m=lam * 1e-9)
    mm = trap_metrics(st, f_state=F2)
    print(f"  {lam} nm: x_min {mm.x_min * 1e9:6.1f} nm, "
          f"freq {mm.freq_x / 1e3:6.1f} kHz")
