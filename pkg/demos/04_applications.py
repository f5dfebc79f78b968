"""What the phase uncertainty buys in three measurements.

Gravity: arms held at different heights accumulate a phase that is huge
compared with the shot-noise phase.  Casimir-Polder: one arm held a few
microns from a surface picks up a phase falling as 1/z^4.  Big G: two
arms at different distances from a tungsten source mass see different
gravitational potentials.

Runs in a few seconds.
"""
import math

import numpy as np

from tweezer_interferometer.applications import (BigGCase, CPCase, SensitivityCase,
                                                 big_g_phases, cp_phase_map, gravity_phase,
                                                 kc_phase, loglog_slope, species_gain)
from tweezer_interferometer.units import G_EARTH, K40

print(f"gravity phase, 10 mm height difference, 10 s hold: "
      f"{gravity_phase(SensitivityCase(K40, 10e-3, 10.0)):.3g} rad")
print(f"light-pulse interferometer, 1 s pulse separation: "
      f"{kc_phase(4 * math.pi / 780e-9, G_EARTH, 1.0):.3g} rad")

sigma2, sigma3 = 34e-3, 4e-3  # representative low-noise uncertainties (rad)
z = np.geomspace(2e-6, 20e-6, 6)
cp = cp_phase_map(CPCase(reference=None), z, sigma2)
print("\n  z (um)   CP phase (rad)   relative accuracy")
for zi, p, a in zip(z, cp.phase, cp.relative_accuracy):
    print(f"  {1e6 * zi:6.2f}   {p:14.4g}   {a:.2e}")
print(f"log-log slope {loglog_slope(z, cp.phase):.3f}")

rep = big_g_phases(BigGCase(), sigma3)
print(f"\nbig G: arm phases {rep.phases[0]:.0f} and {rep.phases[1]:.0f} rad from the "
      f"{rep.mass:.0f} kg source, relative accuracy {rep.relative_G_accuracy:.2e}")
print(f"switching to 171Yb at the same phase noise improves that by {species_gain():.3f}x")
