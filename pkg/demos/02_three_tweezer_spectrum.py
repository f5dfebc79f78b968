"""Three-tweezer splitting seen through the instantaneous spectrum.

The atom starts in the central tweezer.  The two outer tweezers are
detuned below it and the detuning is ramped away while they approach.
The lowest eigenstate changes from central (C) to the symmetric outer
superposition (S) through an avoided crossing, so an adiabatic sweep
transfers the atom onto the outer pair.  Whatever is left in the centre
is the failure probability of a run.

Runs on the reduced grid in one to two minutes.
"""
import math

import numpy as np

from tweezer_interferometer.campaign import campaign_splitter
from tweezer_interferometer.protocols import (LoopSpec, find_avoided_crossing, run_loop_batch,
                                              spectrum_trace)

splitter = campaign_splitter("III")
trace = spectrum_trace(splitter, n_levels=3, n_times=41)
# characters of the three lowest branches: C central, S/A symmetric and
# antisymmetric outer pair, M mixed (near the crossing)
print("  t (ms)   (E1 - E0) / hbar omega0   characters")
for t, e, ch in list(zip(trace.times, trace.energies, trace.character))[::5]:
    print(f"  {t:6.1f}   {(e[1] - e[0]) / splitter.omega0:22.3f}   {''.join(ch)}")

ac = find_avoided_crossing(trace, 0, 1)
print(f"\navoided crossing at t = {ac.time:.1f} ms: {ac.before} -> {ac.after}, "
      f"gap {ac.gap / splitter.omega0:.3f} hbar*omega0")

phases = np.array([0.0, math.pi / 2, math.pi])
out = run_loop_batch(LoopSpec(splitter=splitter), phases, [1, 2, 3])
for phi, c, s in zip(phases, out.central_after_split, out.signal):
    print(f"phi = {phi:4.2f}: left in the centre {c:.4f}, outer signal {s:.4f} "
          f"(ideal {math.sin(phi / 2) ** 2:.4f})")
