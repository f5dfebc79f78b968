"""From noisy single runs to a phase uncertainty.

Intensity noise on the tweezer lasers perturbs the splitter and combiner.
A realization table stores noisy loops at many deterministic phases; a
campaign then emulates an experiment that scans the fringe with a given
number of atoms and repetitions and fits the phase.  The spread of fitted
phases over repeated campaigns is the phase uncertainty of a scenario.

This demo builds a small 100-entry table with moderate noise, which takes
about four minutes on one core, and reports all four scenarios.
"""
import tempfile

from tweezer_interferometer.campaign import (SCENARIOS, campaign_table, estimate_uncertainty,
                                             get_scenario)
from tweezer_interferometer.noise import NoiseSpec, relative_shot_noise, shot_noise_phase_sigma

ref = NoiseSpec(hold_T=10.0)
print(f"relative shot noise {relative_shot_noise(ref):.2e}, "
      f"shot-noise phase after a 10 s hold {shot_noise_phase_sigma(ref):.3f} rad")

with tempfile.TemporaryDirectory() as cache:
    table = campaign_table("II", 1e6, n_real=100, directory=cache)
    print(f"table of {len(table.phases)} noisy loops built in {table.build_seconds:.0f} s")
    for label in sorted(SCENARIOS):
        scenario = get_scenario(label)
        res = estimate_uncertainty(table, scenario, n_campaigns=20, phi_physical=0.3)
        value = "undefined" if res.undefined else f"{1e3 * res.uncertainty:6.1f} mrad"
        print(f"scenario {label}: {scenario.atoms} atoms x {scenario.repetitions} "
              f"repetitions, T = {scenario.T} s -> {value}")
