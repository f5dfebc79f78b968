"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are printed in the ``acceptance criteria`` section of the pytest
terminal summary.  Criterion 5 needs the eight reduced-scale realization
tables; they are read from the table cache (``$TWEEZER_CACHE_DIR`` or
``~/.cache/tweezer_interferometer``) and built there on first use, which
takes one to two hours on a single core.
"""
import json
import math
import time

import numpy as np
import pytest

from tweezer_interferometer import cli
from tweezer_interferometer.applications import (BigGCase, CPCase, SensitivityCase,
                                                 big_g_phases, cp_phase_map, gravity_phase,
                                                 kc_phase, loglog_slope, species_gain)
from tweezer_interferometer.campaign import (campaign_splitter, campaign_table,
                                             estimate_uncertainty, get_scenario)
from tweezer_interferometer.noise import NoiseSpec, relative_shot_noise, shot_noise_phase_sigma
from tweezer_interferometer.potentials import (CutSphere, GaussianTweezer, TweezerScene,
                                               cut_sphere_potential, point_mass_potential)
from tweezer_interferometer.protocols import (LoopSpec, SplitterSpec, find_avoided_crossing,
                                              run_loop_batch, run_splitter, spectrum_trace)
from tweezer_interferometer.solver import (SpatialGrid, WaveFunction, overlap_fidelity,
                                           propagate, solve_eigenstates)
from tweezer_interferometer.tight_binding import (TorqueSchedule, extract_J_delta,
                                                  integrate_bloch)
from tweezer_interferometer.units import (G_EARTH, K40, internal_mass,
                                          laser_angular_frequency, microkelvin)

pytestmark = pytest.mark.acceptance

N_CAMPAIGNS = 50
PHI_PHYSICAL = 0.3
TABLE_CASES = [("II", 1.0), ("II", 1e7), ("II", 5e7), ("II", 1e8),
               ("III", 1.0), ("III", 1e6), ("III", 1e7), ("III", 5e7)]


def within(value, lo, hi):
    return lo <= value <= hi


def fmt(x, digits=4):
    return "undefined" if x is None else f"{x:.{digits}g}"


# -- shared expensive runs -------------------------------------------------------------

@pytest.fixture(scope="module")
def fine_splits():
    """Default two-tweezer splitter on the 4096-point grid for n = 0 and 1."""
    out = {}
    for n in (0, 1):
        t0 = time.perf_counter()
        res = run_splitter(SplitterSpec(n=n), with_fidelity=False)
        out[n] = (res, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="module")
def table_results():
    """Campaign rows for every table case and scenario (cached tables)."""
    rows, build, overflow = {}, 0.0, {}
    for kind, eta in TABLE_CASES:
        table = campaign_table(kind, eta)
        build += table.build_seconds
        overflow[(kind, eta)] = float(np.mean(table.overflow))
        rows[(kind, eta)] = {
            s: estimate_uncertainty(table, get_scenario(s), N_CAMPAIGNS, PHI_PHYSICAL, seed=0)
            for s in ("1", "2", "3", "4")}
    return rows, build, overflow


# -- criteria ---------------------------------------------------------------------------

def test_criterion_1_splitter_balance(acceptance, fine_splits):
    pops = {n: fine_splits[n][0].populations for n in (0, 1)}
    times = {n: fine_splits[n][1] for n in (0, 1)}
    balanced = all(abs(pops[n][0] - 0.5) <= 0.02 and abs(pops[n][1] - 0.5) <= 0.02
                   for n in (0, 1))
    fast = all(t < 300 for t in times.values())
    acceptance(1, balanced and fast,
               f"n=0 ports {pops[0][0]:.4f}/{pops[0][1]:.4f}, n=1 ports "
               f"{pops[1][0]:.4f}/{pops[1][1]:.4f} (0.5 +- 0.02); runtimes "
               f"{times[0]:.0f} s, {times[1]:.0f} s at 4096 points (< 300 s)")
    assert balanced and fast


def test_criterion_2_phase_to_port(acceptance):
    out = run_loop_batch(LoopSpec(splitter=SplitterSpec()), [0.0, math.pi], [0, 1])
    home, opposite = out.populations[0, 0], out.populations[1, 1]
    ok = home > 0.99 and opposite > 0.99
    acceptance(2, ok, f"phi=0 returns with {home:.5f}, phi=pi exits opposite with "
                      f"{opposite:.5f} (> 0.99)")
    assert ok


def test_criterion_3_three_tweezer(acceptance):
    sp = campaign_splitter("III")
    phases = 2 * math.pi * np.arange(9) / 9
    out = run_loop_batch(LoopSpec(splitter=sp), phases, list(range(9)))
    central = float(np.max(out.central_after_split))
    rms = float(np.sqrt(np.mean((out.signal - np.sin(phases / 2) ** 2) ** 2)))
    ac = find_avoided_crossing(spectrum_trace(sp, 3, 41), 0, 1)
    crossing = ac is not None and {ac.before, ac.after} == {"C", "S"}
    ok = central < 0.01 and rms < 0.02 and crossing
    acceptance(3, ok, f"central {central:.4f} (< 0.01), fringe RMS {rms:.4f} over 9 phases "
                      f"(< 0.02), avoided crossing "
                      + (f"{ac.before}->{ac.after} gap {ac.gap / sp.omega0:.3f} omega0"
                         if ac else "not found"))
    assert ok


def test_criterion_4_sensitivity_anchors(acceptance):
    g = gravity_phase(SensitivityCase(K40, 10e-3, 10.0, G_EARTH))
    kc = kc_phase(4 * math.pi / 780e-9, G_EARTH, 1.0)
    ref = NoiseSpec(hold_T=10.0, P0=100e-6, omega_t=laser_angular_frequency(1064e-9))
    rel = relative_shot_noise(ref)
    absolute = shot_noise_phase_sigma(ref)
    checks = [abs(g / 6.2e8 - 1) <= 0.01, abs(kc / 1.6e8 - 1) <= 0.03,
              abs(rel / 2e-8 - 1) <= 0.10, abs(absolute / 0.2 - 1) <= 0.15]
    acceptance(4, all(checks), f"gravity {g:.4g} rad, KC {kc:.4g} rad, relative shot noise "
                               f"{rel:.3g}, shot-noise phase {absolute:.4f} rad")
    assert all(checks)


def test_criterion_5_table_regression(acceptance, table_results):
    rows, build_seconds, overflow = table_results
    s1 = rows[("II", 1.0)]["1"].row()["uncertainty_mrad"]
    s2 = rows[("II", 1.0)]["2"].row()["uncertainty_mrad"]
    fails = [rows[("III", eta)]["1"].fail_ratio for eta in (1.0, 1e6, 1e7, 5e7)]
    targets = [0.002, 0.016, 0.13, 0.32]
    bands = all(t / 2 <= f <= 2 * t for f, t in zip(fails, targets))
    ordered = all(a < b for a, b in zip(fails, fails[1:]))
    undef = {case: [rows[case][s].undefined for s in "1234"]
             for case in (("II", 1e8), ("III", 5e7))}
    all_undef = all(all(v) for v in undef.values())
    ok = (s1 is not None and within(s1, 44, 175) and s2 is not None and within(s2, 17, 68)
          and bands and ordered and all_undef and build_seconds < 4 * 3600)
    acceptance(5, ok,
               f"s1 {fmt(s1)} mrad [44, 175], s2 {fmt(s2)} mrad [17, 68]; fail ratios "
               + ", ".join(f"{100 * f:.2f}%" for f in fails)
               + f" (x2 bands, ordered: {ordered}); undefined in scenarios 1-4: II 1e8 "
               f"{undef[('II', 1e8)]}, III 5e7 {undef[('III', 5e7)]} (grid overflow in "
               f"{overflow[('II', 1e8)]:.0%} / {overflow[('III', 5e7)]:.0%} of runs); "
               f"table build {build_seconds / 3600:.2f} h")
    assert s1 is not None and within(s1, 44, 175)
    assert s2 is not None and within(s2, 17, 68)
    assert bands and ordered
    assert all_undef
    assert build_seconds < 4 * 3600


def test_criterion_6_casimir_polder(acceptance, table_results):
    rows, _, _ = table_results
    sigma = rows[("II", 1.0)]["2"].uncertainty
    z = np.geomspace(1e-6, 20e-6, 40)
    m5 = cp_phase_map(CPCase(reference=None, T=10.0), [5e-6], sigma)
    slope = loglog_slope(z, cp_phase_map(CPCase(reference=None), z, sigma).phase)
    phase, acc = m5.phase[0], m5.relative_accuracy[0]
    ok = abs(phase / 24.9 - 1) <= 0.02 and abs(acc / 0.0014 - 1) <= 0.30 and abs(slope + 4) <= 0.01
    acceptance(6, ok, f"phase(5 um) {phase:.3f} rad, relative accuracy {acc:.5f} with "
                      f"scenario-2 sigma {1e3 * sigma:.1f} mrad, slope {slope:.4f}")
    assert ok


def test_criterion_7_big_g(acceptance, table_results):
    rows, _, _ = table_results
    sigma3 = rows[("II", 1.0)]["3"].uncertainty
    rep = big_g_phases(BigGCase(), sigma3)
    sphere = CutSphere(0.2, 2 * math.pi, 19300.0)
    r = 0.3
    reduction = abs(cut_sphere_potential(sphere, (r, 0.0, 0.0))
                    / point_mass_potential(sphere.mass, r) - 1)
    gain = species_gain()
    checks = [abs(rep.phases[0] / 798 - 1) <= 0.02, abs(rep.phases[1] / 615 - 1) <= 0.02,
              reduction <= 1e-4,
              within(rep.relative_G_accuracy, 2.2e-5 / 2, 2.2e-5 * 2),
              f"{gain:.4g}" == "4.275"]
    acceptance(7, all(checks),
               f"arm phases {rep.phases[0]:.1f}, {rep.phases[1]:.1f} rad; full-sphere "
               f"deviation {reduction:.1e}; dG/G {rep.relative_G_accuracy:.3g} with scenario-3 "
               f"sigma {1e3 * sigma3:.2f} mrad; mass ratio {gain:.4g}")
    assert all(checks)


def _bloch_oracle_deviation():
    V0, sigma, d = microkelvin(116.0), 1.3, 1.35
    grid = SpatialGrid.centered(8.0, 512)
    T, det0 = 3.0, 8e-4
    scene = TweezerScene((GaussianTweezer(V0, sigma, lambda t: -d / 2),
                          GaussianTweezer(V0, sigma, lambda t: d / 2,
                                          lambda t: det0 * (1.0 - 2.0 * t / T))), T, K40)
    ts = np.linspace(0.0, T, 13)
    samples = [extract_J_delta(scene, t, grid, 0, "fourier") for t in ts]
    P = TorqueSchedule.from_samples(ts, [s[0] for s in samples], [s[1] for s in samples])
    tb_t, v = integrate_bloch([0.0, 0.0, -1.0], P, 0.0, T, 1e-3)
    sym = scene.tweezers[0].evaluate(grid.x, 0) + GaussianTweezer(
        V0, sigma, lambda t: d / 2).evaluate(grid.x, 0)
    s, a = solve_eigenstates(sym, grid, K40, 2, "fourier").states
    left, right = (s.psi + a.psi) / math.sqrt(2), (s.psi - a.psi) / math.sqrt(2)
    if np.sum(np.abs(left[grid.x < 0]) ** 2) < np.sum(np.abs(right[grid.x < 0]) ** 2):
        left, right = right, left
    psi, right = WaveFunction(left, grid), WaveFunction(right, grid)
    worst = 0.0
    for t0, t1 in zip(ts[:-1], ts[1:]):
        psi = propagate(psi, scene, t0, t1, 1e-4).state
        p_tb = 0.5 * (1 + np.interp(t1, tb_t, v[:, 2]))
        worst = max(worst, abs(abs(overlap_fidelity(right, psi)) ** 2 - p_tb))
    return worst


def test_criterion_8_property_suites(acceptance, fine_splits, tmp_path):
    # unitarity over full protocols
    drift = max(abs(float(fine_splits[n][0].state.norm()) - 1) for n in (0, 1))
    three = run_splitter(campaign_splitter("III"), with_fidelity=False)
    drift = max(drift, abs(float(three.state.norm()) - 1))
    # dt halving on the default two-tweezer splitter and the three-tweezer table splitter
    fine = SplitterSpec()
    half = SplitterSpec(dt=fine.timestep / 2)
    dt_two = float(np.max(np.abs(run_splitter(half, with_fidelity=False).populations
                                 - fine_splits[0][0].populations)))
    sp3 = campaign_splitter("III")
    dt_three = float(np.max(np.abs(
        run_splitter(campaign_splitter("III", dt=sp3.timestep / 2), with_fidelity=False)
        .populations - three.populations)))
    # two-level oracle
    bloch = _bloch_oracle_deviation()
    # harmonic eigenvalues
    omega, m = 50.0, internal_mass(K40)
    g = SpatialGrid.centered(6.0, 512)
    es = solve_eigenstates(0.5 * m * omega**2 * g.x**2, g, K40, 6, "fourier")
    harmonic = float(np.max(np.abs(es.energies / (omega * (np.arange(6) + 0.5)) - 1)))
    # replay of a seeded noisy loop
    cfg = {"schema_version": 1, "command": "loop", "seed": 11,
           "params": {"splitter": {"n_points": 512, "margin": 4.0, "dt": 1e-3, "T_proc": 2.0},
                      "noise": {"eta": 1e7}, "phi_det": 1.0}}
    first = cli.execute(cfg, tmp_path / "run")
    try:
        second = cli.replay(tmp_path / "run" / "manifest.json", tmp_path / "again")
        replay_ok = second["artifacts"] == first["artifacts"] and (
            (tmp_path / "run" / "loop.json").read_bytes()
            == (tmp_path / "again" / "loop.json").read_bytes())
    except cli.ReproducibilityError:
        replay_ok = False
    checks = [drift < 1e-8, dt_two < 1e-4, dt_three < 1e-4, bloch < 0.05, harmonic < 1e-4,
              replay_ok]
    acceptance(8, all(checks),
               f"norm drift {drift:.1e}; dt halving {dt_two:.1e} (two), {dt_three:.1e} (three); "
               f"Bloch oracle {bloch:.4f}; harmonic {harmonic:.1e}; replay bit-exact {replay_ok}")
    assert all(checks)


def test_acceptance_rows_are_serialisable(table_results):
    rows, _, _ = table_results
    flat = [res.row() for case in rows.values() for res in case.values()]
    assert len(flat) == 4 * len(TABLE_CASES)
    json.dumps(flat)
