"""Two-level model: Bloch integration, J/Delta extraction and the TDSE oracle."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tweezer_interferometer.potentials import GaussianTweezer, TweezerScene, static_scene
from tweezer_interferometer.solver import (SpatialGrid, WaveFunction, overlap_fidelity,
                                           propagate, solve_eigenstates)
from tweezer_interferometer.tight_binding import (SubspaceNotIsolated, TorqueSchedule,
                                                  bloch_vector, extract_J_delta,
                                                  integrate_bloch, misalignment_angle,
                                                  tight_binding_populations)
from tweezer_interferometer.units import K40, microkelvin, trap_frequency_internal

V0 = microkelvin(116.0)
SIGMA = 1.3
W0 = trap_frequency_internal(V0, SIGMA, K40)
GRID = SpatialGrid.centered(8.0, 512)
D_TB = 1.35  # separation with an isolated, resolvable pair at this depth


def test_precession_about_z():
    delta = 3.0
    t, v = integrate_bloch([1.0, 0.0, 0.0], TorqueSchedule.constant(0.0, delta), 0.0, 2.0, 1e-3)
    assert np.allclose(v[:, 0], np.cos(delta * t), atol=1e-9)
    assert np.allclose(v[:, 1], np.sin(delta * t), atol=1e-9)
    assert np.allclose(v[:, 2], 0.0, atol=1e-12)


def smooth_ramp(J, delta0, T):
    """Torque rotating from (0, 0, delta0) to (J, 0, 0) with a sin^2 profile."""
    s = lambda t: math.sin(0.5 * math.pi * min(max(t / T, 0.0), 1.0)) ** 2
    return TorqueSchedule(lambda t: J * s(t), lambda t: delta0 * (1.0 - s(t)))


def test_adiabatic_ramp_follows_torque():
    P = smooth_ramp(2.0, 2.0, 40.0)
    _, v = integrate_bloch([0.0, 0.0, 1.0], P, 0.0, 40.0, 1e-2)
    assert np.linalg.norm(v[-1] - np.array([1.0, 0.0, 0.0])) < 0.02


def test_sudden_ramp_leaves_vector_unchanged():
    dt = 1e-3
    P = TorqueSchedule(lambda t: 5.0 * t / dt, lambda t: 5.0 * (1 - t / dt))
    _, v = integrate_bloch([0.0, 0.0, 1.0], P, 0.0, dt, dt)
    assert np.linalg.norm(v[-1] - v[0]) < 2 * dt * 5.0


def test_misalignment_shrinks_with_ramp_doubling():
    angles = []
    for T in (5.0, 10.0, 20.0, 40.0):
        _, v = integrate_bloch([0.0, 0.0, 1.0], smooth_ramp(2.0, 2.0, T), 0.0, T, 1e-2)
        angles.append(misalignment_angle(v[-1], [2.0, 0.0, 0.0]))
    assert all(a > b for a, b in zip(angles, angles[1:]))


def test_under_resolved_step_rejected():
    with pytest.raises(ValueError):
        integrate_bloch([0, 0, 1], TorqueSchedule.constant(100.0, 0.0), 0.0, 1.0, 0.01)
    with pytest.raises(ValueError):
        integrate_bloch([0, 0, 2], TorqueSchedule.constant(1.0, 0.0), 0.0, 1.0, 0.01)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 2 * math.pi), st.floats(0, math.pi))
def test_pure_state_norm_conserved(J, delta, phi, theta):
    v0 = [math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)]
    _, v = integrate_bloch(v0, TorqueSchedule.constant(J, delta), 0.0, 3.0, 5e-3)
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 5), st.floats(-5, 5), st.floats(0, 3))
def test_rabi_formula_matches_integration(J, delta, t_end):
    if t_end < 1e-2:
        t_end = 1e-2
    _, v = integrate_bloch([0, 0, -1], TorqueSchedule.constant(J, delta), 0.0, t_end, 1e-3)
    p2 = 0.5 * (1 + v[-1, 2])
    assert p2 == pytest.approx(float(tight_binding_populations(J, delta, t_end)), abs=1e-6)


def test_bloch_vector_convention():
    assert np.allclose(bloch_vector(1, 0), [0, 0, -1])
    assert np.allclose(bloch_vector(0, 1), [0, 0, 1])
    assert np.allclose(bloch_vector(1, 1), [1, 0, 0])
    assert np.allclose(bloch_vector(1, 1j), [0, 1, 0])


def pair_J(d):
    return extract_J_delta(static_scene([-d / 2, d / 2], V0, SIGMA, K40), 0.0, GRID, 0,
                           "fourier")[0]


def test_J_matches_gap_and_falls_with_separation():
    V = static_scene([-D_TB / 2, D_TB / 2], V0, SIGMA, K40).tweezer_potential(GRID.x, 0.0)
    e = solve_eigenstates(V, GRID, K40, 2, "fourier").energies
    J = pair_J(D_TB)
    assert J == pytest.approx(e[1] - e[0], rel=1e-12)
    Js = [pair_J(d) for d in (1.35, 1.37, 1.39)]
    assert Js[0] > Js[1] > Js[2] > 0
    # roughly exponential: the log-ratios of equal steps are comparable
    r1, r2 = math.log(Js[0] / Js[1]), math.log(Js[1] / Js[2])
    assert 0.5 < r1 / r2 < 2.0


def test_equal_depths_give_zero_detuning():
    _, delta = extract_J_delta(static_scene([-D_TB / 2, D_TB / 2], V0, SIGMA, K40), 0.0,
                               GRID, 0, "fourier")
    assert abs(delta) < 1e-6 * W0


def test_detuning_sign_and_full_splitting():
    for det in (4e-4, -4e-4):
        sc = static_scene([-D_TB / 2, D_TB / 2], V0, SIGMA, K40, [0.0, det])
        J, delta = extract_J_delta(sc, 0.0, GRID, 0, "fourier")
        assert math.copysign(1, delta) == math.copysign(1, det)  # shallower right: higher
        e = solve_eigenstates(sc.tweezer_potential(GRID.x, 0.0), GRID, K40, 2, "fourier").energies
        assert math.hypot(J, delta) == pytest.approx(e[1] - e[0], rel=0.05)


def test_merged_wells_rejected():
    with pytest.raises(SubspaceNotIsolated):
        extract_J_delta(static_scene([-0.6, 0.6], V0, SIGMA, K40), 0.0, GRID, 0, "fourier")
    with pytest.raises(ValueError):
        extract_J_delta(static_scene([0.0], V0, SIGMA, K40), 0.0, GRID, 0, "fourier")


def localised_pair(d):
    V = static_scene([-d / 2, d / 2], V0, SIGMA, K40).tweezer_potential(GRID.x, 0.0)
    s, a = solve_eigenstates(V, GRID, K40, 2, "fourier").states
    left, right = (s.psi + a.psi) / math.sqrt(2), (s.psi - a.psi) / math.sqrt(2)
    if np.sum(np.abs(left[GRID.x < 0]) ** 2) < np.sum(np.abs(right[GRID.x < 0]) ** 2):
        left, right = right, left
    return WaveFunction(left, GRID), WaveFunction(right, GRID)


def test_tdse_agrees_with_bloch_oracle_under_detuning_ramp():
    # the right beam's detuning sweeps through resonance at fixed separation
    T, det0 = 3.0, 8e-4
    det = lambda t: det0 * (1.0 - 2.0 * t / T)
    scene = TweezerScene((GaussianTweezer(V0, SIGMA, lambda t: -D_TB / 2),
                          GaussianTweezer(V0, SIGMA, lambda t: D_TB / 2, det)), T, K40)
    ts = np.linspace(0.0, T, 13)
    samples = [extract_J_delta(scene, t, GRID, 0, "fourier") for t in ts]
    P = TorqueSchedule.from_samples(ts, [s[0] for s in samples], [s[1] for s in samples])
    tb_t, v = integrate_bloch([0.0, 0.0, -1.0], P, 0.0, T, 1e-3)
    # populations of the localised pair, which is the two-level basis here
    left, right = localised_pair(D_TB)
    psi, worst = left, 0.0
    for t0, t1 in zip(ts[:-1], ts[1:]):
        psi = propagate(psi, scene, t0, t1, 1e-4).state
        p_tdse = abs(overlap_fidelity(right, psi)) ** 2
        p_tb = 0.5 * (1 + np.interp(t1, tb_t, v[:, 2]))
        worst = max(worst, abs(p_tdse - p_tb))
    assert worst < 0.05
