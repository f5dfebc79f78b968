"""Gravity, light-pulse, Casimir-Polder and big-G calculators."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tweezer_interferometer.applications import (CP_C4_K40_METAL, TUNGSTEN_DENSITY, BigGCase,
                                                 CPCase, SensitivityCase, big_g_phases,
                                                 cp_phase_map, cp_potential, gravity_phase,
                                                 kc_phase, loglog_slope,
                                                 reference_source_mass, species_gain)
from tweezer_interferometer.potentials import CutSphere, cut_sphere_potential
from tweezer_interferometer.units import G_EARTH, HBAR, K40, YB171


def test_gravity_phase_closed_form():
    case = SensitivityCase(K40, 10e-3, 10.0, G_EARTH)
    assert gravity_phase(case) == pytest.approx(K40.mass * 10e-3 * G_EARTH * 10.0 / HBAR,
                                                rel=1e-12)
    assert gravity_phase(case) == pytest.approx(6.2e8, rel=0.01)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 0.1), st.floats(0.1, 100.0), st.floats(1.5, 5.0))
def test_gravity_phase_linear_in_h_and_T(h, T, k):
    base = gravity_phase(SensitivityCase(K40, h, T))
    assert gravity_phase(SensitivityCase(K40, k * h, T)) == pytest.approx(k * base, rel=1e-12)
    assert gravity_phase(SensitivityCase(K40, h, k * T)) == pytest.approx(k * base, rel=1e-12)


def test_kc_phase_reference_and_scaling():
    k = 4 * math.pi / 780e-9
    assert kc_phase(k, G_EARTH, 1.0) == pytest.approx(1.6e8, rel=0.03)
    assert kc_phase(k, G_EARTH, 2.0) == pytest.approx(4 * kc_phase(k, G_EARTH, 1.0))
    with pytest.raises(ValueError):
        kc_phase(-1.0, G_EARTH, 1.0)


def test_sensitivity_case_validation():
    with pytest.raises(ValueError):
        SensitivityCase(h=0.0)


def test_cp_phase_at_five_microns():
    m = cp_phase_map(CPCase(CP_C4_K40_METAL, reference=None, T=10.0), [5e-6], 34e-3)
    closed = CP_C4_K40_METAL * 10.0 / (HBAR * (5e-6) ** 4)
    assert m.phase[0] == pytest.approx(closed, rel=1e-12)
    assert m.phase[0] == pytest.approx(24.9, rel=0.02)
    assert m.relative_accuracy[0] == pytest.approx(0.0014, rel=0.30)


def test_cp_reference_arm_correction_is_small():
    far = cp_phase_map(CPCase(reference=None), [5e-6], 0.03).phase[0]
    near = cp_phase_map(CPCase(reference=100e-6), [5e-6], 0.03).phase[0]
    assert near < far and near == pytest.approx(far, rel=1e-4)


def test_cp_loglog_slope_is_minus_four():
    z = np.geomspace(1e-6, 20e-6, 40)
    m = cp_phase_map(CPCase(reference=None), z, 0.03)
    assert loglog_slope(z, m.phase) == pytest.approx(-4.0, abs=0.01)
    assert np.all(np.diff(m.relative_accuracy) > 0)


def test_cp_map_bookkeeping():
    z = np.geomspace(2e-6, 20e-6, 5)
    m = cp_phase_map(CPCase(), z, 0.03, run_hours=0.5)
    assert m.acquisition_hours == pytest.approx(2.5)
    cols = m.columns()
    assert list(cols) == ["z_um", "phase_rad", "relative_accuracy"]
    assert cols["z_um"][0] == pytest.approx(2.0)
    assert cp_potential(1.0, 2.0) == pytest.approx(-1 / 16)


@pytest.mark.parametrize("z", [0.5e-6, 25e-6])
def test_cp_outside_retarded_range_rejected(z):
    with pytest.raises(ValueError):
        cp_phase_map(CPCase(reference=None), [z], 0.03)


def test_cp_reference_too_close_rejected():
    with pytest.raises(ValueError):
        cp_phase_map(CPCase(reference=50e-6), [20e-6], 0.03)
    with pytest.raises(ValueError):
        CPCase(C4=-1.0)


def test_reference_source_mass():
    src = reference_source_mass()
    assert src.mass == pytest.approx(253.0)
    assert src.density == pytest.approx(TUNGSTEN_DENSITY, rel=0.01)
    assert src.wedge_angle == pytest.approx(math.radians(141.0))


def test_big_g_arm_phases():
    rep = big_g_phases(BigGCase(), 4e-3)
    assert rep.phases[0] == pytest.approx(798.0, rel=0.02)
    assert rep.phases[1] == pytest.approx(615.0, rel=0.02)
    assert rep.phase_difference == pytest.approx(abs(rep.phases[0] - rep.phases[1]))
    assert rep.relative_G_accuracy == pytest.approx(4e-3 / rep.phase_difference)
    assert rep.relative_G_accuracy == pytest.approx(2.2e-5, rel=0.05)


def test_big_g_phase_is_linear_in_density_and_time():
    base = BigGCase()
    dense = BigGCase(source=CutSphere(base.source.radius, base.source.wedge_angle,
                                      2 * base.source.density))
    assert big_g_phases(dense, 1e-3).phase_difference == pytest.approx(
        2 * big_g_phases(base, 1e-3).phase_difference, rel=1e-9)
    longer = BigGCase(T=20.0)
    assert big_g_phases(longer, 1e-3).phases[0] == pytest.approx(
        2 * big_g_phases(base, 1e-3).phases[0], rel=1e-12)


def test_big_g_duration_scan():
    rep = big_g_phases(BigGCase(), 4e-3, n_duration_steps=20, max_duration_offset=20e-3)
    assert len(rep.duration_offsets_ms) == 20
    assert rep.duration_offsets_ms[0] == pytest.approx(-20.0)
    slope = rep.phase_difference / 10.0
    assert rep.duration_phase_shifts[-1] == pytest.approx(slope * rep.duration_offsets_ms[-1] * 1e-3)
    d = rep.to_dict()
    assert set(d) >= {"phases", "relative_G_accuracy", "density", "mass"}


def test_big_g_arm_inside_mass_rejected():
    src = reference_source_mass()
    inside = BigGCase(arm_distances=(-0.05, 50e-3))  # on the mass side of the centre
    assert src.contains(inside.arm_points()[0])
    with pytest.raises(ValueError):
        big_g_phases(inside, 4e-3)


def test_arm_potential_matches_module_potential():
    case = BigGCase()
    p = case.arm_points()[1]
    rep = big_g_phases(case, 1e-3)
    expected = K40.mass * abs(cut_sphere_potential(case.source, p)) * case.T / HBAR
    assert rep.phases[1] == pytest.approx(expected, rel=1e-12)


def test_species_gain():
    assert species_gain() == pytest.approx(4.275, abs=5e-4)
    assert species_gain(YB171, K40) == species_gain("171Yb", "40K")
    assert species_gain(K40, K40) == 1.0
