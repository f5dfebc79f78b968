import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tweezer_interferometer.units import (HBAR, K40, K_B, YB171, Species, get_species,
                                          internal_mass, laser_angular_frequency, microkelvin,
                                          to_internal, to_si, trap_frequency,
                                          trap_frequency_internal)

# subnormals carry fewer significant bits, so a relative round-trip bound does not apply
finite = st.floats(min_value=-1e30, max_value=1e30, allow_nan=False, allow_infinity=False,
                  allow_subnormal=False)


def test_length_and_time_units():
    assert to_internal(1.3e-6, "length") == pytest.approx(1.3, rel=1e-15)
    assert to_internal(10.0, "time") == pytest.approx(1.0e4, rel=1e-15)


def test_energy_round_trip_116_uK():
    e_si = K_B * 116e-6
    assert e_si == pytest.approx(1.601e-27, rel=1e-3)
    back = to_si(to_internal(e_si, "energy"), "energy")
    assert back == pytest.approx(e_si, rel=1e-12)
    assert microkelvin(116.0) == pytest.approx(to_internal(e_si, "energy"), rel=1e-14)


def test_hbar_is_one_internally():
    # an energy of hbar / 1 ms is one internal unit
    assert to_internal(HBAR / 1e-3, "energy") == pytest.approx(1.0, rel=1e-14)


@given(finite, st.sampled_from(["length", "time", "energy", "mass", "frequency"]))
def test_round_trip_is_identity(value, kind):
    back = to_si(to_internal(value, kind), kind)
    assert back == pytest.approx(value, rel=1e-12, abs=0)


def test_rejects_non_finite_and_unknown_kind():
    with pytest.raises(ValueError):
        to_internal(float("nan"), "length")
    with pytest.raises(ValueError):
        to_internal(1.0, "charge")


def test_trap_frequency_reference_value():
    # sqrt(4 V0 / (m sigma^2)) by hand: V0 = 1.6015e-27 J, m = 40 amu
    w = trap_frequency(K_B * 116e-6, 1.3e-6, K40)
    by_hand = math.sqrt(4 * 1.380649e-23 * 116e-6 / (40 * 1.66053906660e-27 * (1.3e-6) ** 2))
    assert w == pytest.approx(by_hand, rel=1e-12)
    assert w == pytest.approx(2.39e5, rel=5e-3)


def test_trap_frequency_internal_matches_si():
    w_si = trap_frequency(K_B * 116e-6, 1.3e-6, K40)
    w_int = trap_frequency_internal(microkelvin(116), 1.3, K40)
    assert w_int == pytest.approx(w_si * 1e-3, rel=1e-12)


def test_trap_frequency_scalings():
    v0, s = K_B * 116e-6, 1.3e-6
    w = trap_frequency(v0, s, K40)
    assert trap_frequency(4 * v0, s, K40) == pytest.approx(2 * w, rel=1e-14)
    assert trap_frequency(v0, 2 * s, K40) == pytest.approx(0.5 * w, rel=1e-14)


@given(st.floats(min_value=0.1, max_value=10.0))
def test_trap_frequency_homogeneity(s):
    v0, sig = K_B * 116e-6, 1.3e-6
    # depth scaled by s^2 and waist by s leave the frequency unchanged
    assert trap_frequency(s * s * v0, s * sig, K40) == pytest.approx(
        trap_frequency(v0, sig, K40), rel=1e-12)


def test_trap_frequency_rejects_bad_inputs():
    with pytest.raises(ValueError):
        trap_frequency(0.0, 1e-6, K40)
    with pytest.raises(ValueError):
        trap_frequency(1e-27, -1e-6, K40)


def test_species():
    assert get_species("40K") is K40
    assert YB171.mass / K40.mass == pytest.approx(4.275, abs=5e-4)
    with pytest.raises(ValueError):
        Species("bad", -1.0)
    with pytest.raises(ValueError):
        get_species("unobtainium")
    assert internal_mass(K40) == pytest.approx(0.6298, rel=1e-3)


def test_laser_frequency_1064():
    assert laser_angular_frequency() == pytest.approx(2 * np.pi * 299792458.0 / 1064e-9)
