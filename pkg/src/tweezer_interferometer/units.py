"""Physical constants, atomic species and the internal unit system.

Everything inside the simulator is expressed in micrometres and
milliseconds with the reduced Planck constant set to one.  Energies are
therefore measured in units of ``hbar / 1 ms`` (i.e. as angular
frequencies in rad/ms) and masses in units of ``hbar * 1 ms / 1 um**2``.
With these choices a 40K atom has an internal mass of about 0.63 and a
100 uK tweezer is ~1.3e4 energy units deep, which keeps grid amplitudes
and timesteps of order one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# CODATA 2018
HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J / K
G_NEWTON = 6.67430e-11  # m^3 / (kg s^2)
AMU = 1.66053906660e-27  # kg
C_LIGHT = 299792458.0  # m / s
G_EARTH = 9.80665  # m / s^2

DEFAULT_TWEEZER_WAVELENGTH = 1064e-9  # m


@dataclass(frozen=True)
class Species:
    """An atomic species, characterised by its mass in kg."""

    name: str
    mass: float

    def __post_init__(self):
        if not (np.isfinite(self.mass) and self.mass > 0):
            raise ValueError(f"species mass must be positive, got {self.mass!r}")

    @classmethod
    def from_mass_number(cls, name: str, mass_number: float) -> "Species":
        return cls(name, mass_number * AMU)


# Nominal masses (mass number times amu); the mass ratio 171/40 = 4.275 is
# the one quoted for the Yb/K comparison.
K40 = Species.from_mass_number("40K", 40)
YB171 = Species.from_mass_number("171Yb", 171)

SPECIES = {s.name: s for s in (K40, YB171)}


def get_species(name: str) -> Species:
    try:
        return SPECIES[name]
    except KeyError:
        raise ValueError(f"unknown species {name!r}; known: {sorted(SPECIES)}") from None


@dataclass(frozen=True)
class UnitSystem:
    """Linear SI <-> internal conversion (um, ms, hbar = 1)."""

    length_unit: float = 1e-6
    time_unit: float = 1e-3

    @property
    def energy_unit(self) -> float:
        return HBAR / self.time_unit

    @property
    def mass_unit(self) -> float:
        return HBAR * self.time_unit / self.length_unit**2

    def scale(self, kind: str) -> float:
        try:
            return {
                "length": self.length_unit,
                "time": self.time_unit,
                "energy": self.energy_unit,
                "mass": self.mass_unit,
                "frequency": 1.0 / self.time_unit,
            }[kind]
        except KeyError:
            raise ValueError(f"unknown quantity kind {kind!r}") from None

    def to_internal(self, value, kind: str):
        value = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(value)):
            raise ValueError("value must be finite")
        out = value / self.scale(kind)
        return float(out) if out.ndim == 0 else out

    def to_si(self, value, kind: str):
        value = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(value)):
            raise ValueError("value must be finite")
        out = value * self.scale(kind)
        return float(out) if out.ndim == 0 else out


UNITS = UnitSystem()


def to_internal(value, kind: str):
    """Convert an SI value of the given kind (length, time, energy, mass,
    frequency) to internal units."""
    return UNITS.to_internal(value, kind)


def to_si(value, kind: str):
    return UNITS.to_si(value, kind)


def kelvin_to_energy(temperature: float) -> float:
    """Energy k_B * T in joules."""
    return K_B * temperature


def microkelvin(temperature_uK: float) -> float:
    """Internal energy corresponding to ``k_B * temperature_uK * 1e-6``."""
    return to_internal(K_B * temperature_uK * 1e-6, "energy")


def internal_mass(species: Species) -> float:
    return to_internal(species.mass, "mass")


def trap_frequency(depth: float, waist: float, species: Species) -> float:
    """Harmonic angular frequency ``sqrt(4 V0 / (m sigma^2))`` of a Gaussian
    well ``-V0 exp(-2 x^2 / sigma^2)``.

    Units are whatever the inputs are in: SI in gives rad/s out.  Use
    :func:`trap_frequency_internal` for internal units.
    """
    if not (depth > 0 and waist > 0):
        raise ValueError("depth and waist must be positive")
    return math.sqrt(4.0 * depth / (species.mass * waist**2))


def trap_frequency_internal(depth: float, waist: float, species: Species) -> float:
    """Same as :func:`trap_frequency` with depth, waist and result in internal units."""
    if not (depth > 0 and waist > 0):
        raise ValueError("depth and waist must be positive")
    return math.sqrt(4.0 * depth / (internal_mass(species) * waist**2))


def laser_angular_frequency(wavelength: float = DEFAULT_TWEEZER_WAVELENGTH) -> float:
    """Angular frequency (rad/s) of light with the given vacuum wavelength (m)."""
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    return 2.0 * math.pi * C_LIGHT / wavelength
