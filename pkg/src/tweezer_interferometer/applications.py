"""Phase-sensitivity calculators for applications of the interferometer:
gravity and a light-pulse comparison, a Casimir-Polder surface map and a
big-G measurement with a cut-sphere source mass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .potentials import CutSphere, cut_sphere_potential
from .units import G_EARTH, HBAR, K40, YB171, Species, get_species

CP_C4_K40_METAL = 1.64e-55  # J m^4
CP_TRANSITION_LENGTH = 118e-9  # m, retarded regime needs z >> this
CP_Z_RANGE = (1e-6, 20e-6)  # m
TUNGSTEN_DENSITY = 19300.0  # kg/m^3


# -- gravity ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensitivityCase:
    """Arms separated by ``h`` (m) along a uniform acceleration ``a`` (m/s^2),
    held for ``T`` seconds."""

    species: Species = K40
    h: float = 10e-3
    T: float = 10.0
    a: float = G_EARTH

    def __post_init__(self):
        if not (self.h > 0 and self.T > 0):
            raise ValueError("h and T must be positive")


def gravity_phase(case: SensitivityCase) -> float:
    """Phase difference ``m h a T / hbar`` (rad) between the held arms."""
    return case.species.mass * case.h * case.a * case.T / HBAR


def kc_phase(k_eff: float, a: float, T: float) -> float:
    """Light-pulse interferometer phase ``k_eff a T^2`` (rad)."""
    if not (k_eff > 0 and T > 0 and a >= 0):
        raise ValueError("k_eff and T must be positive and a non-negative")
    return k_eff * a * T * T


# -- Casimir-Polder --------------------------------------------------------------------

@dataclass(frozen=True)
class CPCase:
    """Retarded atom-surface potential ``-C4 / z^4`` probed against an arm at
    ``reference`` (m; None for infinitely far) during a hold of ``T`` s."""

    C4: float = CP_C4_K40_METAL
    reference: float | None = 100e-6
    T: float = 10.0

    def __post_init__(self):
        if not (self.C4 > 0 and self.T > 0):
            raise ValueError("C4 and T must be positive")
        if self.reference is not None and not self.reference > 0:
            raise ValueError("reference distance must be positive")


def cp_potential(C4: float, z) -> np.ndarray:
    return -C4 / np.asarray(z, float) ** 4


@dataclass
class CPMap:
    z: np.ndarray
    phase: np.ndarray
    relative_accuracy: np.ndarray
    sigma_phase: float
    acquisition_hours: float | None = None

    def columns(self) -> dict:
        return {"z_um": self.z * 1e6, "phase_rad": self.phase,
                "relative_accuracy": self.relative_accuracy}


def cp_phase_map(case: CPCase, z, sigma_phase: float, run_hours: float | None = None) -> CPMap:
    """Phase ``[U(reference) - U(z)] T / hbar`` for each surface distance ``z`` (m).

    ``sigma_phase`` (rad) is the phase uncertainty of the chosen scenario;
    the relative accuracy is ``sigma_phase / phase``.  ``run_hours`` is
    the duration of one scenario, recorded as acquisition metadata for the
    whole map.  Distances outside 1-20 um or not well inside the reference
    distance are rejected.
    """
    z = np.atleast_1d(np.asarray(z, float))
    lo, hi = CP_Z_RANGE
    if np.any(z < lo * (1 - 1e-12)) or np.any(z > hi * (1 + 1e-12)):
        raise ValueError("z must lie within 1-20 um, where the retarded -C4/z^4 form holds")
    if case.reference is not None and case.reference < 5 * z.max():
        raise ValueError("the reference arm must be far from the surface compared with z")
    if sigma_phase < 0:
        raise ValueError("sigma_phase must be non-negative")
    u_ref = 0.0 if case.reference is None else float(cp_potential(case.C4, case.reference))
    phase = (u_ref - cp_potential(case.C4, z)) * case.T / HBAR
    hours = None if run_hours is None else run_hours * len(z)
    return CPMap(z, phase, sigma_phase / phase, float(sigma_phase), hours)


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x)), np.log(np.abs(np.asarray(y))), 1)[0])


# -- big G ------------------------------------------------------------------------------

def reference_source_mass(mass: float = 253.0, radius: float = 0.20,
                          wedge_deg: float = 141.0) -> CutSphere:
    """Tungsten sphere cut to a wedge of ``wedge_deg`` degrees around an axis
    through its centre; the density follows from mass and shape."""
    return CutSphere.from_mass(mass, radius, math.radians(wedge_deg))


@dataclass(frozen=True)
class BigGCase:
    """Two arms on the bisector of the open gap of a cut sphere.

    ``arm_distances`` (m) are measured from the sphere centre, which lies on
    the edge of the cut, along the direction opposite to the mass bisector.
    """

    source: CutSphere = field(default_factory=reference_source_mass)
    arm_distances: tuple = (1e-3, 50e-3)
    species: Species = K40
    T: float = 10.0

    def arm_points(self) -> list[np.ndarray]:
        b, _, _ = self.source.frame()
        c = np.asarray(self.source.center, float)
        return [c - d * b for d in self.arm_distances]


@dataclass
class BigGReport:
    phases: list
    phase_difference: float
    sigma_phase: float
    relative_G_accuracy: float
    density: float
    mass: float
    duration_offsets_ms: list
    duration_phase_shifts: list

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def big_g_phases(case: BigGCase, sigma_phase: float, n_duration_steps: int = 20,
                 max_duration_offset: float = 20e-3) -> BigGReport:
    """Per-arm phases ``m |U| T / hbar`` and the relative accuracy of G.

    The accuracy is ``sigma_phase`` divided by the phase difference of
    the arms.  The fringe can be scanned by changing the hold time; the
    report lists ``n_duration_steps`` offsets within
    ``+-max_duration_offset`` seconds and the phase shift each produces.
    """
    for p in case.arm_points():
        if case.source.contains(p):
            raise ValueError("an arm lies inside the source mass")
    m = case.species.mass
    phases = [m * abs(cut_sphere_potential(case.source, p)) * case.T / HBAR
              for p in case.arm_points()]
    diff = abs(phases[0] - phases[1])
    offsets = np.linspace(-max_duration_offset, max_duration_offset, n_duration_steps,
                          endpoint=False)
    shifts = diff / case.T * offsets
    return BigGReport(phases, diff, float(sigma_phase), sigma_phase / diff,
                      case.source.density, case.source.mass, [float(v) for v in offsets * 1e3],
                      [float(v) for v in shifts])


def species_gain(heavy: Species | str = YB171, light: Species | str = K40) -> float:
    """Factor by which the relative accuracy improves when ``light`` atoms are
    replaced by ``heavy`` ones at the same phase uncertainty."""
    heavy, light = (get_species(s) if isinstance(s, str) else s for s in (heavy, light))
    return heavy.mass / light.mass
