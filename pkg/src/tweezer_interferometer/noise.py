"""Tweezer intensity noise: common-mode white amplitude noise and the
shot-noise-limited differential phase accumulated while holding the arms.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .units import (HBAR, K40, K_B, Species, get_species, laser_angular_frequency,
                    trap_frequency)

REFERENCE_HOLD_DEPTH = 8.6e-6  # K
REFERENCE_HOLD_WAIST = 1.0e-6  # m
REFERENCE_POWER = 100e-6  # W


@dataclass(frozen=True)
class NoiseSpec:
    """Noise parameters (SI).

    ``eta`` is the common-mode noise power in units of the shot-noise level
    ``2 hbar omega_t P0``.  ``hold_T`` is the hold duration in seconds and
    ``hold_depth`` (K) / ``hold_waist`` (m) describe the tweezers during
    the hold; when ``hold_depth`` is None it follows the power,
    8.6 uK at the 100 uW reference.  ``shot_phase_sigma`` (rad) overrides the computed shot-noise
    phase width when set.
    """

    eta: float = 0.0
    P0: float = REFERENCE_POWER
    omega_t: float = laser_angular_frequency()
    hold_T: float = 10.0
    seed: int = 0
    hold_depth: float | None = None
    hold_waist: float = REFERENCE_HOLD_WAIST
    species: str = K40.name
    shot_phase_sigma: float | None = None
    shot_noise: bool = True

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if not (self.P0 > 0 and self.omega_t > 0):
            raise ValueError("P0 and omega_t must be positive")
        if not self.hold_T > 0:
            raise ValueError("hold_T must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        return cls(**d)

    @property
    def effective_hold_depth(self) -> float:
        if self.hold_depth is not None:
            return float(self.hold_depth)
        return REFERENCE_HOLD_DEPTH * self.P0 / REFERENCE_POWER

    @property
    def spectral_density(self) -> float:
        """One-sided power spectral density S = eta 2 hbar omega_t P0 (W^2/Hz)."""
        return self.eta * 2 * HBAR * self.omega_t * self.P0


def rng_for(seed, *key) -> np.random.Generator:
    """Generator for the sub-stream ``key`` of a master seed.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys,
    so results do not depend on the order in which tasks are executed.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def amplitude_noise_sigma(spec: NoiseSpec, dt: float) -> float:
    """Standard deviation of the relative depth fluctuation per step of
    length ``dt`` (s): ``sqrt(S f_N) / P0`` with ``f_N = 1/(2 dt)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return math.sqrt(spec.spectral_density / (2 * dt)) / spec.P0


def amplitude_noise_stream(spec: NoiseSpec, dt: float, n_steps: int, rng=None) -> np.ndarray:
    """Band-limited white relative depth noise ``dP/P0`` for ``n_steps`` of ``dt`` seconds.

    ``rng`` defaults to a generator seeded from ``spec.seed``.
    """
    sigma = amplitude_noise_sigma(spec, dt)
    if sigma == 0:
        return np.zeros(n_steps)
    if rng is None:
        rng = rng_for(spec.seed)
    return sigma * rng.standard_normal(n_steps)


def relative_shot_noise(spec: NoiseSpec) -> float:
    """Shot-noise limited ``delta phi / Phi = sqrt(2 hbar omega_t / (T P0))``."""
    return math.sqrt(2 * HBAR * spec.omega_t / (spec.hold_T * spec.P0))


def hold_phase(spec: NoiseSpec, species: Species | None = None) -> float:
    """Optical phase accumulated in one arm during the hold.

    Mean potential energy of the ground state of the hold tweezer (harmonic
    estimate ``V0 - hbar omega / 4``) times ``T / hbar``.
    """
    species = species or get_species(spec.species)
    V0 = K_B * spec.effective_hold_depth
    omega = trap_frequency(V0, spec.hold_waist, species)
    return (V0 - 0.25 * HBAR * omega) * spec.hold_T / HBAR


def shot_noise_phase_sigma(spec: NoiseSpec) -> float:
    if spec.shot_phase_sigma is not None:
        return float(spec.shot_phase_sigma)
    return relative_shot_noise(spec) * hold_phase(spec)


def shot_noise_phase(spec: NoiseSpec, rng=None, size=None):
    """Zero-mean Gaussian differential phase draw(s) for one hold."""
    if rng is None:
        rng = rng_for(spec.seed, 1)
    if not spec.shot_noise:
        return np.zeros(size) if size is not None else 0.0
    return shot_noise_phase_sigma(spec) * rng.standard_normal(size)


def power_for_depth(depth: float, waist: float) -> float:
    """Tweezer power (W) giving ``depth`` (K) at ``waist`` (m).

    The depth of a Gaussian tweezer scales as ``P / waist**2``; the scale is
    fixed by the reference hold tweezer (100 uW, 1 um waist, 8.6 uK).
    """
    if depth <= 0 or waist <= 0:
        raise ValueError("depth and waist must be positive")
    return REFERENCE_POWER * (depth / REFERENCE_HOLD_DEPTH) * (waist / REFERENCE_HOLD_WAIST) ** 2
