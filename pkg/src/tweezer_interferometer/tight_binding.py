"""Two-level (tight-binding) model of a pair of coupled tweezers.

In the basis {phi_1, phi_2} of localised states in the occupied and the
empty tweezer, ``H = Delta |2><2| + (J/2)(|1><2| + |2><1|)``.  With
``sigma_z = |2><2| - |1><1|`` the Bloch vector obeys ``dv/dt = P x v`` with
torque ``P = (J, 0, Delta)``; ``v_z`` is the population difference
``P_2 - P_1``.  J is the full splitting of the symmetric/antisymmetric pair
at zero detuning.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .potentials import TweezerScene, static_scene
from .solver import SpatialGrid, solve_eigenstates


@dataclass(frozen=True)
class TorqueSchedule:
    J: Callable[[float], float]
    delta: Callable[[float], float]

    def __call__(self, t: float) -> np.ndarray:
        return np.array([self.J(t), 0.0, self.delta(t)])

    @classmethod
    def constant(cls, J: float, delta: float) -> "TorqueSchedule":
        return cls(lambda t: J, lambda t: delta)

    @classmethod
    def from_samples(cls, t, J, delta) -> "TorqueSchedule":
        """Linear interpolation of sampled J(t), Delta(t)."""
        t, J, delta = map(np.asarray, (t, J, delta))
        return cls(lambda s: float(np.interp(s, t, J)), lambda s: float(np.interp(s, t, delta)))


def bloch_vector(c1: complex, c2: complex) -> np.ndarray:
    """Bloch vector of ``c1|1> + c2|2>`` in the convention above."""
    rho12 = np.conj(c1) * c2
    n = abs(c1) ** 2 + abs(c2) ** 2
    return np.array([2 * rho12.real, 2 * rho12.imag, abs(c2) ** 2 - abs(c1) ** 2]) / n


def integrate_bloch(v0, P: TorqueSchedule, t0: float, t1: float, dt: float):
    """RK4 integration of ``dv/dt = P(t) x v``.

    Returns ``(t, v)`` with ``v`` of shape ``(n_steps + 1, 3)``.  Raises if
    the step under-resolves the precession (``dt |P| >= 0.1`` at any
    evaluated time).
    """
    v = np.asarray(v0, dtype=float).copy()
    if v.shape != (3,) or np.linalg.norm(v) > 1 + 1e-9:
        raise ValueError("v0 must be a 3-vector with |v| <= 1")
    n = int(round((t1 - t0) / dt))
    if n < 1:
        raise ValueError("need at least one step")
    dt = (t1 - t0) / n

    def f(t, y):
        p = P(t)
        if dt * np.linalg.norm(p) >= 0.1:
            raise ValueError(f"dt too coarse: dt*|P| = {dt * np.linalg.norm(p):.3g} at t = {t:.4g}")
        return np.cross(p, y)

    ts = t0 + dt * np.arange(n + 1)
    out = np.empty((n + 1, 3))
    out[0] = v
    for i in range(n):
        t = ts[i]
        k1 = f(t, v)
        k2 = f(t + 0.5 * dt, v + 0.5 * dt * k1)
        k3 = f(t + 0.5 * dt, v + 0.5 * dt * k2)
        k4 = f(t + dt, v + dt * k3)
        v = v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = v
    return ts, out


def misalignment_angle(v, P) -> float:
    """Angle between v and the (anti)parallel torque direction."""
    v = np.asarray(v, float)
    P = np.asarray(P, float)
    c = abs(v @ P) / (np.linalg.norm(v) * np.linalg.norm(P))
    return float(np.arccos(min(1.0, c)))


class SubspaceNotIsolated(ValueError):
    """The two-level description does not hold for this configuration."""


def extract_J_delta(scene: TweezerScene, t: float, grid: SpatialGrid, n: int = 0,
                    method: str = "fd", isolation: float = 5.0):
    """Tunnelling J and detuning Delta (rad/ms) of a two-tweezer scene at time t.

    J is the gap between the n-th symmetric/antisymmetric pair of the
    undetuned double well.  The magnitude of Delta follows from the gap
    ``E`` of the same pair in the actual (detuned) scene as
    ``sqrt(E^2 - J^2)``, so that ``hypot(J, Delta)`` reproduces the full
    splitting; its sign is that of the difference of the n-th eigenenergy
    of each tweezer on its own (empty minus occupied, i.e. right minus
    left).  The single-tweezer difference alone overstates Delta when the
    wells overlap, because the detuned beam also shifts the other well.
    Raises :class:`SubspaceNotIsolated` when the pair is not separated from
    the neighbouring levels by more than ``isolation * J``.
    """
    if len(scene.tweezers) != 2:
        raise ValueError("extract_J_delta needs a two-tweezer scene")
    x = grid.x
    c = scene.centers(t)
    order = np.argsort(c)
    tws = [scene.tweezers[i] for i in order]
    depth, waist = tws[0].depth, tws[0].waist
    sp = scene.species
    sym = static_scene(c[order], depth, waist, sp).tweezer_potential(x, 0.0)
    es = solve_eigenstates(sym, grid, sp, 2 * n + 3, method)
    e = es.energies
    J = e[2 * n + 1] - e[2 * n]
    gaps = [e[2 * n + 2] - e[2 * n + 1]]
    if n > 0:
        gaps.append(e[2 * n] - e[2 * n - 1])
    if min(gaps) <= isolation * J:
        raise SubspaceNotIsolated(f"J = {J:.3g} not isolated (neighbour gap {min(gaps):.3g})")
    singles = []
    for tw in tws:
        v = tw.evaluate(x, t)
        singles.append(solve_eigenstates(v, grid, sp, n + 1, method).energies[n])
    full = solve_eigenstates(scene.tweezer_potential(x, t), grid, sp, 2 * n + 2, method).energies
    split = full[2 * n + 1] - full[2 * n]
    magnitude = math.sqrt(max(split * split - J * J, 0.0))
    delta = math.copysign(magnitude, singles[1] - singles[0])
    return float(J), float(delta)


def tight_binding_populations(J, delta, t):
    """Closed-form two-level Rabi formula for a constant torque, starting
    in state 1: probability in state 2 at time ``t``."""
    om = np.hypot(J, delta)
    return (J / om) ** 2 * np.sin(0.5 * om * np.asarray(t)) ** 2
