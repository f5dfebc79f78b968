"""Time-dependent tweezer potentials and static external potentials.

A :class:`TweezerScene` is a list of Gaussian tweezers, each with a centre
trajectory and a relative-detuning schedule, plus one optional external
potential.  All quantities are in internal units (um, ms, hbar = 1) unless
a function says otherwise.  The relative detuning ``Delta_rel`` is stored
as a fraction of the tweezer depth, so a tweezer contributes

    -V0 * (1 - Delta_rel(t)) * exp(-2 (x - x_c(t))**2 / sigma**2)

and ``Delta_rel > 0`` makes it shallower.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .units import G_NEWTON, Species, to_internal, to_si

CP_CLIP_DISTANCE = 0.5  # um


@dataclass(frozen=True)
class ScheduleParams:
    """Cosine separation sweep and linear detuning ramp of one splitter pass.

    ``d_min``/``d_max`` are tweezer separations, ``T_proc`` the duration.
    ``delta_max`` is the initial relative detuning of the empty tweezer(s).
    """

    d_min: float
    d_max: float
    T_proc: float
    delta_max: float

    def __post_init__(self):
        if not (0 < self.d_min < self.d_max):
            raise ValueError(f"need 0 < d_min < d_max, got {self.d_min}, {self.d_max}")
        if not self.T_proc > 0:
            raise ValueError("T_proc must be positive")
        if not abs(self.delta_max) <= 1:
            raise ValueError("|delta_max| must not exceed 1")

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        eps = 1e-12 * self.T_proc
        if np.any(t < -eps) or np.any(t > self.T_proc + eps):
            raise ValueError(f"t outside schedule [0, {self.T_proc}]")
        return t

    def separation(self, t):
        t = self._check_time(t)
        mid = 0.5 * (self.d_max + self.d_min)
        amp = 0.5 * (self.d_max - self.d_min)
        return mid + amp * np.cos(2 * np.pi * t / self.T_proc)


def standard_schedule(params: ScheduleParams, t):
    """Two-tweezer schedule: separation ``d(t)`` and detuning ``Delta_rel(t)``.

    The detuning falls linearly from ``delta_max`` to zero at ``T_proc/2``
    and stays at zero afterwards.
    """
    d = params.separation(t)
    t = np.asarray(t, dtype=float)
    delta = np.where(t < 0.5 * params.T_proc, params.delta_max * (1 - 2 * t / params.T_proc), 0.0)
    if d.ndim == 0:
        return float(d), float(delta)
    return d, delta


def three_tweezer_schedule(params: ScheduleParams, t):
    """Three-tweezer schedule: outer tweezers at ``+-d(t)`` and the relative
    detuning of the outer tweezers with respect to the central one.

    The detuning ramps linearly from ``+delta_max`` (outer shallower) through
    zero at ``T_proc/2`` to ``-delta_max`` (outer deeper).
    """
    d = params.separation(t)
    t = np.asarray(t, dtype=float)
    delta = params.delta_max * (1 - 2 * t / params.T_proc)
    if d.ndim == 0:
        return float(d), float(delta)
    return d, delta


@dataclass(frozen=True)
class GaussianTweezer:
    depth: float
    waist: float
    center: Callable[[float], float]
    detuning: Callable[[float], float] = lambda t: 0.0

    def __post_init__(self):
        if not (self.depth > 0 and self.waist > 0):
            raise ValueError("tweezer depth and waist must be positive")

    def evaluate(self, x, t):
        delta = float(self.detuning(t))
        if abs(delta) > 1 + 1e-12:
            raise ValueError("relative detuning must lie in [-1, 1]")
        xc = float(self.center(t))
        return -self.depth * (1.0 - delta) * np.exp(-2.0 * (x - xc) ** 2 / self.waist**2)


# -- external potentials -----------------------------------------------------


@dataclass(frozen=True)
class ExternalPotential:
    """Static additive potential.  ``kind`` is one of ``none``,
    ``uniform_acceleration``, ``casimir_polder`` or ``source_mass``.

    Parameters are SI: ``acceleration`` (m/s^2), ``C4`` (J m^4) with
    ``surface`` (m, position of the surface on the x axis, atoms at
    x > surface), and ``source`` (a :class:`CutSphere`) embedded so that the
    simulation axis runs through ``line_origin`` along ``line_direction``.
    """

    kind: str = "none"
    acceleration: float = 0.0
    C4: float = 0.0
    surface: float = 0.0
    source: "CutSphere | None" = None
    line_origin: tuple = (0.0, 0.0, 0.0)
    line_direction: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("none", "uniform_acceleration", "casimir_polder", "source_mass"):
            raise ValueError(f"unknown external potential kind {self.kind!r}")
        if self.kind == "casimir_polder" and not self.C4 > 0:
            raise ValueError("C4 must be positive")
        if self.kind == "source_mass" and self.source is None:
            raise ValueError("source_mass potential needs a source geometry")

    def energy_si(self, x_si, species: Species):
        """Potential energy in J at positions ``x_si`` (m) along the axis."""
        x_si = np.asarray(x_si, dtype=float)
        if self.kind == "none":
            return np.zeros_like(x_si)
        if self.kind == "uniform_acceleration":
            # L = -m x a
            return species.mass * self.acceleration * x_si
        if self.kind == "casimir_polder":
            z = np.maximum(x_si - self.surface, CP_CLIP_DISTANCE * 1e-6)
            return -self.C4 / z**4
        origin = np.asarray(self.line_origin, float)
        direction = np.asarray(self.line_direction, float)
        direction = direction / np.linalg.norm(direction)
        flat = x_si.ravel()
        vals = np.array([cut_sphere_potential(self.source, origin + xi * direction) for xi in flat])
        return species.mass * vals.reshape(x_si.shape)

    def evaluate(self, x, species: Species):
        """Potential in internal energy units at internal positions ``x``."""
        return to_internal(self.energy_si(to_si(x, "length"), species), "energy")


NO_EXTERNAL = ExternalPotential()


@dataclass(frozen=True)
class TweezerScene:
    tweezers: tuple
    duration: float
    species: Species
    external: ExternalPotential = NO_EXTERNAL
    # optional cached external potential on a specific grid
    _ext_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def check_time(self, t):
        eps = 1e-9 * max(self.duration, 1.0)
        if t < -eps or t > self.duration + eps:
            raise ValueError(f"t = {t} outside scene duration [0, {self.duration}]")

    def centers(self, t) -> np.ndarray:
        self.check_time(t)
        return np.array([tw.center(t) for tw in self.tweezers])

    def external_on(self, x):
        if self.external.kind == "none":
            return 0.0
        key = (x.size, float(x[0]), float(x[-1]))
        if key not in self._ext_cache:
            self._ext_cache[key] = self.external.evaluate(x, self.species)
        return self._ext_cache[key]

    def tweezer_potential(self, x, t):
        """Sum of the tweezer contributions only (no external term)."""
        self.check_time(t)
        v = np.zeros_like(np.asarray(x, dtype=float))
        for tw in self.tweezers:
            v = v + tw.evaluate(x, t)
        return v

    def trajectories(self, ts):
        """Vectorised centres and effective depths ``V0 (1 - Delta_rel)``,
        each of shape ``(n_tweezers, len(ts))``."""
        ts = np.asarray(ts, dtype=float)
        eps = 1e-9 * max(self.duration, 1.0)
        if ts.size and (ts.min() < -eps or ts.max() > self.duration + eps):
            raise ValueError("times outside scene duration")
        centers, depths = [], []
        for tw in self.tweezers:
            c = np.broadcast_to(np.asarray(tw.center(ts), float), ts.shape)
            dl = np.broadcast_to(np.asarray(tw.detuning(ts), float), ts.shape)
            if np.any(np.abs(dl) > 1 + 1e-12):
                raise ValueError("relative detuning must lie in [-1, 1]")
            centers.append(c)
            depths.append(tw.depth * (1.0 - dl))
        return np.array(centers), np.array(depths)

    def potential_block(self, x, ts):
        """Tweezer potential at several times, shape ``(len(ts), len(x))``."""
        centers, depths = self.trajectories(ts)
        out = np.zeros((len(ts), len(x)))
        g = np.empty_like(out)
        for tw, c, a in zip(self.tweezers, centers, depths):
            # in place: this runs once per propagation block on the full grid
            np.subtract(x[None, :], c[:, None], out=g)
            np.square(g, out=g)
            g *= -2.0 / tw.waist**2
            np.exp(g, out=g)
            g *= a[:, None]
            out -= g
        return out

    def reversed(self) -> "TweezerScene":
        """Time-reversed scene (t -> duration - t)."""
        T = self.duration
        tws = tuple(
            replace(tw, center=_reverse(tw.center, T), detuning=_reverse(tw.detuning, T))
            for tw in self.tweezers
        )
        return replace(self, tweezers=tws, _ext_cache=self._ext_cache)

    def with_external(self, external: ExternalPotential) -> "TweezerScene":
        return replace(self, external=external, _ext_cache={})


def _reverse(fn, T):
    return lambda t: fn(T - t)


def evaluate_potential(scene: TweezerScene, x, t):
    """Total potential ``V(x, t)`` (tweezers plus external term)."""
    x = np.asarray(x, dtype=float)
    return scene.tweezer_potential(x, t) + scene.external_on(x)


def two_tweezer_scene(params: ScheduleParams, depth: float, waist: float, species: Species,
                      external: ExternalPotential = NO_EXTERNAL) -> TweezerScene:
    """Occupied tweezer at ``-d/2`` (left), detuned empty tweezer at ``+d/2``."""
    left = GaussianTweezer(depth, waist, center=lambda t: -0.5 * standard_schedule(params, t)[0])
    right = GaussianTweezer(
        depth, waist,
        center=lambda t: 0.5 * standard_schedule(params, t)[0],
        detuning=lambda t: standard_schedule(params, t)[1],
    )
    return TweezerScene((left, right), params.T_proc, species, external)


def three_tweezer_scene(params: ScheduleParams, depth: float, waist: float, species: Species,
                        external: ExternalPotential = NO_EXTERNAL,
                        offset: Callable | None = None) -> TweezerScene:
    """Occupied central tweezer at 0, detuned outer tweezers at ``-d`` and ``+d``.

    ``offset(d)``, if given, is added to the outer relative detuning.  It is
    used to reference the detuning ramp to the energy resonance of the
    central and outer states rather than to equal depths.
    """
    def det(t):
        d, dl = three_tweezer_schedule(params, t)
        return dl if offset is None else dl + offset(d)

    outer_l = GaussianTweezer(depth, waist, center=lambda t: -three_tweezer_schedule(params, t)[0],
                              detuning=det)
    center = GaussianTweezer(depth, waist, center=lambda t: 0.0)
    outer_r = GaussianTweezer(depth, waist, center=lambda t: three_tweezer_schedule(params, t)[0],
                              detuning=det)
    return TweezerScene((outer_l, center, outer_r), params.T_proc, species, external)


def static_scene(centers: Sequence[float], depth: float, waist: float, species: Species,
                 detunings: Sequence[float] | None = None, duration: float = 1.0,
                 external: ExternalPotential = NO_EXTERNAL) -> TweezerScene:
    """Time-independent tweezers at fixed centres."""
    detunings = detunings if detunings is not None else [0.0] * len(centers)
    tws = tuple(
        GaussianTweezer(depth, waist, center=(lambda c: (lambda t: c))(float(c)),
                        detuning=(lambda dl: (lambda t: dl))(float(dl)))
        for c, dl in zip(centers, detunings)
    )
    return TweezerScene(tws, duration, species, external)


# -- cut-sphere source mass ----------------------------------------------------


@dataclass(frozen=True)
class CutSphere:
    """A sphere of radius ``radius`` (m) reduced to the wedge of dihedral
    angle ``wedge_angle`` (rad) around the edge axis through ``center``.

    The mass occupies azimuths ``|psi| <= wedge_angle/2`` measured around
    ``edge_axis`` from ``bisector``.  ``wedge_angle = 2 pi`` is a full sphere.
    """

    radius: float
    wedge_angle: float = 2 * math.pi
    density: float = 19300.0
    center: tuple = (0.0, 0.0, 0.0)
    edge_axis: tuple = (0.0, 0.0, 1.0)
    bisector: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not 0 < self.wedge_angle <= 2 * math.pi + 1e-12:
            raise ValueError("wedge_angle must lie in (0, 2 pi]")
        if not self.density > 0:
            raise ValueError("density must be positive")
        e = np.asarray(self.edge_axis, float)
        b = np.asarray(self.bisector, float)
        if abs(np.dot(e, b)) > 1e-9 * np.linalg.norm(e) * np.linalg.norm(b):
            raise ValueError("bisector must be perpendicular to the edge axis")

    @classmethod
    def from_mass(cls, mass: float, radius: float, wedge_angle: float, **kw) -> "CutSphere":
        """Derive the density from the total mass of the wedge."""
        volume = 4.0 / 3.0 * math.pi * radius**3 * wedge_angle / (2 * math.pi)
        return cls(radius, wedge_angle, mass / volume, **kw)

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius**3 * self.wedge_angle / (2 * math.pi)

    @property
    def mass(self) -> float:
        return self.density * self.volume

    def frame(self):
        """Orthonormal (bisector, tangent, edge) axes."""
        e = np.asarray(self.edge_axis, float)
        e = e / np.linalg.norm(e)
        b = np.asarray(self.bisector, float)
        b = b / np.linalg.norm(b)
        return b, np.cross(e, b), e

    def local(self, point) -> np.ndarray:
        """Coordinates of ``point`` in the (bisector, tangent, edge) frame."""
        b, t, e = self.frame()
        r = np.asarray(point, float) - np.asarray(self.center, float)
        return np.array([r @ b, r @ t, r @ e])

    def contains(self, point, tol: float = 0.0) -> bool:
        x, y, z = self.local(point)
        if x * x + y * y + z * z > (self.radius + tol) ** 2:
            return False
        if self.wedge_angle >= 2 * math.pi - 1e-12:
            return True
        psi = math.atan2(y, x)
        half = 0.5 * self.wedge_angle
        if math.hypot(x, y) <= tol:
            return True
        return abs(psi) <= half + tol / max(math.hypot(x, y), 1e-300)

    def with_density(self, density: float) -> "CutSphere":
        return replace(self, density=density)


def _ring_integral(rho, z, rho_p, psi_p, zp, half):
    """Integral over psi in [-half, half] of 1 / |P - (rho, psi, z)|."""
    A = rho * rho + rho_p * rho_p + (z - zp) ** 2
    B = 2.0 * rho * rho_p
    if B <= 1e-300 * A:
        return 2.0 * half / math.sqrt(A)
    k = 2.0 * B / (A + B)
    # A - B cos u = (A + B)(1 - k sin^2 w), w = (pi - u)/2, u = psi - psi_p
    w_lo = 0.5 * (math.pi - (half - psi_p))
    w_hi = 0.5 * (math.pi - (-half - psi_p))
    return 2.0 / math.sqrt(A + B) * (special.ellipkinc(w_hi, k) - special.ellipkinc(w_lo, k))


def cut_sphere_potential(geometry: CutSphere, point, density: float | None = None,
                         rtol: float = 1e-9) -> float:
    """Newtonian potential per unit mass (J/kg) of the cut sphere at ``point`` (m).

    The azimuthal integral around the edge axis is done in closed form with
    incomplete elliptic integrals, the remaining (rho, z) integral with
    adaptive quadrature.
    """
    if density is not None:
        geometry = geometry.with_density(density)
    point = np.asarray(point, float)
    if geometry.contains(point, tol=1e-12 * geometry.radius):
        raise ValueError("point lies inside the source mass")
    x, y, zp = geometry.local(point)
    rho_p = math.hypot(x, y)
    psi_p = math.atan2(y, x)
    R = geometry.radius
    half = 0.5 * geometry.wedge_angle

    def inner(z):
        rmax = math.sqrt(max(R * R - z * z, 0.0))
        pts = [rho_p] if 0 < rho_p < rmax else None
        val, _ = integrate.quad(lambda r: r * _ring_integral(r, z, rho_p, psi_p, zp, half),
                                0.0, rmax, points=pts, epsabs=0.0, epsrel=rtol, limit=200)
        return val

    zpts = [zp] if -R < zp < R else None
    total, _ = integrate.quad(inner, -R, R, points=zpts, epsabs=0.0, epsrel=rtol, limit=200)
    return -G_NEWTON * geometry.density * total


def cut_sphere_potential_midpoint(geometry: CutSphere, point, rtol: float = 1e-5,
                                  n_start: int = 32, n_max: int = 512) -> float:
    """Independent check of :func:`cut_sphere_potential`.

    Midpoint rule on a spherical-coordinate mesh about the sphere centre
    (radius, polar angle from the edge axis, azimuth inside the wedge).  The
    radial axis is split at ``|P|/2, |P|, 2|P|`` and the mesh is doubled
    until the relative change drops below ``rtol``.
    """
    point = np.asarray(point, float)
    if geometry.contains(point, tol=1e-12 * geometry.radius):
        raise ValueError("point lies inside the source mass")
    p = geometry.local(point)
    R = geometry.radius
    half = 0.5 * geometry.wedge_angle
    rp = float(np.linalg.norm(p))
    breaks = sorted({0.0, R} | {b for b in (0.5 * rp, rp, 2 * rp) if 0 < b < R})

    def mesh_sum(n):
        th = (np.arange(n) + 0.5) * math.pi / n
        ps = -half + (np.arange(n) + 0.5) * 2 * half / n
        th, ps = np.meshgrid(th, ps, indexing="ij")
        st = np.sin(th)
        d = np.stack([st * np.cos(ps), st * np.sin(ps), np.cos(th)], axis=-1).reshape(-1, 3)
        w = st.ravel()
        dp = d @ p
        total = 0.0
        for a, b in zip(breaks[:-1], breaks[1:]):
            r = a + (np.arange(n) + 0.5) * (b - a) / n
            for chunk in np.array_split(r, max(1, n // 16)):
                dist2 = chunk[:, None] ** 2 - 2 * chunk[:, None] * dp[None, :] + rp * rp
                total += ((chunk**2)[:, None] * w[None, :] / np.sqrt(dist2)).sum() * (b - a) / n
        return total * (math.pi / n) * (2 * half / n)

    n = n_start
    prev = mesh_sum(n)
    while n < n_max:
        n *= 2
        cur = mesh_sum(n)
        if abs(cur - prev) <= rtol * abs(cur):
            prev = cur
            break
        prev = cur
    return -G_NEWTON * geometry.density * prev


def point_mass_potential(mass: float, distance: float) -> float:
    return -G_NEWTON * mass / distance

