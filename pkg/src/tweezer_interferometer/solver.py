"""One-dimensional quantum dynamics on a uniform periodic grid.

Stationary states come from diagonalising a finite-difference (or Fourier)
Hamiltonian; time evolution uses Strang-split Fourier propagation with the
potential sampled at the midpoint of each step.  Internal units throughout
(um, ms, hbar = 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import linalg

from .potentials import TweezerScene
from .units import Species, internal_mass

BOUNDARY_LIMIT = 1e-8


class GridOverflow(RuntimeError):
    """Raised when probability density reaches the edge of the periodic box."""


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float
    x_max: float
    n_points: int = 4096

    def __post_init__(self):
        n = self.n_points
        if n < 256 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 256, got {n}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @classmethod
    def centered(cls, half_width: float, n_points: int = 4096) -> "SpatialGrid":
        return cls(-half_width, half_width, n_points)

    @classmethod
    def for_scene(cls, waist: float, d_max: float, n_points: int = 4096,
                  margin: float = 8.0) -> "SpatialGrid":
        """Default box ``[-(margin sigma + d_max/2), +(...)]``."""
        half = margin * waist + 0.5 * d_max
        return cls(-half, half, n_points)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        return 2 * np.pi * sfft.fftfreq(self.n_points, self.dx)

    def max_kinetic_frequency(self, species: Species) -> float:
        kmax = math.pi / self.dx
        return kmax**2 / (2 * internal_mass(species))


@dataclass
class WaveFunction:
    """Complex amplitudes on a grid.  ``psi`` may carry leading batch axes."""

    psi: np.ndarray
    grid: SpatialGrid

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.shape[-1] != self.grid.n_points:
            raise ValueError("amplitude array does not match the grid")

    def norm(self):
        return np.sum(np.abs(self.psi) ** 2, axis=-1) * self.grid.dx

    def normalized(self) -> "WaveFunction":
        n = np.sqrt(self.norm())
        return WaveFunction(self.psi / np.asarray(n)[..., None], self.grid)

    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def copy(self) -> "WaveFunction":
        return WaveFunction(self.psi.copy(), self.grid)

    def mean_position(self):
        return np.sum(self.grid.x * self.density(), axis=-1) * self.grid.dx

    def boundary_density(self):
        d = self.density()
        return np.maximum(d[..., 0], d[..., -1])


@dataclass
class EigenSolution:
    energies: np.ndarray
    states: list
    bound: np.ndarray
    residuals: np.ndarray


def gaussian_packet(grid: SpatialGrid, x0: float, width: float, k0: float = 0.0) -> WaveFunction:
    """Normalised Gaussian with ``|psi|^2`` standard deviation ``width``."""
    x = grid.x
    psi = np.exp(-((x - x0) ** 2) / (4 * width**2) + 1j * k0 * x)
    return WaveFunction(psi, grid).normalized()


def _fd_diagonals(V, dx, mass):
    kin = 1.0 / (2 * mass * dx * dx)
    return V + 2 * kin, np.full(V.size - 1, -kin)


def fourier_hamiltonian(V, grid: SpatialGrid, species: Species) -> np.ndarray:
    """Dense Hamiltonian with an exact (periodic) spectral kinetic operator."""
    n = grid.n_points
    t_k = grid.k**2 / (2 * internal_mass(species))
    col = sfft.ifft(t_k).real
    kin = linalg.toeplitz(col[np.arange(n)], col[(-np.arange(n)) % n])
    return kin + np.diag(V)


def hamiltonian_apply(psi, V, grid: SpatialGrid, species: Species, method: str = "fd"):
    mass = internal_mass(species)
    if method == "fd":
        lap = np.roll(psi, -1) - 2 * psi + np.roll(psi, 1)
        # open boundary, matching the tridiagonal matrix
        lap[0] = psi[1] - 2 * psi[0]
        lap[-1] = psi[-2] - 2 * psi[-1]
        return -lap / (2 * mass * grid.dx**2) + V * psi
    kin = sfft.ifft(grid.k**2 / (2 * mass) * sfft.fft(psi))
    return kin + V * psi


def solve_eigenstates(V, grid: SpatialGrid, species: Species, n_states: int = 1,
                      method: str = "fd") -> EigenSolution:
    """Lowest ``n_states`` eigenpairs of ``-(1/2m) d^2/dx^2 + V``.

    ``method="fd"`` diagonalises the second-order finite-difference matrix
    (symmetric tridiagonal); ``method="fourier"`` uses the dense spectral
    Hamiltonian, which is consistent with the split-step propagator and is
    preferable on coarse grids.  A state is flagged unbound when its energy
    is not below the potential at the box edges.
    """
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    V = np.asarray(V, dtype=float)
    if V.shape != (grid.n_points,) or not np.all(np.isfinite(V)):
        raise ValueError("V must be a finite array on the grid")
    mass = internal_mass(species)
    if method == "fd":
        d, e = _fd_diagonals(V, grid.dx, mass)
        energies, vecs = linalg.eigh_tridiagonal(d, e, select="i", select_range=(0, n_states - 1))
    elif method == "fourier":
        energies, vecs = linalg.eigh(fourier_hamiltonian(V, grid, species),
                                     subset_by_index=(0, n_states - 1))
    else:
        raise ValueError(f"unknown method {method!r}")
    states = []
    residuals = np.empty(n_states)
    for i in range(n_states):
        v = vecs[:, i]
        # deterministic sign: largest lobe positive
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        phi = v / math.sqrt(grid.dx)
        r = hamiltonian_apply(phi.astype(complex), V, grid, species, method) - energies[i] * phi
        residuals[i] = np.linalg.norm(r) / np.linalg.norm(phi)
        states.append(WaveFunction(phi.astype(complex), grid))
    edge = min(V[0], V[-1])
    return EigenSolution(np.asarray(energies), states, np.asarray(energies) < edge, residuals)


def overlap_fidelity(psi: WaveFunction, phi: WaveFunction):
    """Discrete inner product ``<psi|phi> = integral psi* phi dx``."""
    if psi.grid != phi.grid:
        raise ValueError("wavefunctions live on different grids")
    return np.sum(np.conj(psi.psi) * phi.psi, axis=-1) * psi.grid.dx


def energy_expectation(psi: WaveFunction, V, species: Species):
    grid = psi.grid
    pk = sfft.fft(psi.psi, axis=-1)
    kin = np.sum(np.abs(pk) ** 2 * grid.k**2, axis=-1) / (2 * internal_mass(species))
    kin = kin * grid.dx / grid.n_points
    pot = np.sum(np.abs(psi.psi) ** 2 * V, axis=-1) * grid.dx
    return (kin + pot) / psi.norm()


def port_boundaries(centers, waists=None, min_separation=None):
    """Voronoi cell edges (midpoints) between sorted tweezer centres."""
    centers = np.sort(np.asarray(centers, float))
    if min_separation is not None and np.any(np.diff(centers) <= min_separation):
        raise ValueError("tweezers too close to partition into ports")
    return 0.5 * (centers[1:] + centers[:-1])


def port_populations(psi: WaveFunction, scene: TweezerScene, t: float,
                     check_separation: bool = True) -> np.ndarray:
    """Probability in each tweezer's Voronoi cell, ordered by tweezer position.

    Requires neighbouring tweezers to be more than two waists apart.
    """
    centers = scene.centers(t)
    waist = max(tw.waist for tw in scene.tweezers)
    edges = port_boundaries(centers, min_separation=2 * waist if check_separation else None)
    return populations_in_cells(psi, edges)


def populations_in_cells(psi: WaveFunction, edges) -> np.ndarray:
    x = psi.grid.x
    idx = np.searchsorted(np.asarray(edges), x)
    dens = psi.density() * psi.grid.dx
    n_cells = len(edges) + 1
    out = np.stack([dens[..., idx == c].sum(axis=-1) for c in range(n_cells)], axis=-1)
    return out / out.sum(axis=-1, keepdims=True)


def imprint_phase(psi: WaveFunction, phase, boundary: float = 0.0) -> WaveFunction:
    """Multiply amplitudes at ``x > boundary`` by ``exp(i phase)``.

    ``phase`` may be an array matching the batch axes of ``psi``.
    """
    phase = np.asarray(phase, dtype=float)
    factor = np.exp(1j * phase)[..., None]
    mask = psi.grid.x > boundary
    out = psi.psi.copy()
    out[..., mask] = out[..., mask] * factor
    return WaveFunction(out, psi.grid)


@dataclass
class PropagationResult:
    state: WaveFunction
    t: float
    steps: int
    max_boundary_density: np.ndarray
    overflow: np.ndarray
    snapshots: list = field(default_factory=list)
    snapshot_times: list = field(default_factory=list)


def default_timestep(omega: float) -> float:
    """``2 pi / (64 omega)`` for a characteristic angular frequency ``omega``."""
    return 2 * math.pi / (64 * omega)


def unit_phase(theta) -> np.ndarray:
    """``exp(1j * theta)`` for real ``theta``, evaluated as cosine and sine
    (several times faster than the complex exponential)."""
    theta = np.asarray(theta, float)
    out = np.empty(theta.shape, complex)
    np.cos(theta, out=out.real)
    np.sin(theta, out=out.imag)
    return out


def propagate(psi: WaveFunction, scene: TweezerScene, t0: float, t1: float, dt: float,
              noise=None, record_every: int = 0, raise_on_overflow: bool = False,
              potential_fn=None) -> PropagationResult:
    """Strang-split Fourier propagation from ``t0`` to ``t1``.

    Each step is half kinetic, full potential at ``t + dt/2``, half kinetic;
    adjacent kinetic halves are fused.  ``noise`` is an optional array of
    relative depth fluctuations, shape ``(n_steps,)`` or ``(batch, n_steps)``,
    multiplying the tweezer part of the potential at each step.
    ``potential_fn(x, t)`` replaces the scene potential if given.
    """
    grid = psi.grid
    span = t1 - t0
    n_steps = int(round(span / dt))
    if n_steps < 0 or abs(n_steps * dt - span) > 1e-9 * max(abs(span), dt):
        raise ValueError("dt must divide t1 - t0")
    x = grid.x
    mass = internal_mass(scene.species)
    kin_phase = grid.k**2 / (2 * mass)
    half_k = np.exp(-0.5j * dt * kin_phase)
    full_k = half_k * half_k

    state = psi.psi.astype(complex, copy=True)
    batch_shape = state.shape[:-1]
    if noise is not None:
        noise = np.asarray(noise, float)
        if noise.shape[-1] != n_steps:
            raise ValueError("noise stream length must equal the number of steps")
        if noise.ndim == 1 and batch_shape:
            noise = np.broadcast_to(noise, batch_shape + (n_steps,))
    ext = scene.external_on(x) if potential_fn is None else 0.0

    max_bd = np.max(np.abs(state[..., [0, -1]]) ** 2, axis=-1)
    snaps, snap_t = [], []
    if record_every:
        snaps.append(np.abs(state) ** 2)
        snap_t.append(t0)

    if n_steps:
        state = sfft.ifft(sfft.fft(state, axis=-1) * half_k, axis=-1)
    block = 128
    for b0 in range(0, n_steps, block):
        idx = np.arange(b0, min(b0 + block, n_steps))
        tm = t0 + (idx + 0.5) * dt
        if potential_fn is not None:
            vblock = np.array([potential_fn(x, t) for t in tm])
        else:
            vblock = scene.potential_block(x, tm)
        if noise is None:
            pblock = unit_phase(-dt * (vblock + ext))
        for j, i in enumerate(idx):
            if noise is None:
                state *= pblock[j]
            else:
                eps = np.asarray(noise[..., i])[..., None]
                state *= unit_phase(-dt * (vblock[j] * (1.0 + eps) + ext))
            bd = np.max(np.abs(state[..., [0, -1]]) ** 2, axis=-1)
            max_bd = np.maximum(max_bd, bd)
            if raise_on_overflow and np.any(bd > BOUNDARY_LIMIT):
                raise GridOverflow(f"boundary density {np.max(bd):.2e} at t = {tm[j]:.4g}")
            last = i == n_steps - 1
            record = bool(record_every) and ((i + 1) % record_every == 0 or last)
            if last or record:
                # finish the step so the recorded state belongs to t0 + (i + 1) dt
                state = sfft.ifft(sfft.fft(state, axis=-1) * half_k, axis=-1)
                if record:
                    snaps.append(np.abs(state) ** 2)
                    snap_t.append(t0 + (i + 1) * dt)
                if not last:
                    state = sfft.ifft(sfft.fft(state, axis=-1) * half_k, axis=-1)
            else:
                state = sfft.ifft(sfft.fft(state, axis=-1) * full_k, axis=-1)
    max_bd = np.maximum(max_bd, np.max(np.abs(state[..., [0, -1]]) ** 2, axis=-1))
    return PropagationResult(WaveFunction(state, grid), t1, n_steps, max_bd,
                             max_bd > BOUNDARY_LIMIT, snaps, snap_t)


def static_potential_fn(V):
    V = np.asarray(V, float)
    return lambda x, t: V
