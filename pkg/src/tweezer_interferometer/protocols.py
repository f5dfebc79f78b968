"""Two- and three-tweezer splitter/combiner sequences and the full
interferometer loop.

A splitter moves the tweezers together along the cosine separation sweep
while the detuning ramp drives the atom adiabatically from the occupied
tweezer into a balanced superposition.  The combiner is the exact time
reverse.  The loop glues them together with a lumped hold phase:

    split -> (project, three-tweezer only) -> imprint phase -> combine

Internal units (um, ms, hbar = 1) except where noted.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment

from .noise import NoiseSpec, amplitude_noise_stream, rng_for, shot_noise_phase
from .potentials import (NO_EXTERNAL, ExternalPotential, ScheduleParams, TweezerScene,
                         static_scene, three_tweezer_scene, two_tweezer_scene)
from .solver import (PropagationResult, SpatialGrid, WaveFunction, imprint_phase,
                     overlap_fidelity, populations_in_cells, port_boundaries, propagate,
                     solve_eigenstates)
from .units import HBAR, K40, Species, get_species, microkelvin, trap_frequency_internal

SPLITTER_KINDS = ("two_tweezer", "three_tweezer")
ADIABATICITY_LIMIT = 0.05
# default steps per trap period: halving this step changes the splitter
# populations by less than 1e-4 (at 256 the change is about 2.4e-4)
STEPS_PER_PERIOD = 512

# Detuning that lowers the empty tweezer by 2.3 uK out of 116 uK.
TWO_TWEEZER_DELTA = 2.3 / 116.0

DEFAULT_TWO_TWEEZER_SCHEDULE = ScheduleParams(d_min=0.7, d_max=3.0, T_proc=40.0,
                                              delta_max=TWO_TWEEZER_DELTA)


def three_tweezer_delta(depth_uK: float = 23.0, waist: float = 1.3, species: Species = K40,
                        fraction: float = 0.8) -> float:
    """Relative detuning equal to ``fraction * hbar omega0`` of the tweezer."""
    V0 = microkelvin(depth_uK)
    return fraction * trap_frequency_internal(V0, waist, species) / V0


DEFAULT_THREE_TWEEZER_SCHEDULE = ScheduleParams(d_min=1.25, d_max=3.0, T_proc=70.0,
                                                delta_max=three_tweezer_delta())


@dataclass(frozen=True)
class SplitterSpec:
    """One splitter pass.

    ``depth_uK`` is the tweezer depth in microkelvin, ``waist`` in um.
    ``n`` is the vibrational index of the initial state.  ``dt`` defaults
    to ``2 pi / (STEPS_PER_PERIOD omega0)`` rounded down so that it divides ``T_proc``.
    ``eigen_method`` is ``fd``, ``fourier`` or ``auto`` (Fourier on grids
    of at most 1024 points, where it matches the propagator better).

    ``energy_referenced`` (three tweezers only) shifts the outer depth by
    the calibrated offset at which the central and outer ground states are
    resonant, so that the linear ramp acts on the energy detuning.  With
    equal-depth referencing the overlap of the Gaussian tails keeps the
    central state far below the outer ones at close approach.
    """

    kind: str = "two_tweezer"
    schedule: ScheduleParams = DEFAULT_TWO_TWEEZER_SCHEDULE
    n: int = 0
    species: Species = K40
    depth_uK: float = 116.0
    waist: float = 1.3
    n_points: int = 4096
    margin: float = 8.0
    dt: float | None = None
    eigen_method: str = "auto"
    energy_referenced: bool = True

    def __post_init__(self):
        if self.kind not in SPLITTER_KINDS:
            raise ValueError(f"kind must be one of {SPLITTER_KINDS}")
        if self.n < 0:
            raise ValueError("vibrational index must be >= 0")
        if not (self.depth_uK > 0 and self.waist > 0):
            raise ValueError("depth and waist must be positive")
        if self.kind == "three_tweezer" and abs(self.schedule.delta_max) * self.depth >= self.omega0:
            raise ValueError("three-tweezer detuning must stay below hbar*omega0")

    @property
    def depth(self) -> float:
        return microkelvin(self.depth_uK)

    @property
    def omega0(self) -> float:
        return trap_frequency_internal(self.depth, self.waist, self.species)

    def grid(self) -> SpatialGrid:
        span = self.schedule.d_max if self.kind == "two_tweezer" else 2 * self.schedule.d_max
        return SpatialGrid.for_scene(self.waist, span, self.n_points, self.margin)

    def scene(self, external: ExternalPotential = NO_EXTERNAL) -> TweezerScene:
        if self.kind == "two_tweezer":
            return two_tweezer_scene(self.schedule, self.depth, self.waist, self.species, external)
        offset = resonance_table(self).offset if self.energy_referenced else None
        return three_tweezer_scene(self.schedule, self.depth, self.waist, self.species, external,
                                   offset=offset)

    @property
    def n_steps(self) -> int:
        dt = self.dt if self.dt is not None else 2 * math.pi / (STEPS_PER_PERIOD * self.omega0)
        return max(1, math.ceil(self.schedule.T_proc / dt - 1e-9))

    @property
    def timestep(self) -> float:
        return self.schedule.T_proc / self.n_steps

    @property
    def method(self) -> str:
        if self.eigen_method == "auto":
            return "fourier" if self.n_points <= 1024 else "fd"
        return self.eigen_method

    @property
    def occupied_index(self) -> int:
        return 0 if self.kind == "two_tweezer" else 1

    def with_schedule(self, **changes) -> "SplitterSpec":
        return replace(self, schedule=replace(self.schedule, **changes))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["species"] = self.species.name
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SplitterSpec":
        d = dict(d)
        if "schedule" in d and isinstance(d["schedule"], dict):
            d["schedule"] = ScheduleParams(**d["schedule"])
        if "species" in d and isinstance(d["species"], str):
            d["species"] = get_species(d["species"])
        return cls(**d)

    def key(self) -> str:
        return stable_hash(self.to_dict())


def stable_hash(obj) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=repr)
    return hashlib.sha256(text.encode()).hexdigest()


# -- resonance calibration (three tweezers) -----------------------------------


def resonance_offset(d: float, depth: float, waist: float, species: Species,
                     grid: SpatialGrid, method: str = "fd") -> float:
    """Outer relative detuning at which the lowest state of a static
    three-tweezer row at spacing ``d`` is shared equally between the
    central cell and the outer cells.

    This is the centre of the central/outer avoided crossing.  Negative
    values mean the outer tweezers must be deeper than the central one.
    """
    x = grid.x
    inner = np.abs(x) < 0.5 * d

    def central_weight(dl):
        row = static_scene([-d, 0.0, d], depth, waist, species, [dl, 0.0, dl])
        es = solve_eigenstates(row.tweezer_potential(x, 0.0), grid, species, 1, method)
        dens = np.abs(es.states[0].psi) ** 2
        return float(np.sum(dens[inner]) * grid.dx) - 0.5

    return float(brentq(central_weight, -0.5, 0.2, xtol=1e-8))


@dataclass(frozen=True)
class ResonanceTable:
    separations: np.ndarray
    offsets: np.ndarray

    def offset(self, d):
        return np.interp(d, self.separations, self.offsets)


_RESONANCE_CACHE: dict = {}


def resonance_table(spec: "SplitterSpec", n_samples: int = 41) -> ResonanceTable:
    """Tabulated :func:`resonance_offset` over ``[d_min, d_max]`` (cached)."""
    s = spec.schedule
    key = (spec.depth_uK, spec.waist, spec.species.name, spec.n_points, spec.margin,
           spec.method, s.d_min, s.d_max, n_samples)
    if key not in _RESONANCE_CACHE:
        grid = spec.grid()
        ds = np.linspace(s.d_min, s.d_max, n_samples)
        cs = np.array([resonance_offset(d, spec.depth, spec.waist, spec.species, grid, spec.method)
                       for d in ds])
        _RESONANCE_CACHE[key] = ResonanceTable(ds, cs)
    return _RESONANCE_CACHE[key]


# -- states and ports ----------------------------------------------------------


def port_state(spec: SplitterSpec, scene: TweezerScene, t: float, index: int,
               grid: SpatialGrid, n: int | None = None) -> WaveFunction:
    """Eigenstate ``n`` of tweezer ``index`` on its own at time ``t``."""
    tw = scene.tweezers[index]
    n = spec.n if n is None else n
    alone = static_scene([tw.center(t)], tw.depth, tw.waist, scene.species, [tw.detuning(t)])
    V = alone.tweezer_potential(grid.x, 0.0)
    return solve_eigenstates(V, grid, scene.species, n + 1, spec.method).states[n]


def initial_state(spec: SplitterSpec, grid: SpatialGrid | None = None) -> WaveFunction:
    """Eigenstate ``spec.n`` of the occupied tweezer at the start of the splitter."""
    grid = grid or spec.grid()
    return port_state(spec, spec.scene(), 0.0, spec.occupied_index, grid)


def _port_order(scene: TweezerScene, t: float):
    return np.argsort(scene.centers(t))


def _ports(psi: WaveFunction, scene: TweezerScene, t: float, spec: SplitterSpec,
           with_fidelity: bool = True):
    order = _port_order(scene, t)
    centers = scene.centers(t)[order]
    pops = populations_in_cells(psi, port_boundaries(centers))
    if not with_fidelity:
        return pops, None
    fids = []
    for i in order:
        phi = port_state(spec, scene, t, i, psi.grid)
        fids.append(np.abs(overlap_fidelity(phi, psi)) ** 2)
    return pops, np.stack(fids, axis=-1)


# -- splitter and combiner -----------------------------------------------------


@dataclass
class SplitterResult:
    """Output of one (possibly batched) splitter pass.

    ``populations`` and ``fidelities`` are ordered by port position (left
    to right); the last axis runs over ports.
    """

    state: WaveFunction
    populations: np.ndarray
    fidelities: np.ndarray | None
    balance_error: np.ndarray
    central_population: np.ndarray | None
    flagged: np.ndarray
    propagation: PropagationResult

    @property
    def total_fidelity(self):
        return None if self.fidelities is None else self.fidelities.sum(axis=-1)


def _outer_balance(pops: np.ndarray, kind: str) -> np.ndarray:
    if kind == "two_tweezer":
        return np.abs(pops[..., 0] - 0.5)
    outer = pops[..., 0] + pops[..., 2]
    return np.abs(pops[..., 0] - 0.5 * outer)


def run_splitter(spec: SplitterSpec, psi0: WaveFunction | None = None, noise=None,
                 external: ExternalPotential = NO_EXTERNAL, record_every: int = 0,
                 with_fidelity: bool = True) -> SplitterResult:
    """Propagate through one splitter pass.

    ``noise`` is an optional relative depth stream of shape ``(n_steps,)``
    or ``(batch, n_steps)``.  Adiabaticity failures (balance error or
    central population above 0.05) are flagged, not raised.
    """
    grid = spec.grid()
    scene = spec.scene(external)
    psi0 = psi0 if psi0 is not None else initial_state(spec, grid)
    res = propagate(psi0, scene, 0.0, spec.schedule.T_proc, spec.timestep, noise=noise,
                    record_every=record_every)
    T = spec.schedule.T_proc
    pops, fids = _ports(res.state, scene, T, spec, with_fidelity)
    bal = _outer_balance(pops, spec.kind)
    central = pops[..., 1] if spec.kind == "three_tweezer" else None
    flagged = bal > ADIABATICITY_LIMIT
    if central is not None:
        flagged = flagged | (central > ADIABATICITY_LIMIT)
    return SplitterResult(res.state, pops, fids, bal, central, flagged, res)


@dataclass
class LoopOutcome:
    """Readout of a combiner pass or a full loop.

    ``populations`` are port probabilities ordered left to right.
    ``signal`` is the phase-sensitive observable: the opposite (right)
    port for two tweezers, the two outer ports for three tweezers.
    ``central_after_split`` and ``external_imbalance`` are the
    three-tweezer error indicators (NaN for two tweezers or when not
    applicable).  ``failed`` marks runs rejected by the central-port
    measurement.
    """

    populations: np.ndarray
    fidelities: np.ndarray | None
    signal: np.ndarray
    central_after_split: np.ndarray
    external_imbalance: np.ndarray
    phase: np.ndarray
    failed: np.ndarray
    flagged: np.ndarray
    overflow: np.ndarray
    seed: int | None = None


def _signal(pops: np.ndarray, kind: str) -> np.ndarray:
    if kind == "two_tweezer":
        return pops[..., 1]
    return pops[..., 0] + pops[..., 2]


def run_combiner(psi: WaveFunction, spec: SplitterSpec, noise=None,
                 external: ExternalPotential = NO_EXTERNAL, record_every: int = 0,
                 with_fidelity: bool = True) -> LoopOutcome:
    """Time-reversed splitter applied to ``psi``."""
    scene = spec.scene(external).reversed()
    T = spec.schedule.T_proc
    res = propagate(psi, scene, 0.0, T, spec.timestep, noise=noise, record_every=record_every)
    pops, fids = _ports(res.state, scene, T, spec, with_fidelity)
    sig = _signal(pops, spec.kind)
    if spec.kind == "three_tweezer":
        outer = pops[..., 0] + pops[..., 2]
        imb = np.where(outer > 0, np.abs(pops[..., 0] - pops[..., 2]), 0.0)
        flagged = imb > ADIABATICITY_LIMIT
    else:
        imb = np.full(sig.shape, np.nan)
        flagged = np.zeros(sig.shape, bool)
    nan = np.full(sig.shape, np.nan)
    return LoopOutcome(pops, fids, sig, nan, imb, np.zeros(sig.shape), np.zeros(sig.shape, bool),
                       flagged, res.overflow)


# -- interferometer loop -----------------------------------------------------------


@dataclass(frozen=True)
class LoopSpec:
    """Splitter, hold and combiner.

    ``hold_T`` is the hold duration in seconds and ``h`` the hold
    separation in um; the arms sit at ``hold_center -+ h/2`` along the
    axis of ``external``.  ``phi_det`` is the deterministic phase (rad)
    imprinted on the right arm.
    """

    splitter: SplitterSpec = field(default_factory=SplitterSpec)
    hold_T: float = 10.0
    h: float = 1.0e4
    phi_det: float = 0.0
    external: ExternalPotential = NO_EXTERNAL
    hold_center: float = 0.0

    def __post_init__(self):
        if not self.hold_T > 0:
            raise ValueError("hold time must be positive")
        if not self.h > 2 * self.splitter.waist:
            raise ValueError("hold separation must exceed two waists")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["splitter"] = self.splitter.to_dict()
        d["external"] = external_to_dict(self.external)
        return d

    def key(self) -> str:
        return stable_hash(self.to_dict())


def external_to_dict(ext: ExternalPotential) -> dict:
    d = {k: getattr(ext, k) for k in ("kind", "acceleration", "C4", "surface")}
    d["line_origin"] = list(ext.line_origin)
    d["line_direction"] = list(ext.line_direction)
    if ext.source is not None:
        d["source"] = asdict(ext.source)
    return d


def hold_phase_difference(spec: LoopSpec) -> float:
    """Deterministic phase of the right arm relative to the left after the
    hold: ``(U_left - U_right) T / hbar`` (rad)."""
    if spec.external.kind == "none":
        return 0.0
    sp = spec.splitter.species
    xs = 1e-6 * (spec.hold_center + np.array([-0.5, 0.5]) * spec.h)
    u = spec.external.energy_si(xs, sp)
    return float((u[0] - u[1]) * spec.hold_T / HBAR)


def run_loop_batch(spec: LoopSpec, phases, seeds, noise: NoiseSpec | None = None,
                   with_fidelity: bool = False, shot_noise: bool = True) -> LoopOutcome:
    """Run ``len(seeds)`` independent loops in one batched propagation.

    ``phases`` holds the deterministic phase of each run (overriding
    ``spec.phi_det``).  Each seed drives its own amplitude-noise streams,
    shot-noise draw and central-port Bernoulli sample, so a row does not
    depend on which other rows share the batch.
    """
    seeds = [int(s) for s in seeds]
    phases = np.asarray(phases, dtype=float).reshape(len(seeds))
    sp = spec.splitter
    n_steps = sp.n_steps
    dt_s = sp.timestep * 1e-3
    split_noise = combine_noise = None
    if noise is not None and noise.eta > 0:
        split_noise = np.stack([amplitude_noise_stream(noise, dt_s, n_steps, rng_for(s, 0))
                                for s in seeds])
        combine_noise = np.stack([amplitude_noise_stream(noise, dt_s, n_steps, rng_for(s, 1))
                                  for s in seeds])
    shot = np.zeros(len(seeds))
    if noise is not None and shot_noise:
        hold_noise = replace(noise, hold_T=spec.hold_T)
        shot = np.array([shot_noise_phase(hold_noise, rng_for(s, 2)) for s in seeds])
    physical = hold_phase_difference(spec)
    total = phases + physical + shot

    grid = sp.grid()
    psi0 = initial_state(sp, grid)
    batch = WaveFunction(np.repeat(psi0.psi[None, :], len(seeds), axis=0), grid)
    split = run_splitter(sp, batch, noise=split_noise, with_fidelity=False)
    state = split.state
    failed = np.zeros(len(seeds), bool)
    central = np.full(len(seeds), np.nan)
    if sp.kind == "three_tweezer":
        central = split.central_population
        draws = np.array([rng_for(s, 3).random() for s in seeds])
        failed = draws < central
        state = _project_outer(state, sp)
    # the imprint boundary is the midpoint of the arms, which is x = 0
    state = imprint_phase(state, np.mod(total, 2 * math.pi))
    out = run_combiner(state, sp, noise=combine_noise, with_fidelity=with_fidelity)
    out.central_after_split = central
    out.phase = total
    out.failed = failed
    out.flagged = out.flagged | split.flagged
    out.overflow = out.overflow | split.propagation.overflow
    return out


def _project_outer(psi: WaveFunction, spec: SplitterSpec) -> WaveFunction:
    """Remove the central-cell amplitude and renormalise, keeping the
    relative weights and phases of the outer arms."""
    scene = spec.scene()
    centers = np.sort(scene.centers(spec.schedule.T_proc))
    edges = port_boundaries(centers)
    x = psi.grid.x
    keep = (x < edges[0]) | (x >= edges[1])
    out = np.where(keep, psi.psi, 0.0)
    return WaveFunction(out, psi.grid).normalized()


def run_loop(spec: LoopSpec, noise: NoiseSpec | None = None, seed: int = 0,
             with_fidelity: bool = True) -> LoopOutcome:
    """One interferometer loop at ``spec.phi_det``."""
    out = run_loop_batch(spec, [spec.phi_det], [seed], noise, with_fidelity)
    scalar = LoopOutcome(
        out.populations[0], None if out.fidelities is None else out.fidelities[0],
        float(out.signal[0]), float(out.central_after_split[0]),
        float(out.external_imbalance[0]), float(out.phase[0]), bool(out.failed[0]),
        bool(out.flagged[0]), bool(out.overflow[0]), seed)
    return scalar


# -- adiabaticity tuner ------------------------------------------------------------


@dataclass
class TuneResult:
    schedule: ScheduleParams
    metric: float
    balance_errors: dict
    evaluations: int
    converged: bool
    history: list = field(default_factory=list)


def splitter_metric(spec: SplitterSpec, states=(0, 1)):
    """Worst case over ``states`` of balance error plus infidelity (and
    central population for three tweezers).  Returns ``(metric, per-state
    balance errors)``."""
    worst = 0.0
    errors = {}
    for n in states:
        r = run_splitter(replace(spec, n=n))
        m = float(r.balance_error) + (1.0 - float(r.total_fidelity))
        if r.central_population is not None:
            m += float(r.central_population)
        errors[n] = float(r.balance_error)
        worst = max(worst, m)
    return worst, errors


_GOLD = (math.sqrt(5) - 1) / 2


def adiabaticity_tuner(spec: SplitterSpec, bounds: dict, states=(0, 1), max_evals: int = 200,
                       target: float = 0.02, sweeps: int = 3, per_param: int = 6,
                       cache_dir: str | os.PathLike | None = None) -> TuneResult:
    """Round-robin golden-section search over schedule parameters.

    ``bounds`` maps any of ``T_proc``, ``d_min``, ``d_max`` to ``(lo, hi)``.
    Each sweep runs ``per_param`` golden-section evaluations per parameter
    with the others held at their current best.  The search stops at
    ``max_evals`` evaluations or once every state meets ``target``.  Results
    are cached in ``cache_dir`` under a hash of the inputs.
    """
    if not bounds:
        raise ValueError("no parameters to tune")
    for name, (lo, hi) in bounds.items():
        if name not in ("T_proc", "d_min", "d_max"):
            raise ValueError(f"cannot tune {name!r}")
        if not hi > lo:
            raise ValueError(f"degenerate bounds for {name}: {lo}, {hi}")
    key = stable_hash({"spec": spec.to_dict(), "bounds": bounds, "states": list(states),
                       "max_evals": max_evals, "target": target, "sweeps": sweeps,
                       "per_param": per_param})
    path = Path(cache_dir) / f"tuned-{key[:16]}.json" if cache_dir else None
    if path is not None and path.exists():
        d = json.loads(path.read_text())
        return TuneResult(ScheduleParams(**d["schedule"]), d["metric"],
                          {int(k): v for k, v in d["balance_errors"].items()}, d["evaluations"],
                          d["converged"], d["history"])

    seen: dict = {}
    history: list = []

    def evaluate(sched: ScheduleParams):
        k = (sched.d_min, sched.d_max, sched.T_proc)
        if k not in seen:
            if len(seen) >= max_evals:
                raise StopIteration
            try:
                m, errs = splitter_metric(replace(spec, schedule=sched), states)
            except ValueError:
                m, errs = math.inf, {}
            seen[k] = (m, errs)
            history.append({"d_min": sched.d_min, "d_max": sched.d_max,
                            "T_proc": sched.T_proc, "metric": m})
        return seen[k][0]

    def done(sched):
        errs = seen[(sched.d_min, sched.d_max, sched.T_proc)][1]
        return bool(errs) and all(e < target for e in errs.values())

    best = spec.schedule
    try:
        best_m = evaluate(best)
        for _ in range(sweeps):
            if done(best):
                break
            for name, (lo, hi) in bounds.items():
                def f(v, name=name):
                    try:
                        return evaluate(replace(best, **{name: v}))
                    except ValueError:
                        return math.inf
                a, b = lo, hi
                c, d = b - _GOLD * (b - a), a + _GOLD * (b - a)
                fc, fd = f(c), f(d)
                for _ in range(max(per_param - 2, 0)):
                    if fc < fd:
                        b, d, fd = d, c, fc
                        c = b - _GOLD * (b - a)
                        fc = f(c)
                    else:
                        a, c, fc = c, d, fd
                        d = a + _GOLD * (b - a)
                        fd = f(d)
                for v, fv in ((c, fc), (d, fd)):
                    if fv < best_m:
                        best, best_m = replace(best, **{name: v}), fv
                if done(best):
                    break
    except StopIteration:
        pass
    errs = seen[(best.d_min, best.d_max, best.T_proc)][1]
    result = TuneResult(best, best_m, errs, len(seen), done(best), history)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({"schedule": asdict(best), "metric": best_m,
                                    "balance_errors": errs, "evaluations": len(seen),
                                    "converged": result.converged, "history": history}))
    return result


# -- instantaneous spectrum --------------------------------------------------------


@dataclass
class SpectrumTrace:
    """Branch-matched instantaneous eigenenergies.

    ``energies[i, b]`` is branch ``b`` at ``times[i]``.  ``character``
    labels each branch sample as ``L``/``R``/``C`` (localised in one
    tweezer), ``S``/``A`` (symmetric/antisymmetric split) or ``M`` (mixed).
    ``min_overlap`` is the weakest continuity overlap used to match each
    time to the previous one; values below 0.5 are ambiguous.
    """

    times: np.ndarray
    energies: np.ndarray
    character: list
    min_overlap: np.ndarray
    ambiguous: np.ndarray

    def gap(self, lower: int = 0, upper: int = 1) -> np.ndarray:
        return self.energies[:, upper] - self.energies[:, lower]


def _character(phi: np.ndarray, x: np.ndarray, dx: float, edges) -> str:
    dens = np.abs(phi) ** 2 * dx
    idx = np.searchsorted(edges, x)
    cells = np.array([dens[idx == c].sum() for c in range(len(edges) + 1)]) / dens.sum()
    if cells.max() > 0.9:
        names = "LR" if len(cells) == 2 else "LCR"
        return names[int(np.argmax(cells))]
    if len(cells) == 3 and cells[1] > 0.1:
        return "M"
    # x_i -> -x_i maps index i to (N - i) mod N on a centred grid
    mirror = np.roll(phi[::-1], 1)
    s = float(np.real(np.sum(np.conj(phi) * mirror)) * dx) / dens.sum()
    if s > 0.5:
        return "S"
    if s < -0.5:
        return "A"
    return "M"


def spectrum_trace(spec: SplitterSpec, n_levels: int = 3, n_times: int = 101,
                   t_span: tuple | None = None) -> SpectrumTrace:
    """Lowest ``n_levels`` instantaneous eigenenergies along the splitter.

    Branches are followed by maximal overlap between consecutive times
    (Hungarian assignment on ``|<phi_i(t_prev)|phi_j(t)>|``).
    """
    if not 1 <= n_levels <= 6:
        raise ValueError("n_levels must be between 1 and 6")
    grid = spec.grid()
    scene = spec.scene()
    x, dx = grid.x, grid.dx
    t0, t1 = t_span or (0.0, spec.schedule.T_proc)
    times = np.linspace(t0, t1, n_times)
    # solve a few extra levels so that branches entering from above are caught
    extra = min(n_levels + 2, 8)
    energies = np.empty((n_times, n_levels))
    character, min_ov = [], np.ones(n_times)
    prev = None
    for i, t in enumerate(times):
        V = scene.tweezer_potential(x, t)
        es = solve_eigenstates(V, grid, scene.species, extra, spec.method)
        vecs = np.array([s.psi for s in es.states])
        if prev is None:
            cols = np.arange(n_levels)
        else:
            ov = np.abs(prev.conj() @ vecs.T) * dx
            rows, cols = linear_sum_assignment(-ov)
            cols = cols[:n_levels]
            min_ov[i] = ov[np.arange(n_levels), cols].min()
        energies[i] = es.energies[cols]
        prev = vecs[cols]
        centers = np.sort(scene.centers(t))
        edges = port_boundaries(centers)
        character.append([_character(prev[b], x, dx, edges) for b in range(n_levels)])
    return SpectrumTrace(times, energies, character, min_ov, min_ov < 0.5)


@dataclass
class AvoidedCrossing:
    time: float
    gap: float
    before: str
    after: str


def find_avoided_crossing(trace: SpectrumTrace, lower: int = 0, upper: int = 1) -> AvoidedCrossing | None:
    """Smallest interior gap between two branches across which the lower
    branch changes character (for example from ``C`` to ``S``).

    The characters are read at the nearest unmixed samples on either side
    of the gap minimum, since far from the crossing a branch may become
    degenerate with another and its label is then arbitrary.
    """
    gap = trace.gap(lower, upper)
    labels = [c[lower] for c in trace.character]
    interior = np.arange(1, len(gap) - 1)
    if not len(interior):
        return None
    i = int(interior[np.argmin(gap[interior])])
    before = next((l for l in reversed(labels[:i]) if l != "M"), None)
    after = next((l for l in labels[i + 1:] if l != "M"), None)
    if before is None or after is None or before == after:
        return None
    return AvoidedCrossing(float(trace.times[i]), float(gap[i]), before, after)


# -- CSV export ----------------------------------------------------------------------


def write_csv(path, columns: dict):
    """Write equal-length columns to a comma-separated file with a header."""
    names = list(columns)
    data = [np.asarray(columns[k]).ravel() for k in names]
    n = {len(d) for d in data}
    if len(n) != 1:
        raise ValueError("columns must have equal length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*data):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def trace_columns(trace: SpectrumTrace) -> dict:
    cols = {"t_ms": trace.times}
    for b in range(trace.energies.shape[1]):
        cols[f"E{b}"] = trace.energies[:, b]
        cols[f"char{b}"] = [c[b] for c in trace.character]
    cols["min_overlap"] = trace.min_overlap
    return cols


def population_trace(spec: SplitterSpec, every: int = 100, combine: bool = False,
                     psi: WaveFunction | None = None) -> dict:
    """Port populations and energy samples along a splitter (or combiner)
    pass, for CSV export."""
    grid = spec.grid()
    scene = spec.scene().reversed() if combine else spec.scene()
    psi = psi if psi is not None else initial_state(spec, grid)
    res = propagate(psi, scene, 0.0, spec.schedule.T_proc, spec.timestep, record_every=every)
    cols = {"t_ms": np.array(res.snapshot_times)}
    n_ports = len(scene.tweezers)
    pops = []
    for t, dens in zip(res.snapshot_times, res.snapshots):
        centers = np.sort(scene.centers(t))
        edges = port_boundaries(centers)
        idx = np.searchsorted(edges, grid.x)
        p = np.array([dens[idx == c].sum() for c in range(n_ports)]) * grid.dx
        pops.append(p / p.sum())
    pops = np.array(pops)
    for j in range(n_ports):
        cols[f"P{j}"] = pops[:, j]
    return cols
