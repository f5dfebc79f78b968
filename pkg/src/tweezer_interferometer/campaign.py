"""Monte Carlo fringe-scan campaigns.

A :class:`RealizationTable` stores full interferometer loops, each with its
own amplitude-noise realization and a deterministic phase on a uniform grid
over ``[0, 2 pi)``.  A fringe scan then emulates an experiment: for every
run it adds a shot-noise phase, picks the table entry with the closest
phase and samples an exit port per atom.  Fitting the scanned fringe and
repeating the campaign gives the phase uncertainty of a scenario.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .noise import NoiseSpec, power_for_depth, rng_for
from .potentials import NO_EXTERNAL
from .protocols import (DEFAULT_THREE_TWEEZER_SCHEDULE, DEFAULT_TWO_TWEEZER_SCHEDULE,
                        LoopSpec, SplitterSpec, run_loop_batch, stable_hash)

log = logging.getLogger(__name__)

TABLE_FORMAT_VERSION = 1
CACHE_ENV = "TWEEZER_CACHE_DIR"
N_SCAN_PHASES = 20
MAX_FIT_ITERATIONS = 500
AMPLITUDE_FLOOR = 1e-9  # fits of exactly flat data have A and sigma_A at roundoff

SPLITTER_TYPES = {"II": "two_tweezer", "III": "three_tweezer"}


def cache_dir(path=None) -> Path:
    """Directory holding realization tables: ``path``, else ``$TWEEZER_CACHE_DIR``,
    else ``~/.cache/tweezer_interferometer``."""
    if path is None:
        path = os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "tweezer_interferometer"
    return Path(path)


# -- scenarios ---------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """An experimental schedule for a fringe scan.

    ``repetitions`` runs are made at each of the scanned deterministic
    phases, each run holding ``atoms`` atoms for ``T`` seconds.
    ``phase_sigma`` is the shot-noise phase width (rad) added per run.
    """

    label: str
    repetitions: int
    atoms: int
    T: float
    phase_sigma: float

    def __post_init__(self):
        if self.repetitions < 1 or self.atoms < 1:
            raise ValueError("repetitions and atoms per run must be at least 1")
        if not (self.T > 0 and self.phase_sigma >= 0):
            raise ValueError("T must be positive and phase_sigma non-negative")

    def runs(self, n_phases: int = N_SCAN_PHASES) -> int:
        return self.repetitions * n_phases

    def detections(self, n_phases: int = N_SCAN_PHASES) -> int:
        return self.runs(n_phases) * self.atoms

    def total_runtime(self, overhead: float = 5.0, n_phases: int = N_SCAN_PHASES) -> float:
        """Wall-clock duration (s) of the physical experiment: every run lasts
        the hold time plus ``overhead`` seconds of loading and detection."""
        return self.runs(n_phases) * (self.T + overhead)

    def to_dict(self) -> dict:
        return asdict(self)


SCENARIOS = {
    "1": Scenario("1", repetitions=10, atoms=1, T=10.0, phase_sigma=0.2),
    "2": Scenario("2", repetitions=10, atoms=10, T=10.0, phase_sigma=0.2),
    "3": Scenario("3", repetitions=285, atoms=100, T=10.0, phase_sigma=0.2),
    "4": Scenario("4", repetitions=66, atoms=100, T=60.0, phase_sigma=0.49),
}


def get_scenario(label) -> Scenario:
    try:
        return SCENARIOS[str(label)]
    except KeyError:
        raise ValueError(f"unknown scenario {label!r}; known: {sorted(SCENARIOS)}") from None


# -- campaign presets ----------------------------------------------------------------

def campaign_splitter(splitter_type: str, n_points: int = 512, margin: float = 4.0,
                      dt: float | None = None) -> SplitterSpec:
    """Splitter used for realization tables of splitter type ``"II"`` or ``"III"``.

    The grid is coarser than the single-run default; the fringe and the
    central leakage agree with the fine grid at the few 1e-3 level.
    """
    kind = SPLITTER_TYPES.get(splitter_type, splitter_type)
    if kind == "two_tweezer":
        return SplitterSpec(kind=kind, schedule=DEFAULT_TWO_TWEEZER_SCHEDULE, depth_uK=116.0,
                            n_points=n_points, margin=margin, dt=1e-3 if dt is None else dt)
    if kind == "three_tweezer":
        return SplitterSpec(kind=kind, schedule=DEFAULT_THREE_TWEEZER_SCHEDULE, depth_uK=23.0,
                            n_points=n_points, margin=margin, dt=2e-3 if dt is None else dt)
    raise ValueError(f"unknown splitter type {splitter_type!r}")


def campaign_noise(splitter: SplitterSpec, eta: float, seed: int = 0) -> NoiseSpec:
    """Noise spec whose reference power ``P0`` is the power of a tweezer of
    the splitter's depth and waist."""
    P0 = power_for_depth(splitter.depth_uK * 1e-6, splitter.waist * 1e-6)
    return NoiseSpec(eta=float(eta), P0=P0, seed=seed)


# -- realization table ---------------------------------------------------------------

@dataclass(frozen=True)
class RealizationTable:
    """Immutable lookup table of noisy loop outcomes.

    Row ``k`` holds the deterministic phase ``phases[k] = 2 pi k / n_real``,
    the noise seed, the port probabilities after the combiner, the signal
    port probability, the central-tweezer probability after splitting
    (three tweezers; NaN otherwise) and the sampled failure flag.
    """

    phases: np.ndarray
    seeds: np.ndarray
    probabilities: np.ndarray
    signal: np.ndarray
    central: np.ndarray
    failed: np.ndarray
    overflow: np.ndarray
    meta: dict
    build_seconds: float = 0.0

    def __post_init__(self):
        for name in ("phases", "seeds", "probabilities", "signal", "central", "failed", "overflow"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.phases)
        if any(len(getattr(self, f)) != n for f in ("seeds", "probabilities", "signal",
                                                    "central", "failed", "overflow")):
            raise ValueError("table columns differ in length")

    @property
    def n_real(self) -> int:
        return len(self.phases)

    @property
    def splitter_kind(self) -> str:
        return self.meta["loop"]["splitter"]["kind"]

    @property
    def eta(self) -> float:
        return float(self.meta["noise"]["eta"])

    @property
    def fail_probability(self) -> float:
        """Mean probability of finding the atom in the central tweezer after
        splitting (0 for two tweezers)."""
        if self.splitter_kind != "three_tweezer":
            return 0.0
        return float(np.mean(self.central))

    @property
    def flagged_fraction(self) -> float:
        return float(np.mean(self.failed))

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for name in ("phases", "seeds", "probabilities", "signal", "central", "failed", "overflow"):
            arr = np.ascontiguousarray(getattr(self, name))
            h.update(name.encode())
            h.update(str(arr.dtype).encode())
            h.update(arr.tobytes())
        h.update(json.dumps(self.meta, sort_keys=True).encode())
        return h.hexdigest()

    def save(self, path) -> Path:
        """Write the table as ``.npz`` (no pickled objects) with its content hash."""
        path = Path(path)
        header = {"version": TABLE_FORMAT_VERSION, "meta": self.meta,
                  "content_hash": self.content_hash(), "build_seconds": self.build_seconds}
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.name + ".tmp")
            with open(tmp, "wb") as fh:
                np.savez(fh, phases=self.phases, seeds=self.seeds,
                         probabilities=self.probabilities, signal=self.signal,
                         central=self.central, failed=self.failed, overflow=self.overflow,
                         header=np.array(json.dumps(header, sort_keys=True)))
            os.replace(tmp, path)
        except OSError as exc:
            raise TablePersistenceError(f"cannot write realization table to {path}: {exc}") from exc
        return path

    @classmethod
    def load(cls, path) -> "RealizationTable":
        """Read a table and verify its format version and content hash."""
        path = Path(path)
        try:
            with np.load(path, allow_pickle=False) as data:
                header = json.loads(str(data["header"]))
                arrays = {k: data[k] for k in ("phases", "seeds", "probabilities", "signal",
                                               "central", "failed", "overflow")}
        except (OSError, KeyError, ValueError) as exc:
            raise TablePersistenceError(f"cannot read realization table {path}: {exc}") from exc
        if header.get("version") != TABLE_FORMAT_VERSION:
            raise TablePersistenceError(f"{path}: unsupported table version {header.get('version')}")
        table = cls(**arrays, meta=header["meta"], build_seconds=header.get("build_seconds", 0.0))
        if table.content_hash() != header["content_hash"]:
            raise TablePersistenceError(f"{path}: content hash mismatch")
        return table


class TablePersistenceError(RuntimeError):
    """A realization table could not be written, read or verified."""


def table_key(spec: LoopSpec, noise: NoiseSpec, n_real: int, master_seed: int) -> str:
    return stable_hash({"version": TABLE_FORMAT_VERSION, "loop": spec.key(),
                        "noise": stable_hash(noise.to_dict()), "n_real": int(n_real),
                        "master_seed": int(master_seed)})


def entry_seeds(master_seed: int, n_real: int) -> np.ndarray:
    """Per-entry seeds from a counter-based split of ``master_seed``: entry
    ``k`` depends only on ``(master_seed, k)``."""
    return np.array([np.random.SeedSequence(int(master_seed), spawn_key=(k,)).generate_state(1)[0]
                     for k in range(n_real)], dtype=np.uint64)


def _table_chunk(args):
    spec, noise, phases, seeds = args
    out = run_loop_batch(spec, phases, seeds, noise=noise, shot_noise=False)
    return out.populations, out.signal, out.central_after_split, out.failed, out.overflow


def build_realization_table(spec: LoopSpec, noise: NoiseSpec, n_real: int = 400,
                            master_seed: int = 0, batch_size: int = 100, workers: int = 1,
                            cache: bool = True, directory=None) -> RealizationTable:
    """Simulate ``n_real`` noisy loops at phases ``2 pi k / n_real``.

    Shot-noise and hold phases are left out; the fringe scan adds them.
    With ``cache`` the table is read from, or written to,
    ``<cache dir>/table-<key>.npz`` where the key hashes the loop spec,
    the noise spec, ``n_real`` and ``master_seed``.  Results do not depend
    on ``batch_size`` or ``workers``.
    """
    if n_real < 100:
        raise ValueError("a realization table needs at least 100 entries")
    if spec.external is not NO_EXTERNAL and spec.external.kind != "none":
        raise ValueError("tables are built without an external potential; "
                         "the physical phase enters in the fringe scan")
    key = table_key(spec, noise, n_real, master_seed)
    path = cache_dir(directory) / f"table-{key[:24]}.npz"
    if cache and path.exists():
        log.info("loading cached realization table %s", path)
        return RealizationTable.load(path)

    phases = 2 * math.pi * np.arange(n_real) / n_real
    seeds = entry_seeds(master_seed, n_real)
    chunks = [(spec, noise, phases[i:i + batch_size], seeds[i:i + batch_size])
              for i in range(0, n_real, batch_size)]
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_table_chunk, chunks))
    else:
        parts = []
        for i, c in enumerate(chunks):
            parts.append(_table_chunk(c))
            log.info("table chunk %d/%d done", i + 1, len(chunks))
    elapsed = time.perf_counter() - t0
    cols = [np.concatenate([p[j] for p in parts]) for j in range(5)]
    meta = {"loop": spec.to_dict(), "noise": noise.to_dict(), "n_real": int(n_real),
            "master_seed": int(master_seed), "key": key}
    table = RealizationTable(phases, seeds, cols[0], cols[1], cols[2], cols[3].astype(bool),
                             cols[4].astype(bool), json.loads(json.dumps(meta)), elapsed)
    if cache:
        table.save(path)
        log.info("saved realization table %s (%.0f s)", path, elapsed)
    return table


def nearest_entries(table_phases, phi) -> np.ndarray:
    """Index of the table phase closest to each ``phi`` in circular distance;
    ties go to the lower phase."""
    p = np.asarray(table_phases, float)
    phi = np.asarray(phi, float)
    d = np.abs(np.mod(phi[..., None] - p + math.pi, 2 * math.pi) - math.pi)
    # argmin returns the first minimum; order rows by phase so that is the lower one
    order = np.argsort(p, kind="stable")
    return order[np.argmin(d[..., order], axis=-1)]


# -- fringe scan ------------------------------------------------------------------------

@dataclass
class FringeData:
    """Counts from one fringe scan.

    ``counts[j]`` atoms left by the signal port out of ``totals[j]``
    detected atoms at deterministic phase ``phases[j]``; runs that failed
    contribute no detections.
    """

    phases: np.ndarray
    counts: np.ndarray
    totals: np.ndarray
    runs: np.ndarray
    failed_runs: np.ndarray
    phi_physical: float
    seed: int

    @property
    def fraction(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.counts / self.totals

    @property
    def failed_fraction(self) -> float:
        return float(self.failed_runs.sum() / self.runs.sum())


def scan_phases(n_phases: int = N_SCAN_PHASES) -> np.ndarray:
    return 2 * math.pi * np.arange(n_phases) / n_phases


def run_fringe_scan(table: RealizationTable, scenario: Scenario, phi_physical: float,
                    seed: int, n_phases: int = N_SCAN_PHASES) -> FringeData:
    """Emulate one fringe scan of ``scenario`` at physical phase ``phi_physical``.

    Every run draws one shot-noise phase shared by its atoms, takes the
    table entry closest to the total phase, and samples one exit port per
    atom.  A run whose entry is flagged as failed yields no detections.
    """
    rng = rng_for(seed)
    det = scan_phases(n_phases)
    reps = scenario.repetitions
    shot = scenario.phase_sigma * rng.standard_normal((n_phases, reps))
    total = det[:, None] + phi_physical + shot
    idx = nearest_entries(table.phases, np.mod(total, 2 * math.pi))
    p = table.signal[idx]
    hits = (rng.random((n_phases, reps, scenario.atoms)) < p[..., None]).sum(axis=-1)
    ok = ~table.failed[idx]
    counts = np.where(ok, hits, 0).sum(axis=1)
    totals = ok.sum(axis=1) * scenario.atoms
    return FringeData(det, counts.astype(float), totals.astype(float),
                      np.full(n_phases, reps), (~ok).sum(axis=1), float(phi_physical), int(seed))


# -- fitting ------------------------------------------------------------------------------

@dataclass
class FringeFit:
    """Fit of ``A sin^2((phi + phi_hat)/2) + B`` to a scanned fringe.

    ``undefined`` marks fits that failed or whose amplitude is consistent
    with zero at two standard deviations; ``converged`` is False when the
    optimiser did not report convergence within the iteration budget.
    """

    phi_hat: float
    sigma_phi: float
    amplitude: float
    sigma_amplitude: float
    offset: float
    converged: bool
    undefined: bool
    reason: str = ""
    iterations: int = 0


def wrap_phase(phi):
    """Map to ``(-pi, pi]``."""
    out = math.pi - np.mod(math.pi - np.asarray(phi, float), 2 * math.pi)
    return float(out) if np.ndim(out) == 0 else out


def fringe_model(phi, A, B, phi_hat):
    return A * np.sin(0.5 * (np.asarray(phi) + phi_hat)) ** 2 + B


def fit_fringe(data: FringeData | tuple, weights=None) -> FringeFit:
    """Levenberg-Marquardt fit of the fringe model with ``A``, ``B`` and
    ``phi_hat`` free.

    ``data`` is a :class:`FringeData` (fraction per phase weighted by the
    number of detections) or a ``(phases, values)`` pair.  The start point
    is the exact linear solution of the equivalent model
    ``c0 + c1 cos(phi) + c2 sin(phi)``.
    """
    if isinstance(data, FringeData):
        phases, y, w = data.phases, data.fraction, np.sqrt(data.totals)
    else:
        phases, y = (np.asarray(a, float) for a in data)
        w = np.ones_like(y) if weights is None else np.asarray(weights, float)
    good = np.isfinite(y) & (w > 0)
    phases, y, w = phases[good], y[good], w[good]
    nan = float("nan")
    if len(np.unique(np.round(np.mod(phases, 2 * math.pi), 12))) < 3:
        return FringeFit(nan, nan, nan, nan, nan, False, True, "fewer than 3 phases with counts")

    M = np.stack([np.ones_like(phases), np.cos(phases), np.sin(phases)], axis=1)
    c, *_ = np.linalg.lstsq(M * w[:, None], y * w, rcond=None)
    half_amp = math.hypot(c[1], c[2])
    x0 = np.array([2 * half_amp, c[0] - half_amp, math.atan2(c[2], -c[1])])

    def resid(p):
        return w * (fringe_model(phases, *p) - y)

    res = least_squares(resid, x0, method="lm", max_nfev=MAX_FIT_ITERATIONS * 4,
                        xtol=1e-12, ftol=1e-12, gtol=1e-12)
    A, B, phi_hat = res.x
    if A < 0:  # A sin^2(u/2) + B == -A sin^2((u + pi)/2) + (B + A)
        A, B, phi_hat = -A, B + A, phi_hat + math.pi
    dof = max(len(y) - 3, 1)
    s2 = float(np.sum(res.fun**2)) / dof
    J = res.jac
    try:
        cov = np.linalg.inv(J.T @ J) * s2
        sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        sig = np.full(3, np.inf)
    converged = bool(res.success) and res.nfev <= MAX_FIT_ITERATIONS * 4
    undefined, reason = False, ""
    if not np.all(np.isfinite(res.x)):
        undefined, reason = True, "non-finite parameters"
    elif not A > max(2 * sig[0], AMPLITUDE_FLOOR):
        undefined, reason = True, "amplitude consistent with zero"
    elif not converged:
        reason = "not converged"
    return FringeFit(wrap_phase(phi_hat), float(sig[2]), float(A), float(sig[0]), float(B),
                     converged, undefined, reason, int(res.nfev))


# -- campaigns -----------------------------------------------------------------------------

@dataclass
class CampaignResult:
    """Outcome of repeated fringe scans of one scenario against one table."""

    scenario: str
    eta: float
    splitter_kind: str
    phi_physical: float
    uncertainty: float
    mean_error: float
    fail_ratio: float
    failed_run_fraction: float
    undefined: bool
    n_campaigns: int
    n_undefined: int
    fitted_phases: list = field(default_factory=list)
    table_hash: str = ""

    @property
    def splitter_type(self) -> str:
        return {v: k for k, v in SPLITTER_TYPES.items()}.get(self.splitter_kind, self.splitter_kind)

    def row(self) -> dict:
        """Flat record matching the columns of an error-estimation table."""
        return {"eta": self.eta, "splitter_type": self.splitter_type,
                "fail_ratio": self.fail_ratio, "scenario": self.scenario,
                "uncertainty_mrad": None if self.undefined else 1e3 * self.uncertainty,
                "undefined": self.undefined, "n_campaigns": self.n_campaigns,
                "n_undefined": self.n_undefined, "failed_run_fraction": self.failed_run_fraction,
                "mean_error_mrad": None if self.undefined else 1e3 * self.mean_error,
                "table_hash": self.table_hash}


def estimate_uncertainty(table: RealizationTable, scenario: Scenario, n_campaigns: int = 50,
                         phi_physical: float = 0.0, seed: int = 0) -> CampaignResult:
    """Repeat scan and fit ``n_campaigns`` times with independent seeds.

    The uncertainty is the standard deviation of the wrapped error
    ``phi_hat - phi_physical`` over fits that are not undefined; the
    result is undefined when more than half of the fits are.  The fail
    ratio is the mean central-tweezer probability of the table.
    """
    if n_campaigns < 20:
        raise ValueError("need at least 20 campaigns")
    fits, failed = [], []
    for c in range(n_campaigns):
        data = run_fringe_scan(table, scenario, phi_physical, seed=_campaign_seed(seed, c))
        fits.append(fit_fringe(data))
        failed.append(data.failed_fraction)
    ok = [f for f in fits if not f.undefined]
    n_undef = len(fits) - len(ok)
    errors = np.array([wrap_phase(f.phi_hat - phi_physical) for f in ok])
    undefined = n_undef > 0.5 * len(fits) or len(ok) < 2
    unc = float(np.std(errors, ddof=1)) if len(ok) >= 2 else float("nan")
    mean = float(np.mean(errors)) if len(ok) else float("nan")
    return CampaignResult(scenario.label, table.eta, table.splitter_kind, phi_physical, unc, mean,
                          table.fail_probability, float(np.mean(failed)), undefined,
                          n_campaigns, n_undef, [f.phi_hat for f in fits], table.content_hash())


def _campaign_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(int(seed), spawn_key=(index,)).generate_state(1)[0])


def campaign_table(splitter_type: str, eta: float, n_real: int = 400, master_seed: int = 0,
                   workers: int = 1, directory=None, cache: bool = True,
                   **splitter_kw) -> RealizationTable:
    """Realization table for a splitter type (``"II"`` or ``"III"``) and noise level."""
    sp = campaign_splitter(splitter_type, **splitter_kw)
    return build_realization_table(LoopSpec(splitter=sp), campaign_noise(sp, eta), n_real,
                                   master_seed, workers=workers, cache=cache, directory=directory)


def write_rows_csv(path, rows: list[dict]) -> Path:
    import csv

    path = Path(path)
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for r in rows:
            writer.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v))
                             for k, v in r.items()})
    return path


def write_rows_json(path, rows: list[dict]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(rows, indent=2, sort_keys=True), encoding="utf-8")
    return path
