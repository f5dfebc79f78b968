"""Command-line entry point.

``tweezer-interferometer run CONFIG --output-dir DIR`` executes the
pipeline named in a YAML or JSON config file and writes its artifacts with
a manifest of hashes.  ``tweezer-interferometer replay MANIFEST`` reruns a
manifest into a fresh directory and checks that every artifact matches.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .applications import (BigGCase, CPCase, SensitivityCase, big_g_phases, cp_phase_map,
                           gravity_phase, kc_phase, reference_source_mass, species_gain)
from .campaign import (RealizationTable, TablePersistenceError, build_realization_table,
                       campaign_noise,
                       campaign_splitter, estimate_uncertainty, get_scenario, write_rows_csv,
                       write_rows_json)
from .noise import NoiseSpec, relative_shot_noise, shot_noise_phase_sigma
from .potentials import NO_EXTERNAL, ExternalPotential
from .protocols import (DEFAULT_THREE_TWEEZER_SCHEDULE, DEFAULT_TWO_TWEEZER_SCHEDULE, LoopSpec,
                        SplitterSpec, find_avoided_crossing, population_trace, run_combiner,
                        run_loop, run_splitter, spectrum_trace, trace_columns, write_csv)
from .solver import GridOverflow, imprint_phase
from .units import G_EARTH, get_species

log = logging.getLogger("tweezer_interferometer")

SCHEMA_VERSION = 1
COMMANDS = ("split", "combine", "loop", "spectrum", "table", "campaign", "cp-map", "big-g",
            "sensitivity")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_OVERFLOW = 3
EXIT_PERSISTENCE = 4
EXIT_REPRODUCIBILITY = 5
EXIT_OUTPUT_EXISTS = 6


class ConfigError(ValueError):
    """The run configuration does not match the schema."""


class ReproducibilityError(RuntimeError):
    """A replayed artifact differs from the one recorded in its manifest."""


# -- schema ------------------------------------------------------------------------------

_SPLITTER_KEYS = {"kind": str, "n": int, "species": str, "depth_uK": float, "waist": float,
                  "n_points": int, "margin": float, "dt": float, "eigen_method": str,
                  "energy_referenced": bool, "d_min": float, "d_max": float, "T_proc": float,
                  "delta_max": float}
_NOISE_KEYS = {"eta": float, "P0": float, "hold_depth": float, "hold_waist": float,
               "shot_phase_sigma": float, "shot_noise": bool}
_EXTERNAL_KEYS = {"kind": str, "acceleration": float, "C4": float, "surface": float}

SCHEMAS: dict[str, dict] = {
    "split": {"splitter": dict, "record_every": int},
    "combine": {"splitter": dict, "phi": float, "record_every": int},
    "loop": {"splitter": dict, "noise": dict, "external": dict, "hold_T": float, "h_um": float,
             "phi_det": float, "hold_center_um": float},
    "spectrum": {"splitter": dict, "n_levels": int, "n_times": int},
    "table": {"splitter_type": str, "eta": float, "n_real": int, "n_points": int,
              "margin": float, "dt": float},
    "campaign": {"splitter_type": str, "eta": float, "n_real": int, "n_campaigns": int,
                 "scenarios": list, "phi_physical": float, "n_points": int, "margin": float,
                 "dt": float},
    "cp-map": {"C4": float, "reference_um": float, "T": float, "z_min_um": float,
               "z_max_um": float, "n_z": int, "z_um": list, "sigma_phase_mrad": float,
               "scenario_hours": float},
    "big-g": {"mass": float, "radius": float, "wedge_deg": float, "arm_distances_mm": list,
              "species": str, "T": float, "sigma_phase_mrad": float},
    "sensitivity": {"species": str, "h_mm": float, "T": float, "a": float,
                    "k_eff": float, "T_kc": float, "P0": float},
}
_SUBSCHEMAS = {"splitter": _SPLITTER_KEYS, "noise": _NOISE_KEYS, "external": _EXTERNAL_KEYS}
_TOP_KEYS = {"schema_version", "command", "seed", "params"}
_NULLABLE = {"reference_um"}  # None places the reference arm at infinity


def _check_type(where: str, value, expected):
    if expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, expected)
    if not ok:
        raise ConfigError(f"{where}: expected {expected.__name__}, got {type(value).__name__}")


def validate_config(cfg) -> dict:
    """Check a config tree against the schema and return it unchanged."""
    if not isinstance(cfg, dict) or not cfg:
        raise ConfigError("config must be a non-empty mapping")
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    command = cfg.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {list(COMMANDS)}")
    if "seed" in cfg:
        _check_type("seed", cfg["seed"], int)
    params = cfg.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params must be a mapping")
    schema = SCHEMAS[command]
    for key, value in params.items():
        if key not in schema:
            raise ConfigError(f"params: unknown key {key!r} for command {command!r}")
        if value is None and key in _NULLABLE:
            continue
        _check_type(f"params.{key}", value, schema[key])
        if key in _SUBSCHEMAS:
            for k, v in value.items():
                if k not in _SUBSCHEMAS[key]:
                    raise ConfigError(f"params.{key}: unknown key {k!r}")
                if v is not None:
                    _check_type(f"params.{key}.{k}", v, _SUBSCHEMAS[key][k])
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return validate_config(cfg)


# -- builders ------------------------------------------------------------------------------

def build_splitter(p: dict | None) -> SplitterSpec:
    p = dict(p or {})
    kind = p.pop("kind", "two_tweezer")
    sched_keys = {k: p.pop(k) for k in ("d_min", "d_max", "T_proc", "delta_max") if k in p}
    base = DEFAULT_TWO_TWEEZER_SCHEDULE if kind == "two_tweezer" else DEFAULT_THREE_TWEEZER_SCHEDULE
    if "species" in p:
        p["species"] = get_species(p["species"])
    if kind == "three_tweezer":
        p.setdefault("depth_uK", 23.0)
    try:
        return SplitterSpec(kind=kind, schedule=replace(base, **sched_keys), **p)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"params.splitter: {exc}") from exc


def build_external(p: dict | None) -> ExternalPotential:
    if not p:
        return NO_EXTERNAL
    try:
        return ExternalPotential(**p)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"params.external: {exc}") from exc


def build_noise(p: dict | None, seed: int, hold_T: float) -> NoiseSpec | None:
    if p is None:
        return None
    try:
        return NoiseSpec(seed=seed, hold_T=hold_T, **p)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"params.noise: {exc}") from exc


# -- commands -------------------------------------------------------------------------------

def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n",
                    encoding="utf-8")


def _cmd_split(params, seed, out: Path, workers: int):
    sp = build_splitter(params.get("splitter"))
    res = run_splitter(sp)
    _write_json(out / "split.json", {
        "populations": res.populations, "fidelities": res.fidelities,
        "balance_error": res.balance_error, "central_population": res.central_population,
        "flagged": res.flagged, "overflow": res.propagation.overflow,
        "max_boundary_density": res.propagation.max_boundary_density})
    write_csv(out / "populations.csv", population_trace(sp, params.get("record_every", 100)))


def _cmd_combine(params, seed, out: Path, workers: int):
    sp = build_splitter(params.get("splitter"))
    split = run_splitter(sp, with_fidelity=False)
    phi = float(params.get("phi", 0.0))
    state = imprint_phase(split.state, phi)
    res = run_combiner(state, sp)
    _write_json(out / "combine.json", {"phi": phi, "populations": res.populations,
                                       "fidelities": res.fidelities, "signal": res.signal})
    write_csv(out / "populations.csv",
              population_trace(sp, params.get("record_every", 100), combine=True, psi=state))


def _cmd_loop(params, seed, out: Path, workers: int):
    sp = build_splitter(params.get("splitter"))
    hold_T = float(params.get("hold_T", 10.0))
    spec = LoopSpec(splitter=sp, hold_T=hold_T, h=float(params.get("h_um", 1e4)),
                    phi_det=float(params.get("phi_det", 0.0)),
                    external=build_external(params.get("external")),
                    hold_center=float(params.get("hold_center_um", 0.0)))
    noise = build_noise(params.get("noise"), seed, hold_T)
    o = run_loop(spec, noise, seed)
    _write_json(out / "loop.json", {
        "populations": o.populations, "fidelities": o.fidelities, "signal": o.signal,
        "central_after_split": None if math.isnan(o.central_after_split) else o.central_after_split,
        "phase": o.phase, "failed": o.failed, "flagged": o.flagged, "overflow": o.overflow,
        "seed": seed})


def _cmd_spectrum(params, seed, out: Path, workers: int):
    sp = build_splitter(params.get("splitter"))
    tr = spectrum_trace(sp, params.get("n_levels", 3), params.get("n_times", 101))
    write_csv(out / "spectrum.csv", trace_columns(tr))
    c = find_avoided_crossing(tr)
    _write_json(out / "crossing.json", None if c is None else c.__dict__)


def _campaign_splitter(params):
    kw = {k: params[k] for k in ("n_points", "margin", "dt") if k in params}
    try:
        return campaign_splitter(params.get("splitter_type", "II"), **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_table(params, seed, out: Path, workers: int):
    sp = _campaign_splitter(params)
    noise = campaign_noise(sp, params.get("eta", 1.0))
    table = build_realization_table(LoopSpec(splitter=sp), noise, params.get("n_real", 400),
                                    seed, workers=workers)
    table.save(out / "table.npz")
    _write_json(out / "table.json", {"content_hash": table.content_hash(),
                                     "n_real": table.n_real, "eta": table.eta,
                                     "splitter_kind": table.splitter_kind,
                                     "fail_probability": table.fail_probability,
                                     "flagged_fraction": table.flagged_fraction})


def _cmd_campaign(params, seed, out: Path, workers: int):
    sp = _campaign_splitter(params)
    noise = campaign_noise(sp, params.get("eta", 1.0))
    table = build_realization_table(LoopSpec(splitter=sp), noise, params.get("n_real", 400),
                                    seed, workers=workers)
    rows = []
    for label in params.get("scenarios", ["1", "2", "3", "4"]):
        try:
            scen = get_scenario(label)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        res = estimate_uncertainty(table, scen, params.get("n_campaigns", 50),
                                   params.get("phi_physical", 0.3), seed=seed)
        rows.append(res.row())
    write_rows_csv(out / "campaign.csv", rows)
    write_rows_json(out / "campaign.json", rows)


def _cmd_cp_map(params, seed, out: Path, workers: int):
    ref = params.get("reference_um", 100.0)
    case = CPCase(C4=params.get("C4", 1.64e-55), reference=None if ref is None else ref * 1e-6,
                  T=params.get("T", 10.0))
    if "z_um" in params:
        z = np.asarray(params["z_um"], float)
    else:
        z = np.geomspace(params.get("z_min_um", 2.0), params.get("z_max_um", 20.0),
                         params.get("n_z", 28))
    try:
        m = cp_phase_map(case, z * 1e-6, params.get("sigma_phase_mrad", 34.0) * 1e-3,
                         run_hours=params.get("scenario_hours", 50.0 / 60.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    write_csv(out / "cp_map.csv", m.columns())
    _write_json(out / "cp_map.json", {"acquisition_hours": m.acquisition_hours,
                                      "sigma_phase": m.sigma_phase, "n_points": len(z)})


def _cmd_big_g(params, seed, out: Path, workers: int):
    src = reference_source_mass(params.get("mass", 253.0), params.get("radius", 0.20),
                                params.get("wedge_deg", 141.0))
    species = get_species(params.get("species", "40K"))
    arms = tuple(d * 1e-3 for d in params.get("arm_distances_mm", [1.0, 50.0]))
    case = BigGCase(source=src, arm_distances=arms, species=species, T=params.get("T", 10.0))
    try:
        rep = big_g_phases(case, params.get("sigma_phase_mrad", 4.0) * 1e-3)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    d = rep.to_dict()
    d["species"] = species.name
    d["gain_171Yb_over_40K"] = species_gain("171Yb", "40K")
    _write_json(out / "big_g.json", d)


def _cmd_sensitivity(params, seed, out: Path, workers: int):
    species = get_species(params.get("species", "40K"))
    T = params.get("T", 10.0)
    case = SensitivityCase(species=species, h=params.get("h_mm", 10.0) * 1e-3, T=T,
                           a=params.get("a", G_EARTH))
    k_eff = params.get("k_eff", 4 * math.pi / 780e-9)
    noise = NoiseSpec(P0=params.get("P0", 100e-6), hold_T=T, species=species.name)
    _write_json(out / "sensitivity.json", {
        "gravity_phase": gravity_phase(case),
        "kc_phase": kc_phase(k_eff, case.a, params.get("T_kc", 1.0)),
        "relative_shot_noise": relative_shot_noise(noise),
        "shot_noise_phase": shot_noise_phase_sigma(noise)})


HANDLERS = {"split": _cmd_split, "combine": _cmd_combine, "loop": _cmd_loop,
            "spectrum": _cmd_spectrum, "table": _cmd_table, "campaign": _cmd_campaign,
            "cp-map": _cmd_cp_map, "big-g": _cmd_big_g, "sensitivity": _cmd_sensitivity}


# -- execution & manifest ---------------------------------------------------------------------

def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def artifact_hash(path) -> str:
    """SHA-256 of a file; realization tables are hashed by content because
    the zip container records write times."""
    path = Path(path)
    if path.suffix == ".npz":
        return "content:" + RealizationTable.load(path).content_hash()
    return file_hash(path)


def _prepare_output(out: Path) -> Path:
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise FileExistsError(f"output directory {out} already exists")
    out.mkdir(parents=True, exist_ok=True)
    return out


def execute(cfg: dict, out_dir, workers: int = 1) -> dict:
    """Run a validated config into ``out_dir`` and write ``manifest.json``."""
    cfg = validate_config(cfg)
    out = _prepare_output(Path(out_dir))
    seed = int(cfg.get("seed", 0))
    t0 = time.perf_counter()
    HANDLERS[cfg["command"]](cfg.get("params", {}), seed, out, workers)
    elapsed = time.perf_counter() - t0
    artifacts = {p.name: artifact_hash(p) for p in sorted(out.iterdir()) if p.is_file()}
    manifest = {"schema_version": SCHEMA_VERSION, "config": cfg, "seed": seed,
                "artifacts": artifacts, "elapsed_seconds": elapsed,
                "versions": {"tweezer_interferometer": __version__, "numpy": np.__version__,
                             "scipy": scipy.__version__, "python": platform.python_version()}}
    _write_json(out / "manifest.json", manifest)
    return manifest


def replay(manifest_path, out_dir=None, workers: int = 1) -> dict:
    """Rerun a manifest and compare every recorded artifact hash."""
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        cfg = dict(manifest["config"])
        recorded = manifest["artifacts"]
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {manifest_path}: {exc}") from exc
    if manifest.get("seed", cfg.get("seed", 0)) != cfg.get("seed", 0):
        cfg["seed"] = manifest["seed"]
    if out_dir is None:
        base = manifest_path.parent
        k = 1
        while (base.parent / f"{base.name}-replay{k}").exists():
            k += 1
        out_dir = base.parent / f"{base.name}-replay{k}"
    new = execute(cfg, out_dir, workers)
    bad = sorted(name for name, h in recorded.items() if new["artifacts"].get(name) != h)
    if bad:
        raise ReproducibilityError(f"artifacts differ from manifest: {bad}")
    return new


def _error(category: str, message: str, code: int) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tweezer-interferometer",
                                     description="Optical-tweezer atom interferometer simulator")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="action", required=True)
    run_p = sub.add_parser("run", help="execute a config file")
    run_p.add_argument("config")
    run_p.add_argument("-o", "--output-dir", required=True)
    run_p.add_argument("-w", "--workers", type=int, default=1)
    rep_p = sub.add_parser("replay", help="rerun a manifest and verify its artifacts")
    rep_p.add_argument("manifest")
    rep_p.add_argument("-o", "--output-dir", default=None)
    rep_p.add_argument("-w", "--workers", type=int, default=1)
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    if args.workers < 1:
        return _error("config", "workers must be at least 1", EXIT_CONFIG)
    try:
        if args.action == "run":
            manifest = execute(load_config(args.config), args.output_dir, args.workers)
        else:
            manifest = replay(args.manifest, args.output_dir, args.workers)
    except ConfigError as exc:
        return _error("config", str(exc), EXIT_CONFIG)
    except GridOverflow as exc:
        return _error("grid_overflow", str(exc), EXIT_OVERFLOW)
    except TablePersistenceError as exc:
        return _error("persistence", str(exc), EXIT_PERSISTENCE)
    except ReproducibilityError as exc:
        return _error("reproducibility", str(exc), EXIT_REPRODUCIBILITY)
    except FileExistsError as exc:
        return _error("output_exists", str(exc), EXIT_OUTPUT_EXISTS)
    print(json.dumps({"status": "ok", "artifacts": manifest["artifacts"]}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
