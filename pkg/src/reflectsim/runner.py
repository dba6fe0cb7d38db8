"""Experiment drivers behind the command-line interface.

Three entry points, each consuming a validated ExperimentConfig and
writing into a fresh timestamped directory under the output root:

* run_certify   - family-level checks: spike growth, decay of the
                  schedule, direction emulation, and boundary floors.
* run_convergence - penalized ensembles over the level grid against the
                  configured reference, summarized as a convergence table.
* run_paths     - individual trajectories for plotting.

Every run writes metadata.json (configuration echo, derived seeds, build
identity, wall clock).  Data files are byte-deterministic functions of
the config and master seed; criterion-grade reproducibility lives there,
never in metadata.
"""

from __future__ import annotations

import datetime as _dt
import json
import platform
import subprocess
import time
from pathlib import Path

import numpy as np

from . import diagnostics, rng
from .config import ExperimentConfig
from .errors import ConfigError
from .integrator import simulate_batch, simulate_path
from .penalty import (boundary_floor, emulation_defect, eval_schedule,
                      singularity_report)
from .reference import halfspace_oblique_rbm_batch, projection_scheme_batch

# A direction field emulates its reflection when the worst sampled unit
# mismatch stays below this; exact-ratio constructions sit at rounding
# error, while a genuinely different direction shows up at order one.
EMULATION_TOL = 1e-10

# Stream tags: the reference ensemble and each penalty level consume
# disjoint seed streams derived from the one master seed.
_TAG_REFERENCE = 0
_TAG_CERTIFY = 9000
_TAG_PATHS = 9100


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             cwd=Path(__file__).resolve().parent,
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def _versions() -> dict:
    import scipy

    from . import __version__

    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "artifact": __version__}


def _make_out_dir(root, kind: str) -> Path:
    base = Path(root)
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    for attempt in range(100):
        suffix = "" if attempt == 0 else f"-{attempt}"
        candidate = base / f"{kind}-{stamp}{suffix}"
        try:
            candidate.mkdir(parents=True, exist_ok=False)
            return candidate
        except FileExistsError:
            continue
    raise RuntimeError(f"cannot create a fresh output directory under {base}")


def _metadata(config: ExperimentConfig, kind: str, workers: int,
              started_at: str, wall: float, stream_seeds: dict) -> dict:
    return {"kind": kind, "config": config.to_dict(),
            "master_seed": config.master_seed, "stream_seeds": stream_seeds,
            "workers": workers, "started_at": started_at,
            "wall_clock_seconds": wall, "build": _git_describe(),
            "versions": _versions()}


def _require_penalty(config: ExperimentConfig) -> None:
    if config.family is None or not config.n_grid:
        raise ConfigError("this run requires a penalty section with an n_grid",
                          location="penalty")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run_certify(config: ExperimentConfig, out_root=None, workers: int = 1):
    """Certify the configured family; returns (exit_code, output_dir)."""
    _require_penalty(config)
    started, t0 = _now(), time.monotonic()
    domain = config.domain
    fam = config.family
    n_grid = list(config.n_grid)
    n_max = n_grid[-1]
    tube = domain.tube_radius

    s_max = min(1.0, 0.9 * tube)
    s_min = min(0.1, 0.5 * s_max)
    s_grid = np.linspace(s_min, s_max, 16)
    if len(n_grid) < 2:
        raise ConfigError("certification needs at least two levels in n_grid",
                          location="penalty.n_grid")
    report = singularity_report(fam, n_grid, s_grid)

    band = min(0.45 * tube, fam.emulation_band(n_max))
    if not np.isfinite(band):
        # Flat domain and a family with no natural band (projection,
        # constant): probe at the same unit scale as the schedule grid.
        band = s_max
    emu_seed = rng.derive_stream_seed(config.master_seed, _TAG_CERTIFY)
    field = config.build_penalty(n_max)
    defect = emulation_defect(field, band_width=band, threshold=1e-300,
                              count=4096, seed=emu_seed)
    emulation_ok = defect is not None and defect <= EMULATION_TOL

    level = min(0.05, 0.2 * tube)
    floor_seed = rng.derive_stream_seed(config.master_seed, _TAG_CERTIFY + 1)
    floors_out, floors_in = [], []
    for n in n_grid:
        f_n = config.build_penalty(n)
        floors_out.append(boundary_floor(f_n, -level, 2048, floor_seed))
        floors_in.append(boundary_floor(f_n, level, 2048, floor_seed))

    verdicts = {"spike": bool(report.spike_diverges),
                "singularity": bool(report.decays_to_zero),
                "emulation": bool(emulation_ok)}
    verdicts["overall"] = all(verdicts.values())

    payload = {
        "family": fam.to_config(),
        "n_grid": n_grid,
        "verdicts": verdicts,
        "spike": {"eps": 0.1, "integrals": list(report.spike_integrals)},
        "schedule": {"s_grid": s_grid.tolist(),
                     "sup_values": list(report.sup_values),
                     "curves": [np.asarray(eval_schedule(fam, n, s_grid),
                                           dtype=float).tolist()
                                for n in n_grid]},
        "emulation": {"band_width": band, "sample_count": 4096,
                      "defect": defect, "tolerance": EMULATION_TOL},
        "floor": {"depth": level, "outside": floors_out, "inside": floors_in},
    }

    out_dir = _make_out_dir(out_root or config.output_dir, "certify")
    (out_dir / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    meta = _metadata(config, "certify", workers, started,
                     time.monotonic() - t0,
                     {"certify": int(emu_seed), "floor": int(floor_seed)})
    (out_dir / "metadata.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return (0 if verdicts["overall"] else 1), out_dir


def _reference_ensemble(config: ExperimentConfig, seed: int):
    if config.reference_kind == "skorokhod":
        return halfspace_oblique_rbm_batch(
            config.domain, config.coefficients,
            config.reflection.constant_value(), config.start, config.horizon,
            config.reference_dt, config.reference_count, seed)
    return projection_scheme_batch(
        config.domain, config.coefficients, config.start, config.horizon,
        config.reference_dt, config.reference_count, seed)


def _reflection_norm(config: ExperimentConfig) -> float:
    if config.reflection.constant_over_boundary:
        return float(np.linalg.norm(config.reflection.constant_value()))
    return 1.0


def run_convergence(config: ExperimentConfig, out_root=None, workers: int = 1):
    """Penalized level grid vs reference; returns (exit_code, output_dir)."""
    _require_penalty(config)
    started, t0 = _now(), time.monotonic()

    ref_seed = rng.derive_stream_seed(config.master_seed, _TAG_REFERENCE)
    reference = _reference_ensemble(config, ref_seed)

    stream_seeds = {"reference": int(ref_seed)}
    ensembles = {}
    penalized = []
    for k, n in enumerate(config.n_grid):
        seed = rng.derive_stream_seed(config.master_seed, 1 + k)
        stream_seeds[f"n={n}"] = int(seed)
        spec = config.build_model_spec(n)
        ens = simulate_batch(spec, config.path_count, seed, workers=workers)
        penalized.append(ens)
        ensembles[f"penalized_n{n}"] = ens
    ensembles["reference"] = reference

    rows = diagnostics.convergence_table(
        penalized, reference, eta=config.eta,
        reflection_norm=_reflection_norm(config),
        radial_center=config.radial_center)

    out_dir = _make_out_dir(out_root or config.output_dir, "converge")
    meta = _metadata(config, "converge", workers, started,
                     time.monotonic() - t0, stream_seeds)
    diagnostics.write_outputs(out_dir, rows, meta, ensembles)

    aborted = reference.failure_count + sum(e.failure_count for e in penalized)
    return (0 if aborted == 0 else 1), out_dir


def run_paths(config: ExperimentConfig, out_root=None, count: int = 1,
              dump: bool = True, workers: int = 1):
    """Individual trajectories at the top penalty level (or penalty-free)."""
    if count < 1:
        raise ConfigError("path count must be at least 1", location="paths")
    started, t0 = _now(), time.monotonic()
    level = config.n_grid[-1] if config.family is not None else None
    spec = config.build_model_spec(level)
    stream_seed = rng.derive_stream_seed(config.master_seed, _TAG_PATHS)

    out_dir = _make_out_dir(out_root or config.output_dir, "paths")
    d = config.domain.dimension
    summary_lines = ["index,seed,final_" +
                     ",final_".join(f"x{j}" for j in range(d)) +
                     ",l,min_phi,flag,max_substeps"]
    records = []
    for i in range(count):
        seed = int(rng.derive_path_seed(stream_seed, i))
        rec = simulate_path(spec, seed)
        records.append(rec)
        cells = [str(i), str(seed)]
        cells += [f"{v:.17g}" for v in rec.final_state]
        cells += [f"{rec.l:.17g}", f"{rec.min_phi:.17g}",
                  str(int(rec.flag)), str(int(rec.max_substeps))]
        summary_lines.append(",".join(cells))
        if dump:
            states = np.asarray(rec.states)
            phi = np.asarray(config.domain.signed_distance(states))
            if spec.penalty is not None:
                vals, ok = spec.penalty.evaluate_batch(states)
                fnorm = np.where(ok, np.linalg.norm(vals, axis=1), np.nan)
            else:
                fnorm = np.zeros(len(states))
            hdr = "t," + ",".join(f"x{j}" for j in range(d)) + ",phi,f_norm"
            lines = [hdr]
            for k in range(len(states)):
                row = [f"{rec.times[k]:.17g}"]
                row += [f"{v:.17g}" for v in states[k]]
                row += [f"{phi[k]:.17g}", f"{fnorm[k]:.17g}"]
                lines.append(",".join(row))
            (out_dir / f"path_{i:03d}.csv").write_text("\n".join(lines) + "\n",
                                                       newline="\n")
    (out_dir / "summary.csv").write_text("\n".join(summary_lines) + "\n",
                                         newline="\n")
    meta = _metadata(config, "paths", workers, started, time.monotonic() - t0,
                     {"paths": int(stream_seed)})
    (out_dir / "metadata.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")
    aborted = sum(1 for r in records if r.flag != 0)
    return (0 if aborted == 0 else 1), out_dir
