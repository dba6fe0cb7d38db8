"""Distributional distances and convergence summaries for ensembles.

Weak convergence of the penalized paths toward the reflected diffusion is
certified through a finite battery per penalty level: per-coordinate
Kolmogorov-Smirnov distances of the time-T marginals against a reference
ensemble, a 1-Wasserstein distance between the accumulated penalty
magnitude l(T) and the direction-weighted reference local time, the
probability that a path never leaves an eta-collar of the domain, and the
mean of l(T).  Everything here is a pure deterministic function of its
inputs, so tables can be written byte-for-byte reproducibly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .integrator import Ensemble
from .reference import ReferenceEnsemble

# 99% two-sample null band constant: with samples of size m and n, an
# observed KS distance below C * sqrt((m + n) / (m n)) is consistent with
# equal distributions.
_KS_BAND_99 = 1.63


def ks_distance(sample_a, sample_b) -> float:
    """Exact two-sample Kolmogorov-Smirnov distance.

    Both empirical CDFs are right-continuous step functions, so the
    supremum of their difference is attained at a pooled data point.
    """
    a = np.sort(np.asarray(sample_a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(sample_b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("ks_distance requires nonempty samples")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_stderr(count_a: int, count_b: int) -> float:
    """Conservative sampling scale of a two-sample KS estimate.

    Binomial worst case at CDF value 1/2 for each sample, pooled.
    """
    if count_a < 1 or count_b < 1:
        raise ValueError("sample counts must be positive")
    return 0.5 * math.sqrt(1.0 / count_a + 1.0 / count_b)


def ks_null_band(count_a: int, count_b: int) -> float:
    """99% acceptance threshold for 'these two samples agree'."""
    if count_a < 1 or count_b < 1:
        raise ValueError("sample counts must be positive")
    return _KS_BAND_99 * math.sqrt((count_a + count_b) / (count_a * count_b))


def monotone_within(values, stderrs, z: float = 2.0, decreasing: bool = True) -> bool:
    """Is the sequence monotone up to z pooled standard errors per step?"""
    v = np.asarray(values, dtype=np.float64)
    s = np.asarray(stderrs, dtype=np.float64)
    if v.shape != s.shape or v.ndim != 1:
        raise ValueError("values and stderrs must be 1-d and aligned")
    for i in range(v.size - 1):
        slack = z * math.sqrt(s[i] ** 2 + s[i + 1] ** 2)
        step = v[i + 1] - v[i] if decreasing else v[i] - v[i + 1]
        if step > slack:
            return False
    return True


def _quantile_thin(sorted_sample: np.ndarray, k: int) -> np.ndarray:
    """Deterministic size-k subsample of a sorted sample (quantile grid)."""
    m = sorted_sample.size
    idx = np.floor((np.arange(k) + 0.5) * m / k).astype(np.int64)
    return sorted_sample[np.minimum(idx, m - 1)]


def wasserstein1_1d(sample_a, sample_b) -> float:
    """1-Wasserstein distance between two scalar samples.

    Equal sizes compare sorted order statistics directly; the larger of
    unequal samples is first thinned to a deterministic quantile grid.
    """
    a = np.sort(np.asarray(sample_a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(sample_b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein1_1d requires nonempty samples")
    if a.size > b.size:
        a = _quantile_thin(a, b.size)
    elif b.size > a.size:
        b = _quantile_thin(b, a.size)
    return float(np.mean(np.abs(a - b)))


def modulus_of_continuity(states, times, delta: float) -> float:
    """Largest displacement over any time window of width at most delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    x = np.asarray(states, dtype=np.float64)
    t = np.asarray(times, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != t.shape[0]:
        raise ValueError("states and time grid must have equal length")
    best = 0.0
    for lag in range(1, t.size):
        gaps = t[lag:] - t[:-lag]
        ok = gaps <= delta * (1 + 1e-12)
        if not ok.any():
            break
        disp = np.linalg.norm(x[lag:] - x[:-lag], axis=1)
        cand = float(np.max(disp[ok]))
        if cand > best:
            best = cand
    return best


@dataclass
class ConvergenceRow:
    """Per-penalty-level summary against the reference ensemble."""

    n: int
    dt: float
    path_count: int
    failure_count: int
    ks_coord: tuple
    ks_norm: float
    w1_l: float
    min_phi_prob: float
    mean_l: float
    ks_stderr: float
    min_phi_stderr: float
    mean_l_stderr: float

    def validate(self) -> None:
        if any(k < 0 or k > 1 for k in self.ks_coord):
            raise ValueError("KS distances must lie in [0, 1]")
        if self.w1_l < 0:
            raise ValueError("Wasserstein distance must be nonnegative")
        if not 0.0 <= self.min_phi_prob <= 1.0:
            raise ValueError("probability estimate must lie in [0, 1]")


def convergence_table(penalized: Sequence[Ensemble],
                      reference: ReferenceEnsemble,
                      *,
                      eta: float = 0.1,
                      reflection_norm: float = 1.0,
                      radial_center=None) -> list:
    """One summary row per penalty level, ordered by increasing level.

    Flagged paths (blow-ups, geometry failures, coarse steps) are dropped
    from every statistic on both sides.  With fewer than two usable paths
    the standard errors are reported as nan (unreliable), never as zero.
    """
    ref_ok = reference.flags == 0
    if not ref_ok.any():
        raise ValueError("reference ensemble has no usable paths")
    ref_final = reference.final_states[ref_ok]
    ref_ell = reference.ell[ref_ok]
    n_ref = int(ref_ok.sum())
    center = None if radial_center is None else np.asarray(radial_center, dtype=np.float64)

    rows = []
    for ens in sorted(penalized, key=lambda e: e.level):
        if abs(ens.horizon - reference.horizon) > 1e-12:
            raise ValueError("penalized and reference ensembles must share the horizon")
        ok = ens.flags == 0
        n_ok = int(ok.sum())
        if n_ok == 0:
            raise ValueError(f"no usable paths at penalty level {ens.level}")
        finals = ens.final_states[ok]
        d = finals.shape[1]
        ks_coord = tuple(ks_distance(finals[:, j], ref_final[:, j]) for j in range(d))
        if center is not None:
            ks_norm = ks_distance(np.linalg.norm(finals - center, axis=1),
                                  np.linalg.norm(ref_final - center, axis=1))
        else:
            ks_norm = math.nan
        w1 = wasserstein1_1d(ens.l[ok], reflection_norm * ref_ell)
        hits = ens.min_phi[ok] >= -eta
        p = float(hits.mean())
        mean_l = float(ens.l[ok].mean())
        if n_ok >= 2:
            p_se = math.sqrt(p * (1 - p) / n_ok)
            l_se = float(ens.l[ok].std(ddof=1)) / math.sqrt(n_ok)
        else:
            p_se = math.nan
            l_se = math.nan
        row = ConvergenceRow(n=int(ens.level), dt=float(ens.dt),
                             path_count=n_ok,
                             failure_count=int(len(ens) - n_ok),
                             ks_coord=ks_coord, ks_norm=ks_norm, w1_l=float(w1),
                             min_phi_prob=p, mean_l=mean_l,
                             ks_stderr=ks_stderr(n_ok, n_ref),
                             min_phi_stderr=p_se, mean_l_stderr=l_se)
        row.validate()
        rows.append(row)
    return rows


def _fmt(v) -> str:
    if isinstance(v, int):
        return str(v)
    return f"{v:.17g}"


def table_header(dimension: int) -> str:
    coord = ",".join(f"ks_coord_{j}" for j in range(dimension))
    return (f"n,dt,path_count,failure_count,{coord},ks_norm,w1_l,"
            "min_phi_prob,mean_l,ks_stderr,min_phi_stderr,mean_l_stderr")


def rows_to_csv(rows: Sequence[ConvergenceRow]) -> str:
    """Serialize rows with a fixed header; bytes depend only on the rows."""
    if not rows:
        raise ValueError("cannot serialize an empty table")
    d = len(rows[0].ks_coord)
    lines = [table_header(d)]
    for r in rows:
        if len(r.ks_coord) != d:
            raise ValueError("all rows must share the coordinate dimension")
        cells = ([_fmt(r.n), _fmt(r.dt), _fmt(r.path_count), _fmt(r.failure_count)]
                 + [_fmt(k) for k in r.ks_coord]
                 + [_fmt(r.ks_norm), _fmt(r.w1_l), _fmt(r.min_phi_prob),
                    _fmt(r.mean_l), _fmt(r.ks_stderr), _fmt(r.min_phi_stderr),
                    _fmt(r.mean_l_stderr)])
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def ensemble_to_csv(ens) -> str:
    """Per-path CSV for a penalized or reference ensemble (deterministic)."""
    d = ens.final_states.shape[1]
    coord = ",".join(f"x{j}" for j in range(d))
    if isinstance(ens, ReferenceEnsemble):
        lines = [f"seed,{coord},ell,min_phi,flag"]
        for i in range(len(ens)):
            cells = ([str(int(ens.seeds[i]))]
                     + [_fmt(float(v)) for v in ens.final_states[i]]
                     + [_fmt(float(ens.ell[i])), _fmt(float(ens.min_phi[i])),
                        str(int(ens.flags[i]))])
            lines.append(",".join(cells))
    else:
        lcols = ",".join(f"L{j}" for j in range(d))
        lines = [f"seed,{coord},{lcols},l,min_phi,flag,max_substeps"]
        for i in range(len(ens)):
            cells = ([str(int(ens.seeds[i]))]
                     + [_fmt(float(v)) for v in ens.final_states[i]]
                     + [_fmt(float(v)) for v in ens.L[i]]
                     + [_fmt(float(ens.l[i])), _fmt(float(ens.min_phi[i])),
                        str(int(ens.flags[i])), str(int(ens.max_substeps[i]))])
            lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_outputs(out_dir, rows: Sequence[ConvergenceRow], metadata: dict,
                  ensembles: Optional[dict] = None) -> None:
    """Write table.csv, metadata.json, and optional per-ensemble CSVs.

    table.csv and the ensemble CSVs are byte-deterministic functions of
    their inputs; metadata.json carries the run context (configuration
    echo, seeds, build identity, wall clock) and is allowed to vary.
    """
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.csv").write_text(rows_to_csv(rows), newline="\n")
    (out / "metadata.json").write_text(
        json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    for name, ens in (ensembles or {}).items():
        (out / f"{name}.csv").write_text(ensemble_to_csv(ens), newline="\n")
