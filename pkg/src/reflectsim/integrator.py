"""Euler-Maruyama simulation of penalized SDEs with reproducible batching.

One step advances x by the drift b + f_n over dt and then applies a single
Brownian kick sigma_n * sqrt(dt) * xi.  Near the boundary the penalty
drift is stiff - its magnitude can grow by orders of magnitude within one
step - so the drift contribution is advanced through adaptive substeps
capped at a fixed displacement, while the noise is still applied once.
The running integrals L = int f_n dt and l = int ||f_n|| dt are the
discrete path's own integrals: the scheme's velocity is constant on each
substep, so accumulating f * h per substep reproduces the delivered drift
displacement exactly and preserves the decomposition
x(T) = z + L + int b dt + sum of noise kicks to rounding.  That identity
is what the local-time comparisons measure, so the accumulator must not
re-quadrature f behind the mover's back; it also keeps l >= ||L|| exact,
with equality for constant-direction fields.

Reproducibility contract: path i of a batch is driven by the Gaussian
draws of seed hash(master_seed, i), addressed positionally by step index.
Paths are partitioned into fixed-size blocks regardless of worker count,
and results are assembled in path order, so the ensemble bytes depend
only on (spec, count, master_seed).
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import rng
from .errors import ConfigError, OutsideValidityError
from .fields import CoefficientField
from .geometry import Domain
from .penalty import PenaltyField

# Fixed partition constant: blocks must not depend on the worker count or
# the run's memory budget, or ensembles would stop being byte-stable.
BLOCK_SIZE = 4096
_CHUNK_STEPS = 1024

MAX_SUBSTEPS_PER_STEP = 10_000
BLOWUP_NORM = 1e9

FLAG_OK = 0
FLAG_BLOWUP = 1
FLAG_GEOMETRY = 2
FLAG_GUARD = 3

_FLAG_NAMES = {FLAG_OK: "ok", FLAG_BLOWUP: "blow-up", FLAG_GEOMETRY: "geometry",
               FLAG_GUARD: "substep-guard"}


@dataclass(frozen=True)
class StoppingRegion:
    """The open region O whose first exit freezes a path.

    kind "none" never stops; "ball" is {||x - center|| < radius}; "band"
    is {phi(x) > -width}, the natural collar around the closed domain.
    """

    kind: str = "none"
    center: tuple | None = None
    radius: float | None = None
    width: float | None = None

    def __post_init__(self):
        if self.kind == "none":
            return
        if self.kind == "ball":
            if self.center is None or self.radius is None or not self.radius > 0:
                raise ValueError("ball stopping region needs a center and positive radius")
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        elif self.kind == "band":
            if self.width is None or not self.width > 0:
                raise ValueError("band stopping region needs a positive width")
        else:
            raise ValueError(f"unknown stopping region kind {self.kind!r}")

    def contains(self, x: np.ndarray, domain: Domain) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "none":
            return np.ones(x.shape[:-1], dtype=bool)
        if self.kind == "ball":
            c = np.asarray(self.center, dtype=np.float64)
            return np.linalg.norm(x - c, axis=-1) < self.radius
        return np.asarray(domain._signed_distance(x)) > -self.width

    def to_config(self) -> dict:
        if self.kind == "none":
            return {"kind": "none"}
        if self.kind == "ball":
            return {"kind": "ball", "center": list(self.center), "radius": self.radius}
        return {"kind": "band", "width": self.width}


def stopping_from_config(cfg: dict) -> StoppingRegion:
    kind = cfg.get("kind", "none")
    if kind == "none":
        return StoppingRegion()
    if kind == "ball":
        return StoppingRegion(kind="ball", center=tuple(cfg["center"]),
                              radius=float(cfg["radius"]))
    if kind == "band":
        return StoppingRegion(kind="band", width=float(cfg["width"]))
    raise ValueError(f"unknown stopping region kind {kind!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Everything that defines one penalized simulation."""

    domain: Domain
    coefficients: CoefficientField
    penalty: PenaltyField | None
    z0: tuple
    horizon: float
    dt: float
    stopping: StoppingRegion = dataclass_field(default_factory=StoppingRegion)
    stiffness_cap: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "z0", tuple(float(c) for c in self.z0))
        d = self.domain.dimension
        if len(self.z0) != d:
            raise ConfigError(f"initial point has dimension {len(self.z0)}, domain has {d}")
        if self.coefficients.dimension != d:
            raise ConfigError("coefficient field dimension does not match the domain")
        if self.penalty is not None and self.penalty.domain is not self.domain:
            if self.penalty.domain.to_config() != self.domain.to_config():
                raise ConfigError("penalty field is built on a different domain")
        if not (self.dt > 0 and self.horizon > 0 and self.dt < self.horizon):
            raise ConfigError(f"need 0 < dt < horizon, got dt={self.dt}, horizon={self.horizon}")
        z = np.asarray(self.z0)
        if not float(self.domain.signed_distance(z)) > 0:
            raise ConfigError("initial point must lie strictly inside the domain")
        if not bool(self.stopping.contains(z, self.domain)):
            raise ConfigError("initial point must lie inside the stopping region")
        if self.stiffness_cap is not None and not self.stiffness_cap > 0:
            raise ConfigError("stiffness_cap must be positive")

    @property
    def level(self) -> int | None:
        return self.penalty.n if self.penalty is not None else None

    @property
    def effective_cap(self) -> float:
        if self.stiffness_cap is not None:
            return self.stiffness_cap
        return 0.5 * self.domain.tube_radius


@dataclass
class PathRecord:
    """One simulated path; trajectory arrays only when recording was on."""

    seed: int
    final_state: np.ndarray
    L: np.ndarray
    l: float
    min_phi: float
    exit_time: float | None
    flag: int
    max_substeps: int
    times: np.ndarray | None = None
    states: np.ndarray | None = None

    @property
    def flag_name(self) -> str:
        return _FLAG_NAMES.get(self.flag, str(self.flag))


@dataclass
class Ensemble:
    """Columnar batch result; row i is the path with seed hash(master, i)."""

    seeds: np.ndarray
    final_states: np.ndarray
    L: np.ndarray
    l: np.ndarray
    min_phi: np.ndarray
    exit_times: np.ndarray  # NaN encodes "no exit"
    flags: np.ndarray
    max_substeps: np.ndarray
    horizon: float
    dt: float
    level: int | None
    stiffness_cap: float

    def __len__(self) -> int:
        return len(self.seeds)

    @property
    def failure_count(self) -> int:
        return int(np.count_nonzero(self.flags))

    def path(self, i: int) -> PathRecord:
        et = float(self.exit_times[i])
        return PathRecord(seed=int(self.seeds[i]), final_state=self.final_states[i].copy(),
                          L=self.L[i].copy(), l=float(self.l[i]),
                          min_phi=float(self.min_phi[i]),
                          exit_time=None if np.isnan(et) else et,
                          flag=int(self.flags[i]), max_substeps=int(self.max_substeps[i]))


def _time_grid(horizon: float, dt: float) -> np.ndarray:
    """Step sizes covering [0, horizon]: full dt steps plus a short tail."""
    n_full = int(np.floor(horizon / dt + 1e-9))
    tail = horizon - n_full * dt
    if tail > 1e-9 * dt:
        return np.concatenate([np.full(n_full, dt), [tail]])
    return np.full(n_full, dt)


def _drift_eval(coefficients: CoefficientField, x: np.ndarray):
    """Batch drift with per-row validity: falls back to row-wise evaluation
    when a tabulated field rejects the batch because one row strayed."""
    try:
        return coefficients.drift(x), np.ones(x.shape[0], dtype=bool)
    except OutsideValidityError:
        out = np.zeros_like(x)
        ok = np.ones(x.shape[0], dtype=bool)
        for j in range(x.shape[0]):
            try:
                out[j] = coefficients.drift(x[j])
            except OutsideValidityError:
                ok[j] = False
        return out, ok


def _advance_drift(penalty: PenaltyField | None, coefficients: CoefficientField,
                   x: np.ndarray, dt_k: float, cap: float):
    """Advance the drift phase of one step through adaptive substeps.

    Returns (new x, delta L, delta l, flags, substep counts).  Each substep
    moves at most ``cap`` along the penalty drift; L and l integrate the
    substep velocities exactly (f constant per substep), so the recorded
    L is the drift displacement actually delivered.  Rows whose evaluation
    fails keep flag GEOMETRY; rows that cannot finish within
    MAX_SUBSTEPS_PER_STEP keep flag GUARD.  Callers must discard the
    position of any flagged row.
    """
    m, d = x.shape
    x = x.copy()
    dL = np.zeros((m, d))
    dl = np.zeros(m)
    flags = np.zeros(m, dtype=np.uint8)
    nsub = np.zeros(m, dtype=np.int64)

    if penalty is None:
        b, ok = _drift_eval(coefficients, x)
        flags[~ok] = FLAG_GEOMETRY
        x[ok] += b[ok] * dt_k
        nsub[ok] = 1
        return x, dL, dl, flags, nsub

    f_cur, ok_f = penalty.evaluate_batch(x)
    b_cur, ok_b = _drift_eval(coefficients, x)
    flags[~(ok_f & ok_b)] = FLAG_GEOMETRY
    g_cur = np.linalg.norm(f_cur, axis=1)
    rem = np.full(m, dt_k)
    live = np.where(flags == 0)[0]

    const_b = coefficients.constant_drift
    iteration = 0
    while live.size:
        iteration += 1
        if iteration > MAX_SUBSTEPS_PER_STEP:
            flags[live] = FLAG_GUARD
            break
        g = g_cur[live]
        r = rem[live]
        h = np.where(g * r > cap, cap / np.maximum(g, 1e-300), r)
        x[live] += (f_cur[live] + b_cur[live]) * h[:, None]
        dL[live] += f_cur[live] * h[:, None]
        dl[live] += g * h
        rem[live] -= h
        nsub[live] += 1

        # Only rows with time remaining need fresh field values; finished
        # rows get re-validated at the start of the next step.
        cont = live[rem[live] > 1e-12 * dt_k]
        if cont.size == 0:
            break
        f_new, ok_f = penalty.evaluate_batch(x[cont])
        if const_b:
            ok = ok_f
        else:
            b_new, ok_b = _drift_eval(coefficients, x[cont])
            ok = ok_f & ok_b
        flags[cont[~ok]] = FLAG_GEOMETRY
        good = cont[ok]
        f_cur[good] = f_new[ok]
        if not const_b:
            b_cur[good] = b_new[ok]
        g_cur[good] = np.linalg.norm(f_new[ok], axis=1)
        live = good

    return x, dL, dl, flags, nsub


def _simulate_paths(spec: ModelSpec, path_seeds: np.ndarray,
                    record_trajectory: bool = False):
    """Advance all paths of one block; the deterministic core loop."""
    domain = spec.domain
    d = domain.dimension
    n_paths = len(path_seeds)
    step_sizes = _time_grid(spec.horizon, spec.dt)
    n_steps = len(step_sizes)
    times = np.concatenate([[0.0], np.cumsum(step_sizes)])
    cap = spec.effective_cap
    level = spec.level

    z = np.asarray(spec.z0, dtype=np.float64)
    x = np.tile(z, (n_paths, 1))
    L = np.zeros((n_paths, d))
    l_acc = np.zeros(n_paths)
    phi0 = float(domain.signed_distance(z))
    min_phi = np.full(n_paths, phi0)
    flags = np.zeros(n_paths, dtype=np.uint8)
    frozen = np.zeros(n_paths, dtype=bool)
    exit_times = np.full(n_paths, np.nan)
    max_sub = np.zeros(n_paths, dtype=np.int64)

    states = None
    if record_trajectory:
        if n_paths != 1:
            raise ValueError("trajectory recording is limited to single paths")
        states = np.empty((n_steps + 1, d))
        states[0] = z

    sigma_const = None
    if spec.coefficients.constant_diffusion:
        probe = z[None, :]
        if level is None:
            sigma_const = spec.coefficients.diffusion(probe)[0]
        else:
            sigma_const = spec.coefficients.diffusion_at_index(probe, level)[0]

    for chunk_lo in range(0, n_steps, _CHUNK_STEPS):
        chunk_hi = min(n_steps, chunk_lo + _CHUNK_STEPS)
        if np.all(frozen):
            if record_trajectory:
                states[chunk_lo + 1:] = x[0]
            continue
        xi = rng.normal_increments_block(path_seeds, chunk_lo, chunk_hi, d)
        for s in range(chunk_hi - chunk_lo):
            k = chunk_lo + s
            dt_k = float(step_sizes[k])
            act = np.where(~frozen)[0]
            if act.size == 0:
                if record_trajectory:
                    states[k + 1] = x[0]
                continue
            xa = x[act]

            # Diffusion is evaluated at the pre-drift state (Euler convention).
            sqdt = np.sqrt(dt_k)
            if sigma_const is not None:
                noise = xi[act, s] @ (sigma_const.T * sqdt)
            else:
                if level is None:
                    sig = spec.coefficients.diffusion(xa)
                else:
                    sig = spec.coefficients.diffusion_at_index(xa, level)
                noise = np.einsum("nij,nj->ni", sig, xi[act, s]) * sqdt

            x_new, dL, dl, step_flags, nsub = _advance_drift(
                spec.penalty, spec.coefficients, xa, dt_k, cap)

            bad = step_flags != 0
            if np.any(bad):
                rows = act[bad]
                flags[rows] = step_flags[bad]
                frozen[rows] = True  # state stays at the last recorded grid point

            good = act[~bad]
            if good.size:
                gsel = ~bad
                L[good] += dL[gsel]
                l_acc[good] += dl[gsel]
                max_sub[good] = np.maximum(max_sub[good], nsub[gsel])
                x_step = x_new[gsel] + noise[gsel]

                finite = np.isfinite(x_step).all(axis=1)
                finite &= np.linalg.norm(x_step, axis=1) <= BLOWUP_NORM
                blow = good[~finite]
                if blow.size:
                    flags[blow] = FLAG_BLOWUP
                    frozen[blow] = True
                ok_rows = good[finite]
                if ok_rows.size:
                    xs = x_step[finite]
                    x[ok_rows] = xs
                    phi = np.asarray(domain._signed_distance(xs))
                    min_phi[ok_rows] = np.minimum(min_phi[ok_rows], phi)
                    if spec.stopping.kind != "none":
                        inside = spec.stopping.contains(xs, domain)
                        left = ok_rows[~inside]
                        if left.size:
                            exit_times[left] = times[k + 1]
                            frozen[left] = True
            if record_trajectory:
                states[k + 1] = x[0]

    return (x, L, l_acc, min_phi, flags, exit_times, max_sub,
            times if record_trajectory else None, states)


def simulate_path(spec: ModelSpec, seed: int) -> PathRecord:
    """Simulate one path from its own 64-bit seed, recording the trajectory."""
    seeds = np.array([np.uint64(seed)], dtype=np.uint64)
    (x, L, l_acc, min_phi, flags, exit_times, max_sub,
     times, states) = _simulate_paths(spec, seeds, record_trajectory=True)
    et = float(exit_times[0])
    return PathRecord(seed=int(seeds[0]), final_state=x[0], L=L[0], l=float(l_acc[0]),
                      min_phi=float(min_phi[0]),
                      exit_time=None if np.isnan(et) else et,
                      flag=int(flags[0]), max_substeps=int(max_sub[0]),
                      times=times, states=states)


def _block_job(spec: ModelSpec, master_seed: int, lo: int, hi: int):
    seeds = np.asarray(rng.derive_path_seed(master_seed, np.arange(lo, hi)),
                       dtype=np.uint64)
    out = _simulate_paths(spec, seeds)
    return (seeds,) + out[:7]


def simulate_batch(spec: ModelSpec, count: int, master_seed: int,
                   workers: int = 1) -> Ensemble:
    """Simulate ``count`` paths; identical output for any worker count.

    Per-path failures are flagged, never raised, so one diverging path
    cannot take down a batch; ``Ensemble.failure_count`` reports them.
    """
    if count < 1:
        raise ValueError("path count must be at least 1")
    if workers < 1:
        raise ValueError("worker count must be at least 1")
    blocks = [(lo, min(lo + BLOCK_SIZE, count)) for lo in range(0, count, BLOCK_SIZE)]

    if workers == 1 or len(blocks) == 1:
        results = [_block_job(spec, master_seed, lo, hi) for lo, hi in blocks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_block_job, spec, master_seed, lo, hi)
                       for lo, hi in blocks]
            results = [f.result() for f in futures]

    seeds, x, L, l_acc, min_phi, flags, exit_times, max_sub = (
        np.concatenate([r[i] for r in results]) for i in range(8))
    return Ensemble(seeds=seeds, final_states=x, L=L, l=l_acc, min_phi=min_phi,
                    exit_times=exit_times, flags=flags, max_substeps=max_sub,
                    horizon=spec.horizon, dt=spec.dt, level=spec.level,
                    stiffness_cap=spec.effective_cap)


def stieltjes_accumulate(integrand: np.ndarray, accumulator: np.ndarray) -> float:
    """Riemann-Stieltjes sum sum_k h(t_k) (l(t_{k+1}) - l(t_k)).

    The accumulator must be nondecreasing - it stands in for a local-time
    process, and a decreasing one means the caller passed something else.
    """
    h = np.asarray(integrand, dtype=np.float64)
    l_vals = np.asarray(accumulator, dtype=np.float64)
    if h.shape != l_vals.shape or h.ndim != 1 or h.size < 2:
        raise ValueError("integrand and accumulator must be equal-length 1-D arrays")
    dl = np.diff(l_vals)
    if np.any(dl < -1e-12 * max(1.0, float(np.abs(l_vals).max()))):
        raise ValueError("accumulator is decreasing; not a valid local-time proxy")
    return float(np.sum(h[:-1] * dl))


def min_phi_statistic(ensemble: Ensemble, eta: float) -> tuple[float, float]:
    """Fraction of paths with min phi > -eta, with binomial standard error."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    n = len(ensemble)
    if n == 0:
        raise ValueError("empty ensemble")
    p = float(np.mean(ensemble.min_phi > -eta))
    return p, float(np.sqrt(p * (1.0 - p) / n))
