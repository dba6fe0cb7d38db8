"""Ground-truth simulators of the reflected diffusion itself.

Two constructions serve as comparison targets for penalized ensembles:

* Half-space with constant coefficients and a constant oblique direction:
  the free Euler path is exact in law, and the Skorokhod map applied to
  the boundary-normal coordinate gives the local time in closed form, so
  Z = X + r * ell is a trustworthy discrete reference.
* General smooth domains with normal reflection: Euler steps projected
  back to the closure whenever they exit, the accumulated projection
  displacement standing in for local time.

Both follow the integrator's reproducibility contract: per-path seeds
derived from a master seed, increments addressed by step index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import CoarseStepError, IncompatibleReferenceError
from .fields import CoefficientField
from .geometry import Domain, HalfSpace
from .integrator import _time_grid

# Extends the integrator's per-path flag codes.
FLAG_OK = 0
FLAG_COARSE = 4  # projection landed outside the uniqueness tube: dt too coarse

_PATH_BLOCK = 4096
_STEP_CHUNK = 2048


def skorokhod_halfline(driver) -> tuple[np.ndarray, np.ndarray]:
    """Reflect a discretized driver at 0: returns (reflected, local time).

    ell(t_k) = max(0, max_{j<=k} -x(t_j)) and z = x + ell, the minimal
    nondecreasing push keeping z >= 0.  Vectorized over leading axes with
    time along the last axis.
    """
    x = np.asarray(driver, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ValueError("driver must have at least one time point")
    if np.any(x[..., 0] < 0):
        raise ValueError("driver must start at a nonnegative value")
    ell = np.maximum(np.maximum.accumulate(-x, axis=-1), 0.0)
    return x + ell, ell


@dataclass
class ReflectedPathRecord:
    """One reference path with its local-time process."""

    seed: int
    times: np.ndarray
    states: np.ndarray
    ell: np.ndarray
    flag: int = FLAG_OK

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def ell_final(self) -> float:
        return float(self.ell[-1])


@dataclass
class ReferenceEnsemble:
    """Columnar batch of reference paths (no trajectories)."""

    seeds: np.ndarray
    final_states: np.ndarray
    ell: np.ndarray
    min_phi: np.ndarray
    flags: np.ndarray
    horizon: float
    dt: float
    kind: str

    def __len__(self) -> int:
        return len(self.seeds)

    @property
    def failure_count(self) -> int:
        return int(np.count_nonzero(self.flags))


def _require_constant(coefficients: CoefficientField):
    if coefficients.kind != "constant":
        raise IncompatibleReferenceError(
            "the half-space oblique reference requires constant coefficients"
        )


def _check_oblique_setup(domain: Domain, reflection_vector, z0) -> np.ndarray:
    if not isinstance(domain, HalfSpace):
        raise IncompatibleReferenceError(
            "the Skorokhod-map reference only exists on a half-space"
        )
    r = np.asarray(reflection_vector, dtype=np.float64)
    if r.shape != (domain.dimension,):
        raise ValueError("reflection vector dimension mismatch")
    if abs(r[domain.axis] - 1.0) > 1e-10:
        raise IncompatibleReferenceError(
            "reflection vector must have unit boundary-normal component"
        )
    if not float(domain.signed_distance(np.asarray(z0, dtype=np.float64))) > 0:
        raise IncompatibleReferenceError(
            "start point must lie strictly inside the half-space"
        )
    return r


def _oblique_kernel(domain: HalfSpace, coefficients: CoefficientField, r: np.ndarray,
                    z0: np.ndarray, horizon: float, dt: float,
                    path_seeds: np.ndarray, record: bool = False):
    """Free Euler plus Skorokhod map on the boundary-normal coordinate."""
    axis, off = domain.axis, domain.offset
    d = domain.dimension
    step_sizes = _time_grid(horizon, dt)
    n_steps = len(step_sizes)
    n_paths = len(path_seeds)
    b = coefficients.drift(z0[None, :])[0]
    sig = coefficients.diffusion(z0[None, :])[0]

    cur = np.tile(z0, (n_paths, 1))           # free path X
    run_max = np.full(n_paths, -(z0[axis] - off))
    min_phi = np.full(n_paths, z0[axis] - off)
    if record:
        if n_paths != 1:
            raise ValueError("trajectory recording is limited to single paths")
        states = np.empty((n_steps + 1, d))
        ell_grid = np.empty(n_steps + 1)
        states[0] = z0
        ell_grid[0] = 0.0

    for lo in range(0, n_steps, _STEP_CHUNK):
        hi = min(n_steps, lo + _STEP_CHUNK)
        xi = rng.normal_increments_block(path_seeds, lo, hi, d)
        dts = step_sizes[lo:hi]
        incr = xi @ sig.T * np.sqrt(dts)[None, :, None] + b * dts[None, :, None]
        free = cur[:, None, :] + np.cumsum(incr, axis=1)
        neg = -(free[:, :, axis] - off)
        prev = np.concatenate([run_max[:, None], neg], axis=1)
        rm = np.maximum.accumulate(prev, axis=1)[:, 1:]
        ell_k = np.maximum(rm, 0.0)
        min_phi = np.minimum(min_phi, np.min(free[:, :, axis] - off + ell_k, axis=1))
        if record:
            states[lo + 1:hi + 1] = free[0] + r[None, :] * ell_k[0, :, None]
            ell_grid[lo + 1:hi + 1] = ell_k[0]
        cur = free[:, -1, :]
        run_max = rm[:, -1]

    ell_final = np.maximum(run_max, 0.0)
    final = cur + r[None, :] * ell_final[:, None]
    times = np.concatenate([[0.0], np.cumsum(step_sizes)])
    if record:
        return final, ell_final, min_phi, times, states, ell_grid
    return final, ell_final, min_phi, times, None, None


def halfspace_oblique_rbm(domain: HalfSpace, coefficients: CoefficientField,
                          reflection_vector, z0, horizon: float, dt: float,
                          seed: int) -> ReflectedPathRecord:
    """Single obliquely reflected path, exact in law given the grid driver."""
    _require_constant(coefficients)
    z = np.asarray(z0, dtype=np.float64)
    r = _check_oblique_setup(domain, reflection_vector, z)
    seeds = np.array([np.uint64(seed)], dtype=np.uint64)
    _, _, _, times, states, ell_grid = _oblique_kernel(
        domain, coefficients, r, z, horizon, dt, seeds, record=True)
    return ReflectedPathRecord(seed=int(seed), times=times, states=states, ell=ell_grid)


def halfspace_oblique_rbm_batch(domain: HalfSpace, coefficients: CoefficientField,
                                reflection_vector, z0, horizon: float, dt: float,
                                count: int, master_seed: int) -> ReferenceEnsemble:
    """Batch version; deterministic in (inputs, master seed) alone."""
    _require_constant(coefficients)
    if count < 1:
        raise ValueError("path count must be at least 1")
    z = np.asarray(z0, dtype=np.float64)
    r = _check_oblique_setup(domain, reflection_vector, z)
    finals, ells, min_phis, seed_arrs = [], [], [], []
    for lo in range(0, count, _PATH_BLOCK):
        hi = min(count, lo + _PATH_BLOCK)
        seeds = np.asarray(rng.derive_path_seed(master_seed, np.arange(lo, hi)),
                           dtype=np.uint64)
        final, ell_final, min_phi, *_ = _oblique_kernel(
            domain, coefficients, r, z, horizon, dt, seeds)
        finals.append(final)
        ells.append(ell_final)
        min_phis.append(min_phi)
        seed_arrs.append(seeds)
    n = count
    return ReferenceEnsemble(seeds=np.concatenate(seed_arrs),
                             final_states=np.concatenate(finals),
                             ell=np.concatenate(ells),
                             min_phi=np.concatenate(min_phis),
                             flags=np.zeros(n, dtype=np.uint8),
                             horizon=horizon, dt=dt, kind="skorokhod-halfspace")


def _projection_kernel(domain: Domain, coefficients: CoefficientField,
                       z0: np.ndarray, horizon: float, dt: float,
                       path_seeds: np.ndarray, record: bool = False):
    """Euler steps projected back to the closure on exit."""
    d = domain.dimension
    step_sizes = _time_grid(horizon, dt)
    n_steps = len(step_sizes)
    n_paths = len(path_seeds)
    const_coeff = coefficients.constant_drift and coefficients.constant_diffusion
    b_const = coefficients.drift(z0[None, :])[0] if const_coeff else None
    sig_const = (coefficients.diffusion(z0[None, :])[0]
                 if coefficients.constant_diffusion else None)

    x = np.tile(z0, (n_paths, 1))
    ell = np.zeros(n_paths)
    min_phi = np.full(n_paths, float(domain.signed_distance(z0)))
    flags = np.zeros(n_paths, dtype=np.uint8)
    frozen = np.zeros(n_paths, dtype=bool)
    any_frozen = False
    # At most two distinct step sizes (regular + tail): precompute the
    # constant-coefficient pieces once per size.
    per_dt: dict[float, tuple] = {}
    for dt_k in np.unique(step_sizes):
        key = float(dt_k)
        per_dt[key] = (b_const * key if const_coeff else None,
                       sig_const.T * np.sqrt(key) if sig_const is not None else None)
    if record:
        if n_paths != 1:
            raise ValueError("trajectory recording is limited to single paths")
        states = np.empty((n_steps + 1, d))
        ell_grid = np.empty(n_steps + 1)
        states[0] = z0
        ell_grid[0] = 0.0

    for lo in range(0, n_steps, _STEP_CHUNK):
        hi = min(n_steps, lo + _STEP_CHUNK)
        if any_frozen and np.all(frozen):
            if record:
                states[lo + 1:hi + 1] = x[0]
                ell_grid[lo + 1:hi + 1] = ell[0]
            continue
        xi = rng.normal_increments_block(path_seeds, lo, hi, d)
        for s in range(hi - lo):
            dt_k = float(step_sizes[lo + s])
            b_dt, sigT_sq = per_dt[dt_k]
            if any_frozen:
                live_idx = np.where(~frozen)[0]
                if live_idx.size == 0:
                    if record:
                        states[lo + s + 1] = x[0]
                        ell_grid[lo + s + 1] = ell[0]
                    continue
                xa, xi_s = x[live_idx], xi[live_idx, s]
            else:
                live_idx = None
                xa, xi_s = x, xi[:, s]
            drift_term = b_dt if const_coeff else coefficients.drift(xa) * dt_k
            if sigT_sq is not None:
                kick = xi_s @ sigT_sq
            else:
                sg = coefficients.diffusion(xa)
                kick = np.einsum("nij,nj->ni", sg, xi_s) * np.sqrt(dt_k)
            xnew = xa + drift_term + kick
            phi = np.asarray(domain._signed_distance(xnew))
            bad = None
            if phi.min() < 0:
                rows = np.where(phi < 0)[0]
                p, phi_s, in_tube = domain.nearest_with_uniqueness(xnew[rows])
                if not in_tube.all():
                    # dt too coarse for this domain: the overshoot left the
                    # uniqueness tube; freeze at the last in-domain state.
                    bad = rows[~in_tube]
                good = rows[in_tube]
                gl = good if live_idx is None else live_idx[good]
                ell[gl] += np.abs(phi_s[in_tube])
                xnew[good] = p[in_tube]
                phi[good] = 0.0
            if bad is None:
                if live_idx is None:
                    x = xnew
                    min_phi = np.minimum(min_phi, phi)
                else:
                    x[live_idx] = xnew
                    min_phi[live_idx] = np.minimum(min_phi[live_idx], phi)
            else:
                glb = bad if live_idx is None else live_idx[bad]
                flags[glb] = FLAG_COARSE
                frozen[glb] = True
                any_frozen = True
                keep = np.ones(len(xnew), dtype=bool)
                keep[bad] = False
                gk = np.where(keep)[0] if live_idx is None else live_idx[keep]
                x[gk] = xnew[keep]
                min_phi[gk] = np.minimum(min_phi[gk], phi[keep])
            if record:
                states[lo + s + 1] = x[0]
                ell_grid[lo + s + 1] = ell[0]

    times = np.concatenate([[0.0], np.cumsum(step_sizes)])
    if record:
        return x, ell, min_phi, flags, times, states, ell_grid
    return x, ell, min_phi, flags, times, None, None


def projection_scheme(domain: Domain, coefficients: CoefficientField, z0,
                      horizon: float, dt: float, seed: int) -> ReflectedPathRecord:
    """Single normally reflected path via per-step projection.

    Raises CoarseStepError when an overshoot leaves the uniqueness tube:
    the step size cannot resolve this domain's boundary.
    """
    z = np.asarray(z0, dtype=np.float64)
    if not float(domain.signed_distance(z)) > 0:
        raise ValueError("start point must lie strictly inside the domain")
    seeds = np.array([np.uint64(seed)], dtype=np.uint64)
    x, ell, min_phi, flags, times, states, ell_grid = _projection_kernel(
        domain, coefficients, z, horizon, dt, seeds, record=True)
    if flags[0] == FLAG_COARSE:
        raise CoarseStepError(
            "projection step landed outside the uniqueness tube; reduce dt"
        )
    return ReflectedPathRecord(seed=int(seed), times=times, states=states,
                               ell=ell_grid, flag=int(flags[0]))


def projection_scheme_batch(domain: Domain, coefficients: CoefficientField, z0,
                            horizon: float, dt: float, count: int,
                            master_seed: int) -> ReferenceEnsemble:
    """Batch projection scheme; per-path coarse-step failures are flagged."""
    if count < 1:
        raise ValueError("path count must be at least 1")
    z = np.asarray(z0, dtype=np.float64)
    if not float(domain.signed_distance(z)) > 0:
        raise ValueError("start point must lie strictly inside the domain")
    finals, ells, min_phis, flag_arrs, seed_arrs = [], [], [], [], []
    for lo in range(0, count, _PATH_BLOCK):
        hi = min(count, lo + _PATH_BLOCK)
        seeds = np.asarray(rng.derive_path_seed(master_seed, np.arange(lo, hi)),
                           dtype=np.uint64)
        x, ell, min_phi, flags, *_ = _projection_kernel(
            domain, coefficients, z, horizon, dt, seeds)
        finals.append(x)
        ells.append(ell)
        min_phis.append(min_phi)
        flag_arrs.append(flags)
        seed_arrs.append(seeds)
    return ReferenceEnsemble(seeds=np.concatenate(seed_arrs),
                             final_states=np.concatenate(finals),
                             ell=np.concatenate(ells),
                             min_phi=np.concatenate(min_phis),
                             flags=np.concatenate(flag_arrs),
                             horizon=horizon, dt=dt, kind="projection")
