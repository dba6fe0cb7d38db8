"""State coefficients and boundary reflection directions.

Drift and diffusion are defined on an open neighborhood of the closed
domain: penalized paths overshoot the boundary, so evaluation slightly
outside must be legal.  Constant and affine kinds are global; tabulated
fields carry an explicit validity box and refuse evaluation outside it.

Reflection directions live on the boundary and are normalized so that
r(p) . n(p) = 1 against the inward unit normal.  The unit-direction
extension transports r into the uniqueness tube through the nearest
boundary point, so it is constant along normal segments.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidReflectionError, OutsideValidityError
from .geometry import Domain

_TRANSVERSALITY_TOL = 1e-10
_SINGULAR_DET_TOL = 1e-12


def _as_matrix(diffusion, dim: int) -> np.ndarray:
    """Accept a scalar (meaning s*I) or a full d x d matrix.

    The exactly-zero matrix is admitted as a degenerate special case so
    deterministic (noise-free) paths can be simulated; any other
    near-singular matrix is rejected.
    """
    sig = np.asarray(diffusion, dtype=np.float64)
    if sig.ndim == 0:
        sig = float(sig) * np.eye(dim)
    if sig.shape != (dim, dim):
        raise ValueError(f"diffusion must be scalar or {dim}x{dim}, got shape {sig.shape}")
    if not np.isfinite(sig).all():
        raise ValueError("diffusion must be finite")
    if np.any(sig != 0.0) and abs(np.linalg.det(sig)) <= _SINGULAR_DET_TOL:
        raise ValueError("diffusion matrix is singular")
    return sig


class CoefficientField:
    """Drift b(x) and diffusion sigma(x) evaluated over (..., d) points.

    ``sigma_perturbation_scale`` defines the indexed family
    sigma_n = sigma + (scale/n) * I used when the penalized scheme is run
    with per-level diffusion; the default 0 keeps the family constant.
    """

    kind: str
    dimension: int
    sigma_perturbation_scale: float

    def drift(self, x) -> np.ndarray:
        raise NotImplementedError

    def diffusion(self, x) -> np.ndarray:
        raise NotImplementedError

    def diffusion_at_index(self, x, n: int) -> np.ndarray:
        """sigma_n(x) for penalty level n."""
        sig = self.diffusion(x)
        if self.sigma_perturbation_scale:
            sig = sig + (self.sigma_perturbation_scale / n) * np.eye(self.dimension)
        return sig

    @property
    def constant_diffusion(self) -> bool:
        """True when sigma does not depend on x (enables precomputation)."""
        return False

    @property
    def constant_drift(self) -> bool:
        """True when b does not depend on x (skips re-evaluation)."""
        return False

    def to_config(self) -> dict:
        raise NotImplementedError


class ConstantCoefficients(CoefficientField):
    """b and sigma independent of position; valid everywhere."""

    kind = "constant"

    def __init__(self, drift, diffusion, sigma_perturbation_scale: float = 0.0):
        b = np.asarray(drift, dtype=np.float64)
        if b.ndim != 1 or b.size < 2:
            raise ValueError("drift must be a vector of dimension >= 2")
        if not np.isfinite(b).all():
            raise ValueError("drift must be finite")
        self.dimension = b.size
        self._b = b
        self._sigma = _as_matrix(diffusion, self.dimension)
        self.sigma_perturbation_scale = float(sigma_perturbation_scale)

    def drift(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.broadcast_to(self._b, x.shape).copy()

    def diffusion(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.broadcast_to(self._sigma, x.shape[:-1] + (self.dimension,) * 2).copy()

    @property
    def constant_diffusion(self) -> bool:
        return True

    @property
    def constant_drift(self) -> bool:
        return True

    @property
    def drift_vector(self) -> np.ndarray:
        return self._b.copy()

    @property
    def diffusion_matrix(self) -> np.ndarray:
        return self._sigma.copy()

    def to_config(self):
        return {"kind": "constant", "drift": self._b.tolist(),
                "diffusion": self._sigma.tolist(),
                "sigma_perturbation_scale": self.sigma_perturbation_scale}


class AffineCoefficients(CoefficientField):
    """b(x) = offset + matrix @ x with constant sigma; valid everywhere."""

    kind = "affine"

    def __init__(self, drift_offset, drift_matrix, diffusion,
                 sigma_perturbation_scale: float = 0.0):
        b0 = np.asarray(drift_offset, dtype=np.float64)
        bm = np.asarray(drift_matrix, dtype=np.float64)
        if b0.ndim != 1 or b0.size < 2 or bm.shape != (b0.size, b0.size):
            raise ValueError("drift_offset must be a d-vector and drift_matrix d x d")
        if not (np.isfinite(b0).all() and np.isfinite(bm).all()):
            raise ValueError("affine drift parameters must be finite")
        self.dimension = b0.size
        self._b0 = b0
        self._bm = bm
        self._sigma = _as_matrix(diffusion, self.dimension)
        self.sigma_perturbation_scale = float(sigma_perturbation_scale)

    def drift(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self._b0 + x @ self._bm.T

    def diffusion(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.broadcast_to(self._sigma, x.shape[:-1] + (self.dimension,) * 2).copy()

    @property
    def constant_diffusion(self) -> bool:
        return True

    @property
    def diffusion_matrix(self) -> np.ndarray:
        return self._sigma.copy()

    def to_config(self):
        return {"kind": "affine", "drift_offset": self._b0.tolist(),
                "drift_matrix": self._bm.tolist(), "diffusion": self._sigma.tolist(),
                "sigma_perturbation_scale": self.sigma_perturbation_scale}


class TabulatedCoefficients(CoefficientField):
    """b and sigma interpolated from values on a rectangular grid.

    The grid's bounding box is the validity region; evaluating any point
    outside it raises, because extrapolated coefficients would silently
    disagree with whatever produced the table.
    """

    kind = "user-table"

    def __init__(self, axes, drift_values, diffusion_values,
                 sigma_perturbation_scale: float = 0.0):
        from scipy.interpolate import RegularGridInterpolator

        axes = [np.asarray(a, dtype=np.float64) for a in axes]
        self.dimension = len(axes)
        if self.dimension < 2:
            raise ValueError("need at least 2 grid axes")
        grid_shape = tuple(a.size for a in axes)
        bv = np.asarray(drift_values, dtype=np.float64)
        sv = np.asarray(diffusion_values, dtype=np.float64)
        if bv.shape != grid_shape + (self.dimension,):
            raise ValueError(f"drift table must have shape {grid_shape + (self.dimension,)}")
        if sv.shape != grid_shape + (self.dimension,) * 2:
            raise ValueError(
                f"diffusion table must have shape {grid_shape + (self.dimension,) * 2}")
        self._lo = np.array([a[0] for a in axes])
        self._hi = np.array([a[-1] for a in axes])
        self._b_interp = RegularGridInterpolator(axes, bv)
        self._s_interp = RegularGridInterpolator(axes, sv)
        self.sigma_perturbation_scale = float(sigma_perturbation_scale)

    def _check_validity(self, x: np.ndarray):
        if np.any(x < self._lo) or np.any(x > self._hi):
            raise OutsideValidityError(
                f"point outside the tabulated box {self._lo.tolist()}..{self._hi.tolist()}"
            )

    def drift(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._check_validity(x)
        return self._b_interp(x.reshape(-1, self.dimension)).reshape(x.shape)

    def diffusion(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._check_validity(x)
        sig = self._s_interp(x.reshape(-1, self.dimension))
        sig = sig.reshape(x.shape[:-1] + (self.dimension,) * 2)
        dets = np.linalg.det(sig)
        if np.any(np.abs(dets) <= _SINGULAR_DET_TOL):
            raise ValueError("interpolated diffusion matrix is singular")
        return sig

    def to_config(self):
        raise NotImplementedError("tabulated coefficient fields are not serializable")


def coefficients_from_config(cfg: dict, dimension: int) -> CoefficientField:
    kind = cfg.get("kind", "constant")
    scale = float(cfg.get("sigma_perturbation_scale", 0.0))
    if kind == "constant":
        drift = cfg.get("drift", [0.0] * dimension)
        return ConstantCoefficients(drift, cfg.get("diffusion", 1.0), scale)
    if kind == "affine":
        return AffineCoefficients(cfg["drift_offset"], cfg["drift_matrix"],
                                  cfg.get("diffusion", 1.0), scale)
    raise ValueError(f"coefficient kind {kind!r} is not serializable from config")


def _rotate_ccw(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


class _ConstantRaw:
    """Constant raw direction; a class (not a closure) so fields pickle."""

    def __init__(self, vector: np.ndarray):
        self.vector = vector

    def __call__(self, p):
        return np.broadcast_to(self.vector, np.shape(p)).copy()


class _TangentialRaw:
    """n + beta * t with t the CCW rotation of the inward normal (2-D)."""

    def __init__(self, domain: Domain, beta: float):
        self.domain = domain
        self.beta = beta

    def __call__(self, p):
        nrm = self.domain._inward_normal_at(np.asarray(p, dtype=np.float64))
        return nrm + self.beta * _rotate_ccw(nrm)


class ReflectionField:
    """Boundary direction field normalized to r(p) . n(p) = 1.

    ``raw`` maps (..., d) boundary points to direction vectors; the
    normalization happens at evaluation, so the invariant holds by
    construction wherever the raw field is transversal.
    """

    def __init__(self, raw, domain: Domain, kind: str = "custom",
                 params: dict | None = None):
        self._raw = raw
        self.domain = domain
        self.kind = kind
        self._params = dict(params or {})

    def at_boundary(self, p, check: bool = True) -> np.ndarray:
        """Normalized reflection direction at boundary points p."""
        p = np.asarray(p, dtype=np.float64)
        if check:
            nrm = self.domain.inward_normal(p)
        else:
            nrm = self.domain._inward_normal_at(p)
        raw = np.asarray(self._raw(p), dtype=np.float64)
        rn = np.sum(raw * nrm, axis=-1)
        if np.any(rn <= _TRANSVERSALITY_TOL):
            raise InvalidReflectionError(
                "reflection direction is tangential or outward (raw . n <= 1e-10)"
            )
        return raw / rn[..., None]

    def unit_direction(self, x) -> np.ndarray:
        """r(y(x)) / ||r(y(x))|| for x in the uniqueness tube."""
        y = self.domain.nearest_boundary_point(x)
        return self.unit_direction_from_boundary(y)

    def unit_direction_from_boundary(self, y) -> np.ndarray:
        """Unit direction given precomputed nearest boundary points."""
        r = self.at_boundary(y, check=False)
        return r / np.linalg.norm(r, axis=-1, keepdims=True)

    @property
    def constant_over_boundary(self) -> bool:
        """True when r(p) is the same at every boundary point.

        Holds for the built-in kinds on a half-space, whose inward normal
        never varies; lets evaluators skip the boundary projection.
        """
        from .geometry import HalfSpace

        return (isinstance(self.domain, HalfSpace)
                and self.kind in ("constant", "normal", "tangential"))

    def constant_value(self) -> np.ndarray:
        """The single r value of a constant_over_boundary field."""
        if not self.constant_over_boundary:
            raise ValueError("reflection direction varies over this boundary")
        p = np.zeros(self.domain.dimension)
        p[self.domain.axis] = self.domain.offset
        return self.at_boundary(p, check=False)

    def to_config(self) -> dict:
        if self.kind == "custom":
            raise NotImplementedError("custom reflection fields are not serializable")
        return {"kind": self.kind, **self._params}


def normalize_reflection(raw, domain: Domain, kind: str = "custom",
                         params: dict | None = None) -> ReflectionField:
    """Wrap a raw direction field (callable or constant vector).

    The wrapped field divides by raw . n at evaluation, so normalizing an
    already-normalized field changes nothing.
    """
    if not callable(raw):
        vec = np.asarray(raw, dtype=np.float64)
        if vec.ndim != 1 or vec.size != domain.dimension:
            raise ValueError("constant reflection must be a d-vector")
        if not np.isfinite(vec).all():
            raise ValueError("reflection vector must be finite")
        if kind == "custom":
            kind, params = "constant", {"vector": vec.tolist()}
        raw = _ConstantRaw(vec)
    return ReflectionField(raw, domain, kind=kind, params=params)


def constant_reflection(domain: Domain, vector) -> ReflectionField:
    return normalize_reflection(vector, domain)


def normal_reflection(domain: Domain) -> ReflectionField:
    """r = inward unit normal (already normalized: n . n = 1)."""
    return ReflectionField(domain._inward_normal_at, domain, kind="normal")


def tangential_reflection(domain: Domain, beta: float) -> ReflectionField:
    """r = n + beta * t in the plane, t the CCW rotation of the inward normal."""
    if domain.dimension != 2:
        raise ValueError("tangential reflection is only defined in dimension 2")
    return ReflectionField(_TangentialRaw(domain, beta), domain,
                           kind="tangential", params={"beta": float(beta)})


def reflection_from_config(cfg: dict, domain: Domain) -> ReflectionField:
    kind = cfg.get("kind", "normal")
    if kind == "normal":
        return normal_reflection(domain)
    if kind == "constant":
        return constant_reflection(domain, cfg["vector"])
    if kind == "tangential":
        return tangential_reflection(domain, float(cfg["beta"]))
    raise ValueError(f"unknown reflection kind {kind!r}")
