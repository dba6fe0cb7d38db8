"""Smooth-domain geometry: signed distance, boundary projection, normals.

Four closed-form domain kinds are provided: half-space, ball, ellipsoid,
and annulus.  The signed distance is positive inside the domain, zero on
the boundary, and negative outside.  Within a band of width ``tube_radius``
around the boundary the nearest boundary point is unique, and all
operations that pull a point back to the boundary require it.

Every operation accepts arrays of shape (..., d) and evaluates pointwise
over the leading axes; results are immutable-by-convention and all methods
are pure, so domains can be shared freely across worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    NonUniqueProjectionError,
    NotOnBoundaryError,
)
from . import rng

# "On the boundary" for preconditions: well above Newton tolerance, far
# below any step size.
TOL_BOUNDARY = 1e-9

# A half-space has a flat boundary, so projection is unique everywhere;
# the tube radius is capped to keep arithmetic finite.
HALFSPACE_TUBE_CAP = 1e6

_NEWTON_TOL = 1e-12
_NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class BandSpec:
    """Boundary band: two-sided |phi| < width, or one-sided-inner phi > -width."""

    width: float
    mode: str = "two-sided"

    def __post_init__(self):
        if not (self.width > 0):
            raise ValueError(f"band width must be positive, got {self.width}")
        if self.mode not in ("two-sided", "one-sided-inner"):
            raise ValueError(f"unknown band mode {self.mode!r}")


class Domain:
    """Base class for closed-form smooth domains in dimension d >= 2."""

    dimension: int

    def _check_points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0 or x.shape[-1] != self.dimension:
            raise DimensionMismatchError(
                f"expected points of dimension {self.dimension}, got shape {x.shape}"
            )
        return x

    # Subclasses implement these three on validated (..., d) arrays.
    def _signed_distance(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _nearest(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _inward_normal_at(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def tube_radius(self) -> float:
        """Largest band width with a provably unique nearest boundary point."""
        raise NotImplementedError

    def signed_distance(self, x) -> np.ndarray | float:
        """Distance to the boundary, positive inside and negative outside."""
        x = self._check_points(x)
        phi = self._signed_distance(x)
        return float(phi) if phi.ndim == 0 else phi

    def nearest_boundary_point(self, x) -> np.ndarray:
        """The unique closest boundary point; requires |phi(x)| < tube_radius."""
        x = self._check_points(x)
        phi = self._signed_distance(x)
        if np.any(np.abs(phi) >= self.tube_radius):
            raise NonUniqueProjectionError(
                f"point at |signed distance| >= tube radius {self.tube_radius}; "
                "nearest boundary point is not guaranteed unique"
            )
        return self._nearest(x)

    def nearest_with_uniqueness(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Batched (nearest point, signed distance, inside-tube mask); never raises.

        Rows outside the uniqueness tube carry ok=False and a best-effort
        nearest point usable only for distance bookkeeping.
        """
        x = self._check_points(x)
        phi = self._signed_distance(x)
        ok = np.abs(phi) < self.tube_radius
        return self._nearest(x), phi, ok

    def inward_normal(self, p) -> np.ndarray:
        """Unit normal pointing into the domain at a boundary point."""
        p = self._check_points(p)
        phi = self._signed_distance(p)
        if np.any(np.abs(phi) > TOL_BOUNDARY):
            raise NotOnBoundaryError(
                f"inward_normal requires |signed distance| <= {TOL_BOUNDARY}"
            )
        return self._inward_normal_at(p)

    def in_band(self, x, band: BandSpec) -> np.ndarray | bool:
        phi = self.signed_distance(x)
        if band.mode == "two-sided":
            out = np.abs(phi) < band.width
        else:
            out = np.asarray(phi) > -band.width
        return bool(out) if np.ndim(out) == 0 else out

    def contains(self, x) -> np.ndarray | bool:
        """Membership in the closed domain (phi >= 0 up to tolerance)."""
        out = np.asarray(self.signed_distance(x)) >= -TOL_BOUNDARY
        return bool(out) if out.ndim == 0 else out

    def project_to_closure(self, x) -> np.ndarray:
        """Identity inside the closure; nearest boundary point outside."""
        x = self._check_points(x)
        flat = x.reshape(-1, self.dimension)
        phi = np.asarray(self._signed_distance(flat))
        # Points already in the closure (up to the boundary tolerance) are
        # left untouched, which makes repeated projection a strict identity
        # even when the nearest-point solve is iterative.
        outside = phi < -TOL_BOUNDARY
        out = flat.copy()
        if np.any(outside):
            if np.any(phi[outside] <= -self.tube_radius):
                raise NonUniqueProjectionError(
                    "projection requested for a point beyond the uniqueness tube"
                )
            out[outside] = self._nearest(flat[outside])
        return out.reshape(x.shape)

    def sample_boundary(self, count: int, seed: int) -> np.ndarray:
        """Deterministic pseudo-random boundary points, shape (count, d)."""
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


def _unit_directions(count: int, dim: int, seed: int) -> np.ndarray:
    """Random unit vectors via normalized Gaussians (Box-Muller on uniforms)."""
    pairs = (dim + 1) // 2
    u = rng.uniforms(seed, count * pairs * 2).reshape(count, 2 * pairs)
    r = np.sqrt(-2.0 * np.log(1.0 - u[:, 0::2]))
    th = 2.0 * np.pi * u[:, 1::2]
    g = np.empty((count, 2 * pairs))
    g[:, 0::2] = r * np.cos(th)
    g[:, 1::2] = r * np.sin(th)
    g = g[:, :dim]
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    norm[norm < 1e-12] = 1.0
    return g / norm


@dataclass(frozen=True)
class HalfSpace(Domain):
    """D = {x : x[axis] > offset}."""

    axis: int
    offset: float = 0.0
    dimension: int = 2
    tube_radius_hint: float | None = None

    def __post_init__(self):
        if self.dimension < 2:
            raise ValueError("dimension must be at least 2")
        if not 0 <= self.axis < self.dimension:
            raise ValueError(f"axis {self.axis} out of range for dimension {self.dimension}")
        if not np.isfinite(self.offset):
            raise ValueError("offset must be finite")
        if self.tube_radius_hint is not None and not (self.tube_radius_hint > 0):
            raise ValueError("tube_radius_hint must be positive")

    @property
    def tube_radius(self) -> float:
        return self.tube_radius_hint if self.tube_radius_hint is not None else HALFSPACE_TUBE_CAP

    def _signed_distance(self, x):
        return x[..., self.axis] - self.offset

    def _nearest(self, x):
        p = x.copy()
        p[..., self.axis] = self.offset
        return p

    def _inward_normal_at(self, p):
        n = np.zeros_like(p)
        n[..., self.axis] = 1.0
        return n

    def sample_boundary(self, count, seed):
        # Tangential coordinates span the reference box [-1, 1]^(d-1); all
        # built-in fields are translation invariant along the boundary.
        u = rng.uniforms(seed, count * (self.dimension - 1))
        p = np.empty((count, self.dimension))
        tangential = 2.0 * u.reshape(count, self.dimension - 1) - 1.0
        cols = [i for i in range(self.dimension) if i != self.axis]
        p[:, cols] = tangential
        p[:, self.axis] = self.offset
        return p

    def to_config(self):
        cfg = {"kind": "half-space", "dimension": self.dimension,
               "axis": self.axis, "offset": self.offset}
        if self.tube_radius_hint is not None:
            cfg["tube_radius_hint"] = self.tube_radius_hint
        return cfg


@dataclass(frozen=True)
class Ball(Domain):
    """D = {x : ||x - center|| < radius}."""

    center: tuple
    radius: float
    tube_radius_hint: float | None = None
    dimension: int = field(init=False)

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        if center.ndim != 1 or center.size < 2:
            raise ValueError("center must be a vector of dimension >= 2")
        if not (np.isfinite(center).all() and np.isfinite(self.radius)):
            raise ValueError("center and radius must be finite")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in center))
        object.__setattr__(self, "dimension", center.size)
        if self.tube_radius_hint is not None and not (0 < self.tube_radius_hint <= self.radius):
            raise ValueError("tube_radius_hint must lie in (0, radius]")

    @property
    def _c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=np.float64)

    @property
    def tube_radius(self) -> float:
        # Uniqueness of the radial projection fails only at the center.
        return self.tube_radius_hint if self.tube_radius_hint is not None else self.radius

    def _signed_distance(self, x):
        return self.radius - np.linalg.norm(x - self._c, axis=-1)

    def _nearest(self, x):
        u = x - self._c
        rho = np.linalg.norm(u, axis=-1, keepdims=True)
        safe = np.where(rho > 0, rho, 1.0)
        return self._c + self.radius * u / safe

    def _inward_normal_at(self, p):
        return (self._c - p) / self.radius

    def sample_boundary(self, count, seed):
        return self._c + self.radius * _unit_directions(count, self.dimension, seed)

    def to_config(self):
        cfg = {"kind": "ball", "center": list(self.center), "radius": self.radius}
        if self.tube_radius_hint is not None:
            cfg["tube_radius_hint"] = self.tube_radius_hint
        return cfg


@dataclass(frozen=True)
class Annulus(Domain):
    """D = {x : inner_radius < ||x - center|| < outer_radius}."""

    center: tuple
    inner_radius: float
    outer_radius: float
    tube_radius_hint: float | None = None
    dimension: int = field(init=False)

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        if center.ndim != 1 or center.size < 2:
            raise ValueError("center must be a vector of dimension >= 2")
        if not (0 < self.inner_radius < self.outer_radius):
            raise ValueError("need 0 < inner_radius < outer_radius")
        if not (np.isfinite(center).all() and np.isfinite(self.outer_radius)):
            raise ValueError("annulus parameters must be finite")
        object.__setattr__(self, "center", tuple(float(c) for c in center))
        object.__setattr__(self, "dimension", center.size)
        intrinsic = min(self.inner_radius, 0.5 * (self.outer_radius - self.inner_radius))
        if self.tube_radius_hint is not None and not (0 < self.tube_radius_hint <= intrinsic):
            raise ValueError("tube_radius_hint exceeds the provable uniqueness width")

    @property
    def _c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=np.float64)

    @property
    def tube_radius(self) -> float:
        if self.tube_radius_hint is not None:
            return self.tube_radius_hint
        # Inner boundary: projection fails at the center (curvature radius
        # inner_radius); between the circles, the midway shell is equidistant.
        return min(self.inner_radius, 0.5 * (self.outer_radius - self.inner_radius))

    def _rho(self, x):
        return np.linalg.norm(x - self._c, axis=-1)

    def _signed_distance(self, x):
        rho = self._rho(x)
        return np.minimum(rho - self.inner_radius, self.outer_radius - rho)

    def _nearest(self, x):
        u = x - self._c
        rho = np.linalg.norm(u, axis=-1, keepdims=True)
        target = np.where(rho <= 0.5 * (self.inner_radius + self.outer_radius),
                          self.inner_radius, self.outer_radius)
        safe = np.where(rho > 0, rho, 1.0)
        return self._c + target * u / safe

    def _inward_normal_at(self, p):
        u = p - self._c
        rho = np.linalg.norm(u, axis=-1, keepdims=True)
        # Inward means into the shell: radially outward at the inner
        # boundary, radially inward at the outer one.
        sign = np.where(rho <= 0.5 * (self.inner_radius + self.outer_radius), 1.0, -1.0)
        return sign * u / rho

    def sample_boundary(self, count, seed):
        dirs = _unit_directions(count, self.dimension, seed)
        half = count // 2
        radii = np.full(count, self.outer_radius)
        radii[:half] = self.inner_radius
        return self._c + radii[:, None] * dirs

    def to_config(self):
        cfg = {"kind": "annulus", "center": list(self.center),
               "inner_radius": self.inner_radius, "outer_radius": self.outer_radius}
        if self.tube_radius_hint is not None:
            cfg["tube_radius_hint"] = self.tube_radius_hint
        return cfg


@dataclass(frozen=True)
class Ellipsoid(Domain):
    """D = {x : sum(((x - center) / semi_axes)^2) < 1}."""

    center: tuple
    semi_axes: tuple
    tube_radius_hint: float | None = None
    dimension: int = field(init=False)

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        axes = np.asarray(self.semi_axes, dtype=np.float64)
        if center.ndim != 1 or center.size < 2 or axes.shape != center.shape:
            raise ValueError("center and semi_axes must be equal-length vectors, d >= 2")
        if not (np.isfinite(center).all() and np.isfinite(axes).all()):
            raise ValueError("ellipsoid parameters must be finite")
        if not np.all(axes > 0):
            raise ValueError("semi-axes must be strictly positive")
        object.__setattr__(self, "center", tuple(float(c) for c in center))
        object.__setattr__(self, "semi_axes", tuple(float(a) for a in axes))
        object.__setattr__(self, "dimension", center.size)
        intrinsic = float(np.min(axes) ** 2 / np.max(axes))
        if self.tube_radius_hint is not None and not (0 < self.tube_radius_hint <= intrinsic):
            raise ValueError("tube_radius_hint exceeds the provable uniqueness width")

    @property
    def _c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=np.float64)

    @property
    def _a(self) -> np.ndarray:
        return np.asarray(self.semi_axes, dtype=np.float64)

    @property
    def tube_radius(self) -> float:
        if self.tube_radius_hint is not None:
            return self.tube_radius_hint
        # Minimum radius of curvature over the boundary, attained at the
        # vertex of the longest axis.
        a = self._a
        return float(np.min(a) ** 2 / np.max(a))

    def _signed_distance(self, x):
        p, dist = self._nearest_and_distance(x)
        a = self._a
        inside = np.sum(((x - self._c) / a) ** 2, axis=-1) <= 1.0
        return np.where(inside, dist, -dist)

    def _nearest(self, x):
        p, _ = self._nearest_and_distance(x)
        return p

    def nearest_with_uniqueness(self, x):
        # One Newton solve serves both the projection and the distance.
        x = self._check_points(x)
        p, dist = self._nearest_and_distance(x)
        inside = np.sum(((x - self._c) / self._a) ** 2, axis=-1) <= 1.0
        phi = np.where(inside, dist, -dist)
        return p, phi, np.abs(phi) < self.tube_radius

    def _nearest_and_distance(self, x):
        """Closest boundary point and unsigned distance for (..., d) points.

        Solves the closest-point problem via a safeguarded Newton iteration
        on the Lagrange multiplier t of: minimize ||u - p|| subject to
        sum((p/a)^2) = 1, where p_i = a_i^2 u_i / (t + a_i^2).  For points
        whose i-th coordinate vanishes, the stationary solutions with
        t = -a_i^2 (nearest point off the symmetry axis) are also examined;
        they take over beyond the focal caustic, keeping the distance exact
        everywhere, not only in the uniqueness tube.
        """
        a = self._a
        shape = x.shape[:-1]
        u = (x - self._c).reshape(-1, self.dimension)
        n = u.shape[0]
        scale = float(np.max(a))
        zero = np.abs(u) <= 1e-14 * scale

        a2 = a**2
        best_p = np.zeros_like(u)
        best_d2 = np.full(n, np.inf)

        # Main branch: the root of F(t) = sum(a_i^2 u_i^2 / (t + a_i^2)^2) = 1
        # on (t_lo, inf), where t_lo = max(-a_i^2) over nonzero coordinates.
        nonzero_any = ~np.all(zero, axis=1)
        if np.any(nonzero_any):
            idx = np.where(nonzero_any)[0]
            uu = u[idx]
            zz = zero[idx]
            w2 = np.where(zz, 0.0, a2 * uu**2)
            t_lo = np.max(np.where(zz, -np.inf, -a2), axis=1)
            s_total = np.sqrt(np.sum(w2, axis=1))

            lo = t_lo.copy()
            hi = np.maximum(s_total, t_lo + 1e-3 * scale**2)
            f_hi = self._root_fn(hi, w2, a2)
            for _ in range(200):
                grow = f_hi > 1.0
                if not np.any(grow):
                    break
                hi[grow] = t_lo[grow] + 2.0 * (hi[grow] - t_lo[grow])
                f_hi[grow] = self._root_fn(hi[grow], w2[grow], a2)

            t = 0.5 * (np.maximum(lo, hi - s_total) + hi)
            for _ in range(_NEWTON_MAX_ITER):
                denom = t[:, None] + a2[None, :]
                terms = w2 / denom**2
                f = np.sum(terms, axis=1) - 1.0
                df = -2.0 * np.sum(terms / denom, axis=1)
                above = f > 0
                lo = np.where(above, t, lo)
                hi = np.where(above, hi, t)
                with np.errstate(divide="ignore", invalid="ignore"):
                    t_new = t - f / df
                bad = ~np.isfinite(t_new) | (t_new <= lo) | (t_new >= hi)
                t_new[bad] = 0.5 * (lo[bad] + hi[bad])
                done = np.abs(f) <= _NEWTON_TOL
                t = np.where(done, t, t_new)
                if np.all(done):
                    break
            denom = t[:, None] + a2[None, :]
            p = np.where(zz, 0.0, a2 * uu / denom)
            d2 = np.sum((uu - p) ** 2, axis=1)
            best_p[idx] = p
            best_d2[idx] = d2

        # Axis candidates: for each vanishing coordinate i, the branch with
        # t = -a_i^2 and p_i lifted off the axis.
        for i in range(self.dimension):
            rows = np.where(zero[:, i])[0]
            if rows.size == 0:
                continue
            uu = u[rows]
            zz = zero[rows]
            denom = a2 - a2[i]
            conflict = np.zeros(len(rows), dtype=bool)
            p = np.zeros_like(uu)
            for j in range(self.dimension):
                if j == i:
                    continue
                if denom[j] == 0.0:
                    conflict |= ~zz[:, j]
                    continue
                p[:, j] = np.where(zz[:, j], 0.0, a2[j] * uu[:, j] / denom[j])
            w = 1.0 - np.sum((p / a) ** 2, axis=1)
            valid = (~conflict) & (w >= 0.0)
            if not np.any(valid):
                continue
            p[:, i] = np.where(valid, a[i] * np.sqrt(np.maximum(w, 0.0)), 0.0)
            d2 = np.sum((uu - p) ** 2, axis=1)
            take = valid & (d2 < best_d2[rows])
            sel = rows[take]
            best_p[sel] = p[take]
            best_d2[sel] = d2[take]

        dist = np.sqrt(best_d2)
        return best_p.reshape(shape + (self.dimension,)) + self._c, dist.reshape(shape)

    @staticmethod
    def _root_fn(t, w2, a2):
        denom = t[:, None] + a2[None, :]
        return np.sum(w2 / denom**2, axis=1)

    def _inward_normal_at(self, p):
        grad = (p - self._c) / self._a**2
        return -grad / np.linalg.norm(grad, axis=-1, keepdims=True)

    def sample_boundary(self, count, seed):
        # Image of uniform sphere directions under the axis scaling; not
        # area-uniform, but covers the whole boundary deterministically.
        dirs = _unit_directions(count, self.dimension, seed)
        return self._c + self._a * dirs

    def to_config(self):
        cfg = {"kind": "ellipsoid", "center": list(self.center),
               "semi_axes": list(self.semi_axes)}
        if self.tube_radius_hint is not None:
            cfg["tube_radius_hint"] = self.tube_radius_hint
        return cfg


def sample_band(domain: Domain, width: float, count: int, seed: int) -> np.ndarray:
    """Points in the two-sided band {|phi| < width}, width < tube_radius.

    Boundary samples are slid along their inward normals by offsets drawn
    uniformly from (-width, width); the offset equals the resulting signed
    distance, so the band is filled exactly.
    """
    if not 0 < width < domain.tube_radius:
        raise ValueError("band width must lie in (0, tube_radius)")
    p = domain.sample_boundary(count, seed)
    nrm = domain._inward_normal_at(p)
    t = (2.0 * rng.uniforms(seed ^ 0x517CC1B727220A95, count) - 1.0) * width
    return p + t[:, None] * nrm


def sample_level(domain: Domain, level: float, count: int, seed: int) -> np.ndarray:
    """Points with signed distance exactly ``level``, |level| < tube_radius."""
    if not abs(level) < domain.tube_radius:
        raise ValueError("level must lie strictly inside the tube")
    p = domain.sample_boundary(count, seed)
    nrm = domain._inward_normal_at(p)
    return p + level * nrm


def domain_from_config(cfg: dict) -> Domain:
    """Build a domain from its serialized form (kind tag plus parameters)."""
    kind = cfg.get("kind")
    hint = cfg.get("tube_radius_hint")
    if kind == "half-space":
        return HalfSpace(axis=int(cfg["axis"]), offset=float(cfg.get("offset", 0.0)),
                         dimension=int(cfg.get("dimension", 2)), tube_radius_hint=hint)
    if kind == "ball":
        return Ball(center=tuple(cfg["center"]), radius=float(cfg["radius"]),
                    tube_radius_hint=hint)
    if kind == "ellipsoid":
        return Ellipsoid(center=tuple(cfg["center"]), semi_axes=tuple(cfg["semi_axes"]),
                         tube_radius_hint=hint)
    if kind == "annulus":
        return Annulus(center=tuple(cfg["center"]), inner_radius=float(cfg["inner_radius"]),
                       outer_radius=float(cfg["outer_radius"]), tube_radius_hint=hint)
    raise ValueError(f"unknown domain kind {kind!r}")
