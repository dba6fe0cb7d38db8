"""Penalty schedules, the penalty drift field, and hypothesis certifiers.

A schedule family assigns to each level n a nonnegative profile g_n of the
signed distance.  The singular families concentrate their mass at the
boundary as n grows: the integral of g_n over any neighborhood of zero
diverges while g_n vanishes locally uniformly away from zero.  The
penalty field points the profile along the reflection direction pulled
back from the nearest boundary point,

    f_n(x) = g_n(phi(x)) * r(y(x))   inside the cutoff band,
    f_n(x) = 0                        once phi(x) >= cutoff,

which is the drift that emulates oblique reflection.  The certifiers
measure, by deterministic sampling, whether a given field actually has
the spike, the decay, the directional emulation, and the boundary floor
that the convergence argument needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonUniqueProjectionError
from .fields import ReflectionField
from . import geometry

# exp() saturates just above 709; staying clearly below keeps g_n * ||r||
# finite so overdeep excursions degrade into substep-guard aborts instead
# of propagating infinities.
_EXP_ARG_MAX = 690.0
_QUAD_RTOL = 1e-6


class PenaltyFamily:
    """A level-indexed schedule n -> g_n, each g_n : R -> [0, inf)."""

    kind: str

    def evaluate(self, n: int, s) -> np.ndarray | float:
        """g_n(s), vectorized over s."""
        raise NotImplementedError

    def spike_integral(self, n: int, eps: float) -> float:
        """Integral of g_n over [-eps, eps]; adaptive quadrature fallback."""
        from scipy.integrate import quad

        if not eps > 0:
            raise ValueError("eps must be positive")
        val, _ = quad(lambda s: float(self.evaluate(n, s)), -eps, eps,
                      epsrel=_QUAD_RTOL, limit=200)
        return float(val)

    def _check_level(self, n: int):
        if (isinstance(n, bool) or not isinstance(n, (int, np.integer))
                or n < 1):
            raise ValueError(f"level n must be a positive integer, got {n!r}")

    def emulation_band(self, n: int) -> float:
        """Collar half-width where the level-n term is appreciably nonzero.

        Direction checks sample a band of this width around the boundary;
        families active on all of one side report infinity and let the
        caller clamp to the domain's tube.
        """
        return float("inf")

    def to_config(self) -> dict:
        raise NotImplementedError


class ExponentialFamily(PenaltyFamily):
    """g_n(s) = n^2 exp(-n s); grows under the boundary, decays inside."""

    kind = "exponential"

    def evaluate(self, n, s):
        self._check_level(n)
        s = np.asarray(s, dtype=np.float64)
        log_g = 2.0 * np.log(float(n)) - float(n) * s
        out = np.exp(np.minimum(log_g, _EXP_ARG_MAX))
        return float(out) if out.ndim == 0 else out

    def spike_integral(self, n, eps):
        self._check_level(n)
        if not eps > 0:
            raise ValueError("eps must be positive")
        with np.errstate(over="ignore"):
            return float(n * (np.exp(n * eps) - np.exp(-n * eps)))

    def emulation_band(self, n):
        self._check_level(n)
        return 10.0 / float(n)

    def to_config(self):
        return {"kind": "exponential"}


class ScaledBumpFamily(PenaltyFamily):
    """g_n(s) = a_n h(c_n s) with a_n = n^a_exp, c_n = n^c_exp.

    The exponents must satisfy a_exp > c_exp > 0, which makes the mass
    a_n / c_n diverge while the support [0, 1/c_n] shrinks to the boundary.
    """

    kind = "scaled-bump"

    def __init__(self, a_exp: float, c_exp: float, h_kind: str = "indicator"):
        if not a_exp > c_exp > 0:
            raise ValueError(f"need a_exp > c_exp > 0, got a_exp={a_exp}, c_exp={c_exp}")
        if h_kind not in ("indicator", "triangle"):
            raise ValueError(f"unknown bump profile {h_kind!r}")
        self.a_exp = float(a_exp)
        self.c_exp = float(c_exp)
        self.h_kind = h_kind

    def _amps(self, n):
        return float(n) ** self.a_exp, float(n) ** self.c_exp

    def evaluate(self, n, s):
        self._check_level(n)
        a_n, c_n = self._amps(n)
        u = c_n * np.asarray(s, dtype=np.float64)
        if self.h_kind == "indicator":
            h = ((u >= 0.0) & (u <= 1.0)).astype(np.float64)
        else:
            h = np.where((u >= 0.0) & (u <= 1.0), 1.0 - u, 0.0)
        out = a_n * h
        return float(out) if out.ndim == 0 else out

    def spike_integral(self, n, eps):
        self._check_level(n)
        if not eps > 0:
            raise ValueError("eps must be positive")
        a_n, c_n = self._amps(n)
        top = min(eps, 1.0 / c_n)
        if self.h_kind == "indicator":
            return a_n * top
        u = c_n * top
        return a_n / c_n * (u - 0.5 * u * u)

    def emulation_band(self, n):
        self._check_level(n)
        return 1.0 / (float(n) ** self.c_exp)

    def to_config(self):
        return {"kind": "scaled-bump", "a_exp": self.a_exp, "c_exp": self.c_exp,
                "h_kind": self.h_kind}


class ProjectionFamily(PenaltyFamily):
    """g_n(s) = n * max(-s, 0): linear push applied only past the boundary."""

    kind = "projection"

    def evaluate(self, n, s):
        self._check_level(n)
        out = float(n) * np.maximum(-np.asarray(s, dtype=np.float64), 0.0)
        return float(out) if out.ndim == 0 else out

    def spike_integral(self, n, eps):
        self._check_level(n)
        if not eps > 0:
            raise ValueError("eps must be positive")
        return 0.5 * n * eps * eps

    def to_config(self):
        return {"kind": "projection"}


class ConstantFamily(PenaltyFamily):
    """g_n ≡ value for every n: a negative control with no spike."""

    kind = "constant"

    def __init__(self, value: float = 1.0):
        if not value >= 0:
            raise ValueError("constant schedule value must be nonnegative")
        self.value = float(value)

    def evaluate(self, n, s):
        self._check_level(n)
        out = np.full_like(np.asarray(s, dtype=np.float64), self.value)
        return float(out) if out.ndim == 0 else out

    def spike_integral(self, n, eps):
        self._check_level(n)
        if not eps > 0:
            raise ValueError("eps must be positive")
        return 2.0 * self.value * eps

    def to_config(self):
        return {"kind": "constant", "value": self.value}


def family_from_config(cfg: dict) -> PenaltyFamily:
    kind = cfg.get("kind")
    if kind == "exponential":
        return ExponentialFamily()
    if kind == "scaled-bump":
        return ScaledBumpFamily(float(cfg["a_exp"]), float(cfg["c_exp"]),
                                cfg.get("h_kind", "indicator"))
    if kind == "projection":
        return ProjectionFamily()
    if kind == "constant":
        return ConstantFamily(float(cfg.get("value", 1.0)))
    raise ValueError(f"unknown penalty family kind {kind!r}")


def eval_schedule(family: PenaltyFamily, n: int, s):
    """g_n(s) for the given family and level."""
    return family.evaluate(n, s)


class PenaltyField:
    """f_n(x) = g_n(phi(x)) r(y(x)) inside the cutoff band, else zero.

    The nearest-point pullback needs the uniqueness tube, so the cutoff
    must not exceed the domain's tube radius; by default it sits at half.
    """

    def __init__(self, family: PenaltyFamily, n: int, reflection: ReflectionField,
                 cutoff: float | None = None):
        family._check_level(n)
        self.family = family
        self.n = int(n)
        self.reflection = reflection
        self.domain = reflection.domain
        tube = self.domain.tube_radius
        self.cutoff = 0.5 * tube if cutoff is None else float(cutoff)
        if not 0 < self.cutoff <= tube:
            raise ValueError(f"cutoff must lie in (0, tube_radius={tube}]")
        # A direction that is the same everywhere on the boundary lets the
        # hot loop skip the nearest-point solve entirely.
        self._r_const = (reflection.constant_value()
                         if reflection.constant_over_boundary else None)

    def evaluate_batch(self, x) -> tuple[np.ndarray, np.ndarray]:
        """(values (..., d), ok mask): ok=False marks points too far outside.

        Points with phi >= cutoff contribute exactly zero without touching
        the boundary projection, so deep-interior states are always legal.
        """
        x = self.domain._check_points(np.asarray(x, dtype=np.float64))
        shape = x.shape[:-1]
        flat = x.reshape(-1, self.domain.dimension)
        phi = np.asarray(self.domain._signed_distance(flat))
        vals = np.zeros_like(flat)
        ok = np.ones(flat.shape[0], dtype=bool)
        need = phi < self.cutoff
        if np.any(need):
            if self._r_const is not None:
                bad = need & (np.abs(phi) >= self.domain.tube_radius)
                ok[bad] = False
                good = need & ~bad
                g = np.asarray(self.family.evaluate(self.n, phi[good]))
                vals[good] = g[:, None] * self._r_const
            else:
                rows = np.where(need)[0]
                p, phi_s, in_tube = self.domain.nearest_with_uniqueness(flat[rows])
                ok[rows[~in_tube]] = False
                good = rows[in_tube]
                if good.size:
                    r = self.reflection.at_boundary(p[in_tube], check=False)
                    g = self.family.evaluate(self.n, phi_s[in_tube])
                    vals[good] = np.asarray(g)[:, None] * r
        return vals.reshape(shape + (self.domain.dimension,)), ok.reshape(shape)

    def evaluate(self, x) -> np.ndarray:
        """Single-point evaluation; raises outside the uniqueness tube."""
        x = np.asarray(x, dtype=np.float64)
        vals, ok = self.evaluate_batch(x.reshape(1, -1))
        if not ok[0]:
            raise NonUniqueProjectionError(
                "penalty field evaluated beyond the uniqueness tube"
            )
        return vals[0]


class ProjectionDriftField:
    """The classic projection penalty: n * (Pi(x) - x) outside the domain.

    Its push is purely normal, so it cannot emulate an oblique reflection;
    it serves as the negative control for the emulation certifier, carrying
    the target reflection field it is measured against.
    """

    kind = "projection-drift"

    def __init__(self, n: int, reflection: ReflectionField):
        if not (isinstance(n, (int, np.integer)) and n >= 1):
            raise ValueError(f"level n must be a positive integer, got {n!r}")
        self.n = int(n)
        self.reflection = reflection
        self.domain = reflection.domain

    def evaluate_batch(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = self.domain._check_points(np.asarray(x, dtype=np.float64))
        shape = x.shape[:-1]
        flat = x.reshape(-1, self.domain.dimension)
        phi = np.asarray(self.domain._signed_distance(flat))
        vals = np.zeros_like(flat)
        ok = np.ones(flat.shape[0], dtype=bool)
        outside = phi < 0
        if np.any(outside):
            rows = np.where(outside)[0]
            p, _, in_tube = self.domain.nearest_with_uniqueness(flat[rows])
            ok[rows[~in_tube]] = False
            good = rows[in_tube]
            if good.size:
                vals[good] = self.n * (p[in_tube] - flat[good])
        return vals.reshape(shape + (self.domain.dimension,)), ok.reshape(shape)

    def evaluate(self, x) -> np.ndarray:
        vals, ok = self.evaluate_batch(np.asarray(x, dtype=np.float64).reshape(1, -1))
        if not ok[0]:
            raise NonUniqueProjectionError(
                "projection drift evaluated beyond the uniqueness tube"
            )
        return vals[0]


@dataclass(frozen=True)
class SingularityReport:
    """Spike and decay evidence for one family over a level grid."""

    family_kind: str
    n_grid: tuple
    sup_values: tuple
    spike_integrals: tuple
    spike_diverges: bool
    decays_to_zero: bool

    @property
    def passed(self) -> bool:
        return self.spike_diverges and self.decays_to_zero


def singularity_report(family: PenaltyFamily, n_grid, s_grid,
                       eps: float = 0.1) -> SingularityReport:
    """Check the two halves of singularity over a finite level grid.

    Divergent spike: the integrals over [-eps, eps] grow monotonically
    across the grid.  Decay: the sup over the positive s-grid is
    nonincreasing past its peak and ends well below it (or at zero).
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 2 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be strictly increasing with at least 2 levels")
    s = np.asarray(s_grid, dtype=np.float64)
    if s.size == 0 or np.any(s <= 0):
        raise ValueError("s_grid must contain positive values only")

    sups = [float(np.max(family.evaluate(n, s))) for n in n_grid]
    integrals = [family.spike_integral(n, eps) for n in n_grid]

    nondecreasing = all(b >= a * (1.0 - 1e-12) for a, b in zip(integrals, integrals[1:]))
    spike = nondecreasing and integrals[-1] > integrals[0] * (1.0 + 1e-9) + 1e-300

    peak = int(np.argmax(sups))
    tail = sups[peak:]
    tail_ok = all(b <= a * (1.0 + 1e-12) + 1e-300 for a, b in zip(tail, tail[1:]))
    decays = tail_ok and (sups[-1] <= 1e-12 or sups[-1] <= 0.5 * sups[peak])

    return SingularityReport(family_kind=family.kind, n_grid=tuple(n_grid),
                             sup_values=tuple(sups), spike_integrals=tuple(integrals),
                             spike_diverges=spike, decays_to_zero=decays)


def emulation_defect(field, band_width: float, threshold: float,
                     count: int, seed: int) -> float | None:
    """Sup directional defect against the field's reflection over a band.

    Samples the two-sided band {|phi| < band_width}, keeps points where
    ||f(x)|| >= threshold, and returns the largest distance between the
    unit direction of f and the unit reflection direction at the nearest
    boundary point.  Returns None (not-applicable) when no sample clears
    the threshold - an empty restriction must not read as a perfect score.
    """
    domain = field.domain
    if not 0 < band_width < domain.tube_radius:
        raise ValueError("band width must lie in (0, tube_radius)")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    xs = geometry.sample_band(domain, band_width, count, seed)
    vals, ok = field.evaluate_batch(xs)
    mags = np.linalg.norm(vals, axis=1)
    keep = ok & (mags >= threshold)
    if not np.any(keep):
        return None
    p, _, _ = domain.nearest_with_uniqueness(xs[keep])
    target = field.reflection.unit_direction_from_boundary(p)
    unit = vals[keep] / mags[keep][:, None]
    return float(np.max(np.linalg.norm(unit - target, axis=1)))


def boundary_floor(field, level: float, count: int, seed: int) -> float:
    """Infimum of ||f|| over the level set {phi = level}, by exact sampling.

    Returns +inf when the requested level lies beyond the tube, where the
    level set is empty (or degenerate) for every built-in domain.
    """
    domain = field.domain
    if abs(level) >= domain.tube_radius:
        return float("inf")
    xs = geometry.sample_level(domain, level, count, seed)
    vals, ok = field.evaluate_batch(xs)
    if not np.all(ok):
        raise NonUniqueProjectionError("level-set sample left the uniqueness tube")
    return float(np.min(np.linalg.norm(vals, axis=1)))
