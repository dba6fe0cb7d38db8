"""Experiment configuration: one JSON object describing a full study.

Parsing is strict: unknown keys are fatal anywhere in the tree, messages
carry the offending key path, and every module-level precondition is
checked at parse time, before any simulation starts.  A parsed config
normalizes to a fully-populated dictionary, so parse -> serialize ->
parse is the identity.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, IncompatibleReferenceError, ReflectSimError
from .fields import (CoefficientField, ReflectionField, coefficients_from_config,
                     reflection_from_config)
from .geometry import Ball, Domain, HalfSpace, domain_from_config
from .integrator import ModelSpec, StoppingRegion, stopping_from_config
from .penalty import (PenaltyFamily, PenaltyField, ProjectionDriftField,
                      family_from_config)

_MAX_SEED = 2**64

_DOMAIN_KEYS = {
    "half-space": {"kind", "axis", "offset", "dimension", "tube_radius_hint"},
    "ball": {"kind", "center", "radius", "tube_radius_hint"},
    "ellipsoid": {"kind", "center", "semi_axes", "tube_radius_hint"},
    "annulus": {"kind", "center", "inner_radius", "outer_radius", "tube_radius_hint"},
}
_COEFF_KEYS = {
    "constant": {"kind", "drift", "diffusion", "sigma_perturbation_scale"},
    "affine": {"kind", "drift_offset", "drift_matrix", "diffusion",
               "sigma_perturbation_scale"},
}
_REFLECTION_KEYS = {
    "normal": {"kind"},
    "constant": {"kind", "vector"},
    "tangential": {"kind", "beta"},
}
_FAMILY_KEYS = {
    "exponential": {"kind"},
    "scaled-bump": {"kind", "a_exp", "c_exp", "h_kind"},
    "projection": {"kind"},
    "constant": {"kind", "value"},
}
_STOPPING_KEYS = {
    "none": {"kind"},
    "ball": {"kind", "center", "radius"},
    "band": {"kind", "width"},
}


def _expect_dict(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError("expected an object", location=path)
    return value


def _check_keys(d: dict, allowed, path: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(map(repr, unknown))}",
                          location=path)


def _kind_of(d: dict, table: dict, path: str) -> str:
    kind = d.get("kind")
    if kind not in table:
        raise ConfigError(
            f"'kind' must be one of {sorted(table)}, got {kind!r}", location=path)
    _check_keys(d, table[kind], path)
    return kind


def _require(d: dict, key: str, path: str):
    if key not in d or d[key] is None:
        raise ConfigError(f"missing required key {key!r}", location=path)
    return d[key]


class ExperimentConfig:
    """Validated, normalized experiment description.

    Construction builds every component object (domain, coefficient
    field, reflection, penalty family) and a trial model specification,
    so any precondition violation surfaces here with a key-path anchor.
    """

    def __init__(self, raw: dict, source: str = "config"):
        data = _expect_dict(raw, source)
        _check_keys(data, {"domain", "coefficients", "reflection", "penalty",
                           "integrator", "reference", "diagnostics", "output_dir"},
                    source)
        norm: dict = {}

        # --- domain ---------------------------------------------------
        dom_cfg = _expect_dict(_require(data, "domain", source), "domain")
        dom_kind = _kind_of(dom_cfg, _DOMAIN_KEYS, "domain")
        try:
            self.domain: Domain = domain_from_config(dom_cfg)
        except (ReflectSimError, ValueError, KeyError, TypeError) as e:
            raise ConfigError(str(e) or repr(e), location="domain") from e
        norm["domain"] = self.domain.to_config()
        d = self.domain.dimension

        # --- coefficients ---------------------------------------------
        coeff_cfg = _expect_dict(_require(data, "coefficients", source), "coefficients")
        _kind_of(coeff_cfg, _COEFF_KEYS, "coefficients")
        try:
            self.coefficients: CoefficientField = coefficients_from_config(coeff_cfg, d)
        except (ReflectSimError, ValueError, KeyError, TypeError) as e:
            raise ConfigError(str(e) or repr(e), location="coefficients") from e
        if self.coefficients.dimension != d:
            raise ConfigError(
                f"coefficient dimension {self.coefficients.dimension} does not "
                f"match domain dimension {d}", location="coefficients")
        norm["coefficients"] = self.coefficients.to_config()

        # --- reflection -----------------------------------------------
        refl_cfg = _expect_dict(_require(data, "reflection", source), "reflection")
        _kind_of(refl_cfg, _REFLECTION_KEYS, "reflection")
        try:
            self.reflection: ReflectionField = reflection_from_config(refl_cfg, self.domain)
        except (ReflectSimError, ValueError, KeyError, TypeError) as e:
            raise ConfigError(str(e) or repr(e), location="reflection") from e
        norm["reflection"] = self.reflection.to_config()

        # --- penalty (optional: null disables the drift) ---------------
        pen_cfg = data.get("penalty")
        if pen_cfg is None:
            self.family: PenaltyFamily | None = None
            self.n_grid: tuple = ()
            self.cutoff: float | None = None
            norm["penalty"] = None
        else:
            pen_cfg = _expect_dict(pen_cfg, "penalty")
            _check_keys(pen_cfg, {"family", "n_grid", "cutoff"}, "penalty")
            fam_cfg = _expect_dict(_require(pen_cfg, "family", "penalty"),
                                   "penalty.family")
            _kind_of(fam_cfg, _FAMILY_KEYS, "penalty.family")
            try:
                self.family = family_from_config(fam_cfg)
            except (ReflectSimError, ValueError, KeyError, TypeError) as e:
                raise ConfigError(str(e) or repr(e), location="penalty.family") from e
            grid = _require(pen_cfg, "n_grid", "penalty")
            if (not isinstance(grid, list) or not grid
                    or not all(isinstance(n, int) and not isinstance(n, bool) and n >= 1
                               for n in grid)):
                raise ConfigError("must be a nonempty list of integers >= 1",
                                  location="penalty.n_grid")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError("levels must be strictly increasing",
                                  location="penalty.n_grid")
            self.n_grid = tuple(grid)
            cutoff = pen_cfg.get("cutoff")
            if cutoff is not None:
                cutoff = float(cutoff)
                if not 0 < cutoff <= self.domain.tube_radius:
                    raise ConfigError(
                        f"cutoff must lie in (0, tube_radius={self.domain.tube_radius:g}]",
                        location="penalty.cutoff")
            self.cutoff = cutoff
            norm["penalty"] = {"family": self.family.to_config(),
                               "n_grid": list(self.n_grid), "cutoff": self.cutoff}

        # --- integrator ------------------------------------------------
        integ = _expect_dict(_require(data, "integrator", source), "integrator")
        _check_keys(integ, {"start", "horizon", "dt", "path_count", "master_seed",
                            "stiffness_cap", "stopping"}, "integrator")
        start = _require(integ, "start", "integrator")
        if not isinstance(start, list) or len(start) != d:
            raise ConfigError(f"must be a list of {d} coordinates",
                              location="integrator.start")
        self.start = tuple(float(c) for c in start)
        self.horizon = float(_require(integ, "horizon", "integrator"))
        self.dt = float(_require(integ, "dt", "integrator"))
        count = _require(integ, "path_count", "integrator")
        if not isinstance(count, int) or isinstance(count, bool) or count < 1:
            raise ConfigError("must be an integer >= 1", location="integrator.path_count")
        self.path_count = count
        seed = _require(integ, "master_seed", "integrator")
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < _MAX_SEED:
            raise ConfigError("must be an integer in [0, 2^64)",
                              location="integrator.master_seed")
        self.master_seed = seed
        cap = integ.get("stiffness_cap")
        if cap is not None:
            cap = float(cap)
            if not cap > 0:
                raise ConfigError("must be positive when given",
                                  location="integrator.stiffness_cap")
        self.stiffness_cap = cap
        stop_cfg = integ.get("stopping")
        if stop_cfg is None:
            self.stopping = StoppingRegion()
            norm_stop = None
        else:
            stop_cfg = _expect_dict(stop_cfg, "integrator.stopping")
            _kind_of(stop_cfg, _STOPPING_KEYS, "integrator.stopping")
            try:
                self.stopping = stopping_from_config(stop_cfg)
            except (ReflectSimError, ValueError, KeyError, TypeError) as e:
                raise ConfigError(str(e) or repr(e), location="integrator.stopping") from e
            norm_stop = self.stopping.to_config()
        norm["integrator"] = {"start": list(self.start), "horizon": self.horizon,
                              "dt": self.dt, "path_count": self.path_count,
                              "master_seed": self.master_seed,
                              "stiffness_cap": self.stiffness_cap,
                              "stopping": norm_stop}

        # --- reference -------------------------------------------------
        ref_cfg = data.get("reference") or {}
        ref_cfg = _expect_dict(ref_cfg, "reference")
        _check_keys(ref_cfg, {"kind", "dt", "path_count"}, "reference")
        requested = ref_cfg.get("kind", "auto")
        if requested not in ("auto", "skorokhod", "projection"):
            raise ConfigError(
                "'kind' must be one of ['auto', 'projection', 'skorokhod'], "
                f"got {requested!r}", location="reference.kind")
        ref_dt = ref_cfg.get("dt")
        self.reference_dt = self.dt if ref_dt is None else float(ref_dt)
        if not 0 < self.reference_dt < self.horizon:
            raise ConfigError("must satisfy 0 < dt < horizon", location="reference.dt")
        rcount = ref_cfg.get("path_count")
        if rcount is None:
            rcount = self.path_count
        if not isinstance(rcount, int) or isinstance(rcount, bool) or rcount < 1:
            raise ConfigError("must be an integer >= 1", location="reference.path_count")
        self.reference_count = rcount
        self.requested_reference = requested
        norm["reference"] = {"kind": requested, "dt": self.reference_dt,
                             "path_count": self.reference_count}

        # --- diagnostics -----------------------------------------------
        diag = data.get("diagnostics") or {}
        diag = _expect_dict(diag, "diagnostics")
        _check_keys(diag, {"eta", "radial_center"}, "diagnostics")
        self.eta = float(diag.get("eta", 0.1))
        if not self.eta > 0:
            raise ConfigError("must be positive", location="diagnostics.eta")
        center = diag.get("radial_center")
        if center is None and not isinstance(self.domain, HalfSpace):
            center = list(getattr(self.domain, "center", ()))
            center = [float(c) for c in center] if center else None
        if center is not None:
            if not isinstance(center, list) or len(center) != d:
                raise ConfigError(f"must be null or a list of {d} coordinates",
                                  location="diagnostics.radial_center")
            center = [float(c) for c in center]
        self.radial_center = center
        norm["diagnostics"] = {"eta": self.eta, "radial_center": center}

        # --- output ----------------------------------------------------
        out = data.get("output_dir", "results")
        if not isinstance(out, str) or not out:
            raise ConfigError("must be a nonempty string", location="output_dir")
        self.output_dir = out
        norm["output_dir"] = out

        self._norm = norm
        # Trial build: surfaces remaining cross-module precondition
        # violations (start point outside, dt >= horizon, ...) now.
        self.build_model_spec(self.n_grid[0] if self.n_grid else None)

    # -- alternate constructors ----------------------------------------
    @classmethod
    def from_text(cls, text: str, source: str = "config") -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e.msg}",
                              location=f"{source}:{e.lineno}:{e.colno}") from e
        return cls(raw, source=source)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}", location=str(p)) from e
        return cls.from_text(text, source=p.name)

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        return copy.deepcopy(self._norm)

    def to_json(self) -> str:
        return json.dumps(self._norm, indent=2, sort_keys=True) + "\n"

    def with_master_seed(self, seed: int) -> "ExperimentConfig":
        if not 0 <= int(seed) < _MAX_SEED:
            raise ConfigError("must be an integer in [0, 2^64)",
                              location="integrator.master_seed")
        raw = self.to_dict()
        raw["integrator"]["master_seed"] = int(seed)
        return ExperimentConfig(raw)

    def __eq__(self, other) -> bool:
        return isinstance(other, ExperimentConfig) and self._norm == other._norm

    # -- builders --------------------------------------------------------
    def build_penalty(self, n: int):
        """The drift field at level n (projection family has its own form)."""
        if self.family is None:
            raise ConfigError("this experiment has no penalty section",
                              location="penalty")
        if self.family.to_config().get("kind") == "projection":
            return ProjectionDriftField(n, self.reflection)
        kwargs = {} if self.cutoff is None else {"cutoff": self.cutoff}
        return PenaltyField(self.family, n, self.reflection, **kwargs)

    def build_model_spec(self, n: int | None) -> ModelSpec:
        penalty = None if n is None else self.build_penalty(n)
        return ModelSpec(domain=self.domain, coefficients=self.coefficients,
                         penalty=penalty, z0=self.start, horizon=self.horizon,
                         dt=self.dt, stopping=self.stopping,
                         stiffness_cap=self.stiffness_cap)

    # -- reference resolution -------------------------------------------
    @property
    def reference_kind(self) -> str:
        """The reference simulator this experiment would run against.

        Resolution is deferred to first use: certification and trajectory
        runs never need a reference, so a setup with none available (an
        oblique direction on a curved domain) must still parse; only a
        convergence run may refuse it.
        """
        return self._resolve_reference(self.requested_reference)

    def _resolve_reference(self, requested: str) -> str:
        flat = isinstance(self.domain, HalfSpace)
        const_coeff = self.coefficients.kind == "constant"
        const_dir = self.reflection.constant_over_boundary
        normal = self.reflection.kind == "normal"
        if requested == "skorokhod":
            if not flat:
                raise IncompatibleReferenceError(
                    "the Skorokhod-map reference exists only on a half-space; "
                    "use the projection reference for curved domains",
                    location="reference.kind")
            if not const_coeff:
                raise IncompatibleReferenceError(
                    "the Skorokhod-map reference requires constant coefficients",
                    location="reference.kind")
            if not const_dir:
                raise IncompatibleReferenceError(
                    "the Skorokhod-map reference requires a constant reflection "
                    "direction", location="reference.kind")
            return "skorokhod"
        if requested == "projection":
            if not normal:
                raise IncompatibleReferenceError(
                    "the projection reference realizes normal reflection only; "
                    "an oblique direction has no implemented reference",
                    location="reference.kind")
            return "projection"
        # auto
        if flat and const_coeff and const_dir:
            return "skorokhod"
        if normal:
            return "projection"
        raise IncompatibleReferenceError(
            "no reference exists for an oblique direction outside the "
            "constant-coefficient half-space setting", location="reference.kind")
