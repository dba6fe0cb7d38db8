"""Monte Carlo engine for reflected diffusions via penalized drift.

A reflected diffusion in a smooth domain is approximated by an ordinary
SDE whose drift acquires a large inward push near the boundary.  The
package provides the domains, coefficient and reflection fields, penalty
schedules, the stiffness-aware Euler integrator, trusted reference
simulators, and the diagnostics that turn ensembles into convergence
evidence.
"""

from .config import ExperimentConfig
from .diagnostics import (ConvergenceRow, convergence_table, ks_distance,
                          ks_null_band, ks_stderr, modulus_of_continuity,
                          monotone_within, wasserstein1_1d)
from .errors import (CoarseStepError, ConfigError, DimensionMismatchError,
                     IncompatibleReferenceError, InvalidReflectionError,
                     NonUniqueProjectionError, NotOnBoundaryError,
                     OutsideValidityError, ReflectSimError)
from .fields import (AffineCoefficients, ConstantCoefficients, ReflectionField,
                     constant_reflection, normal_reflection,
                     tangential_reflection)
from .geometry import Annulus, Ball, Domain, Ellipsoid, HalfSpace
from .integrator import (Ensemble, ModelSpec, PathRecord, StoppingRegion,
                         simulate_batch, simulate_path)
from .penalty import (ConstantFamily, ExponentialFamily, PenaltyField,
                      ProjectionDriftField, ProjectionFamily, ScaledBumpFamily,
                      SingularityReport, boundary_floor, emulation_defect,
                      singularity_report)
from .reference import (ReferenceEnsemble, ReflectedPathRecord,
                        halfspace_oblique_rbm, halfspace_oblique_rbm_batch,
                        projection_scheme, projection_scheme_batch,
                        skorokhod_halfline)
from .runner import run_certify, run_convergence, run_paths

__version__ = "0.1.0"

__all__ = [
    "AffineCoefficients", "Annulus", "Ball", "CoarseStepError", "ConfigError",
    "ConstantCoefficients", "ConstantFamily", "ConvergenceRow",
    "DimensionMismatchError", "Domain", "Ellipsoid", "Ensemble",
    "ExperimentConfig", "ExponentialFamily", "HalfSpace",
    "IncompatibleReferenceError", "InvalidReflectionError", "ModelSpec",
    "NonUniqueProjectionError", "NotOnBoundaryError", "OutsideValidityError",
    "PathRecord", "PenaltyField", "ProjectionDriftField", "ProjectionFamily",
    "ReferenceEnsemble", "ReflectSimError", "ReflectedPathRecord",
    "ReflectionField", "ScaledBumpFamily", "SingularityReport",
    "StoppingRegion", "boundary_floor", "constant_reflection",
    "convergence_table", "emulation_defect", "halfspace_oblique_rbm",
    "halfspace_oblique_rbm_batch", "ks_distance", "ks_null_band", "ks_stderr",
    "modulus_of_continuity", "monotone_within", "normal_reflection",
    "projection_scheme", "projection_scheme_batch", "run_certify",
    "run_convergence", "run_paths", "simulate_batch", "simulate_path",
    "singularity_report", "skorokhod_halfline", "tangential_reflection",
    "wasserstein1_1d",
]
