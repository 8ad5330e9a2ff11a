"""Estimation of within-cohort trends of a state variable on a year x age
lattice from repeated cross-sectional survey data.

The pipeline: ingest measurements, assemble a penalized weighted
least-squares system (second-difference smoothing of the level and trend
surfaces), tune the penalty weights to smoothness targets, fit, and compare
mean trends between adjacent year x age clusters with F tests.
"""

__version__ = "0.1.0"

from .design import (
    LinearSystem,
    SparseRow,
    build_b0_aggregated,
    build_b0_raw,
    build_penalty_u,
    build_penalty_v,
    build_system_aggregated,
    build_system_raw,
    build_u2uc,
    build_z2u,
    build_z2v,
    observation_row,
)
from .errors import CtrendError
from .grid import CellIndex, Frame, ParameterLayout, cohort_path, flatten_surface
from .inference import ClusterGrid, ComparisonResult, cluster_means, compare_adjacent, f_cdf
from .ingest import (
    AggregatedCell,
    Measurement,
    ValidationReport,
    aggregate,
    derive_age_year,
    derive_bmi,
    load_measurements,
)
from .solver import FitResult, check_uniqueness, solve
from .synth import SamplingPlan, TrueModel, full_coverage_plan, generate, survey_plan, true_level
from .tuner import (
    SmoothnessReport,
    SmoothnessTargets,
    fstat,
    smoothness_field,
    smoothness_vector,
    tune,
)

__all__ = [
    "AggregatedCell",
    "CellIndex",
    "ClusterGrid",
    "ComparisonResult",
    "CtrendError",
    "FitResult",
    "Frame",
    "LinearSystem",
    "Measurement",
    "ParameterLayout",
    "SamplingPlan",
    "SmoothnessReport",
    "SmoothnessTargets",
    "SparseRow",
    "TrueModel",
    "ValidationReport",
    "aggregate",
    "build_b0_aggregated",
    "build_b0_raw",
    "build_penalty_u",
    "build_penalty_v",
    "build_system_aggregated",
    "build_system_raw",
    "build_u2uc",
    "build_z2u",
    "build_z2v",
    "check_uniqueness",
    "cluster_means",
    "cohort_path",
    "compare_adjacent",
    "derive_age_year",
    "derive_bmi",
    "f_cdf",
    "flatten_surface",
    "fstat",
    "full_coverage_plan",
    "generate",
    "load_measurements",
    "observation_row",
    "smoothness_field",
    "smoothness_vector",
    "solve",
    "survey_plan",
    "true_level",
    "tune",
]
