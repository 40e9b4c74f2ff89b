"""Breath-VOC diabetes screening toolkit.

Causal effect estimation with placebo refutation, a causally weighted
composite marker, cross-validated risk ranking with gray-zone detection,
Shapley attribution and Gaussian-mixture stratification, all checked against
a linear-Gaussian structural causal model with known ground truth.
"""

__version__ = "0.1.0"

from .attribution import Attribution, shapley_linear, shapley_sample, summarize
from .causal import (
    CausalEstimate,
    CausalQuery,
    EstimationError,
    estimate_ate,
    estimate_joint,
    estimate_reverse,
    refute_placebo,
    sensitivity,
)
from .cluster import EMError, ari, fit_gmm, nmi, pca_project, select_k, silhouette
from .data_model import AnalysisView, DataError, Dataset, RoleConfig, build_view, load_dataset
from .marker import MarkerSpec, compare_groups, evaluate_marker, marker_from_report
from .risk import LeakageError, ModelSpec, cross_validate, gray_zone, risk_rank, train
from .scm import ScmConfig, demo_config, grayzone_config, simulate, true_ate
from .stats_core import logistic_fit, mann_whitney_u, ols_fit, permutation_test

__all__ = [
    "AnalysisView",
    "Attribution",
    "CausalEstimate",
    "CausalQuery",
    "DataError",
    "Dataset",
    "EMError",
    "EstimationError",
    "LeakageError",
    "MarkerSpec",
    "ModelSpec",
    "RoleConfig",
    "ScmConfig",
    "ari",
    "build_view",
    "compare_groups",
    "cross_validate",
    "demo_config",
    "estimate_ate",
    "estimate_joint",
    "estimate_reverse",
    "evaluate_marker",
    "fit_gmm",
    "gray_zone",
    "grayzone_config",
    "load_dataset",
    "logistic_fit",
    "mann_whitney_u",
    "marker_from_report",
    "nmi",
    "ols_fit",
    "pca_project",
    "permutation_test",
    "refute_placebo",
    "risk_rank",
    "select_k",
    "sensitivity",
    "shapley_linear",
    "shapley_sample",
    "silhouette",
    "simulate",
    "summarize",
    "train",
    "true_ate",
]
