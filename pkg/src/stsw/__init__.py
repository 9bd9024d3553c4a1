"""Spherical tree-sliced Wasserstein distance on S^d."""

from .estimator import StswConfig, StswResult, merge_measures, stsw, stsw_with_trees
from .flow import FlowConfig, FlowResult, VmfMixture, run_flow, stsw_grad, target_12vmf
from .ot_oracle import exact_w1_tree, exact_w2_sphere, finite_diff_gradient, network_simplex, solve_assignment
from .sphere import (
    AT_INFINITY,
    DiscreteMeasure,
    OrthogonalTransform,
    geodesic_distance,
    load_point_cloud,
    random_orthogonal,
    sample_uniform_sphere,
    sample_vmf,
    save_point_cloud,
    stereographic_project,
    unit_vector,
)
from .splitting import SplitWeights, alpha, beta
from .tree_wasserstein import ProjectedPair, project_pair, tw_closed_form, tw_on_explicit_tree
from .trees import SphericalTree, TreePoint, sample_tree, sample_trees, tree_metric

__version__ = "0.1.0"

__all__ = [
    "AT_INFINITY",
    "DiscreteMeasure",
    "FlowConfig",
    "FlowResult",
    "OrthogonalTransform",
    "ProjectedPair",
    "SphericalTree",
    "SplitWeights",
    "StswConfig",
    "StswResult",
    "TreePoint",
    "VmfMixture",
    "alpha",
    "beta",
    "exact_w1_tree",
    "exact_w2_sphere",
    "finite_diff_gradient",
    "geodesic_distance",
    "load_point_cloud",
    "merge_measures",
    "network_simplex",
    "project_pair",
    "random_orthogonal",
    "run_flow",
    "sample_tree",
    "sample_trees",
    "sample_uniform_sphere",
    "sample_vmf",
    "save_point_cloud",
    "solve_assignment",
    "stereographic_project",
    "stsw",
    "stsw_grad",
    "stsw_with_trees",
    "target_12vmf",
    "tree_metric",
    "tw_closed_form",
    "tw_on_explicit_tree",
    "unit_vector",
]
