"""Manifold-barycentric oversampling of landmark point clouds."""

__version__ = "0.1.0"

from .measures import Dataset, PointCloud, make_uniform_cloud, validate_dataset  # noqa: E402
from .ot import DistanceMatrix, pairwise_matrix, w2_exact, w2_sinkhorn  # noqa: E402
from .graph import CliqueComplex, NeighborhoodGraph, cknn_graph, knn_graph, maximal_cliques  # noqa: E402
from .barycenter import free_support_barycenter, ordered_barycenter, sample_dirichlet  # noqa: E402
from .sampler import AugmentationConfig, augment, clique_probabilities, geometric_augment  # noqa: E402
from .evaluate import knn_kl, meta_w2, verify_covering_bound  # noqa: E402

__all__ = [
    "Dataset", "PointCloud", "make_uniform_cloud", "validate_dataset",
    "DistanceMatrix", "pairwise_matrix", "w2_exact", "w2_sinkhorn",
    "CliqueComplex", "NeighborhoodGraph", "cknn_graph", "knn_graph", "maximal_cliques",
    "free_support_barycenter", "ordered_barycenter", "sample_dirichlet",
    "AugmentationConfig", "augment", "clique_probabilities", "geometric_augment",
    "knn_kl", "meta_w2", "verify_covering_bound",
]
