"""Angle-pruned proximity graphs (exact SSG and navigating NSSG) for Euclidean k-NN search."""
from .dataset import (
    as_dataset,
    checksum,
    gaussian_mixture,
    load_fvecs,
    load_ivecs,
    save_fvecs,
    save_ivecs,
    split_train_validation,
    squared_euclidean,
)
from .errors import ContractViolation, FormatError, SSGError, ValidationError
from .graph import AdjacencyGraph
from .knn import KnnGraph, exact_knn_graph, knn_accuracy, nn_descent
from .nssg import (
    ExactCandidates,
    KnnCandidates,
    NssgIndex,
    SearchCandidates,
    build_nssg,
    deserialize,
    serialize,
)
from .oracle import GroundTruth, ground_truth, unindexed_monotonic_rate, verify_monotonic
from .search import SearchStats, search_batch, search_on_graph, sharded_build, sharded_search
from .ssg import AngleParam, build_ssg_exact, edge_overlap, truncate

__version__ = "0.1.0"
