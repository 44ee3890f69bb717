"""Graph ANN index with a conjugate graph learned from construction and search logs."""

from .conjugate import (
    ConjugateGraph,
    GenParams,
    Provenance,
    SearchLogEntry,
    enhanced_search,
    finalize_construction_log,
    generate_query,
    update_from_logs,
)
from .dataset import (
    IngestionError,
    Metric,
    VectorDataset,
    dataset_abs_mean,
    distance,
    generate_noisy_queries,
    load_vectors,
)
from .graph import BuildParams, ConstructionLog, ProximityGraph, PruneRule, SearchOutcome, build, greedy_search, prune
from .oracle import exact_knn, global_optimum, ground_truth, recall_at_k

__all__ = [
    "BuildParams",
    "ConjugateGraph",
    "ConstructionLog",
    "GenParams",
    "IngestionError",
    "Metric",
    "Provenance",
    "ProximityGraph",
    "PruneRule",
    "SearchLogEntry",
    "SearchOutcome",
    "VectorDataset",
    "build",
    "dataset_abs_mean",
    "distance",
    "enhanced_search",
    "exact_knn",
    "finalize_construction_log",
    "generate_noisy_queries",
    "generate_query",
    "global_optimum",
    "greedy_search",
    "ground_truth",
    "load_vectors",
    "prune",
    "recall_at_k",
    "update_from_logs",
]
