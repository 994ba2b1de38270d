"""Exact k-NN classification over an external feature-vector knowledge store.

Knowledge (feature vectors, labels, provenance) lives in a store, not in
model parameters: classification is cosine-distance retrieval plus majority
vote, continual learning is ingestion, and false knowledge is corrected by
deleting or relabeling records, with every inference audit-logged.
"""

from .classify import (
    AuditLog,
    AuditLogEntry,
    AuditNeighbor,
    ClassificationResult,
    ExplainedEntry,
    VoteTally,
    classify,
    classify_batch,
    explain,
)
from .errors import (
    CorruptionError,
    EncoderUnavailableError,
    FormatError,
    InvalidArgumentError,
    KnnStoreError,
    NotFoundError,
    ReadOnlyError,
    UnknownVersionError,
)
from .estimator import KnnStoreClassifier
from .formats import (
    RawRecord,
    ingest_feature_file,
    load_store,
    read_feature_file,
    read_text_records,
    save_store,
    snapshot_nbytes,
    write_feature_file,
)
from .harness import (
    EvalReport,
    IncrementalProtocol,
    LabeledExample,
    LabeledQuerySet,
    SyntheticSpec,
    accuracy_vs_store_size,
    benchmark_distance_scan,
    build_store,
    cross_validate_k,
    evaluate,
    generate_synthetic,
    run_elimination_experiment,
    run_incremental,
)
from .search import Neighbor, QueryVector, SearchFilter, batch_search, cosine_distance, search_topk
from .store import FeatureRecord, KnowledgeStore, LabelVocabulary

__version__ = "0.1.0"

__all__ = [
    "AuditLog",
    "AuditLogEntry",
    "AuditNeighbor",
    "ClassificationResult",
    "CorruptionError",
    "EncoderUnavailableError",
    "EvalReport",
    "ExplainedEntry",
    "FeatureRecord",
    "FormatError",
    "IncrementalProtocol",
    "InvalidArgumentError",
    "KnnStoreClassifier",
    "KnnStoreError",
    "KnowledgeStore",
    "LabelVocabulary",
    "LabeledExample",
    "LabeledQuerySet",
    "Neighbor",
    "NotFoundError",
    "QueryVector",
    "RawRecord",
    "ReadOnlyError",
    "SearchFilter",
    "SyntheticSpec",
    "UnknownVersionError",
    "VoteTally",
    "accuracy_vs_store_size",
    "batch_search",
    "benchmark_distance_scan",
    "build_store",
    "classify",
    "classify_batch",
    "cosine_distance",
    "cross_validate_k",
    "evaluate",
    "explain",
    "generate_synthetic",
    "ingest_feature_file",
    "load_store",
    "read_feature_file",
    "read_text_records",
    "run_elimination_experiment",
    "run_incremental",
    "save_store",
    "search_topk",
    "snapshot_nbytes",
    "write_feature_file",
]
