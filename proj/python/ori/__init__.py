"""Cluster-based prompt routing: train on benchmark corpora, route by nearest
centroid, dispatch to the best model per benchmark."""

from ._core import (
    BenchmarkId,
    CentroidModel,
    EmbedderFingerprint,
    ModelCard,
    OriError,
    ParseError,
    PromptRecord,
    Registry,
    RouterArtifact,
    RoutingDecision,
    TestEmbedder,
    TransportError,
    ValidationError,
    agglomerative_fit,
    assign_nearest_centroid,
    collapse_whitespace,
    corpus_hash,
    dominant_benchmark,
    eval_exact_match,
    eval_multiple_choice,
    fnv1a64,
    grader_for,
    kmeans_fit,
    knn_route,
    load_artifact,
    load_corpus_file,
    normalize_for_match,
    normalize_prompt,
    pca_project_2d,
    preprocess,
    proportionate_sample,
    resolve_benchmark_alias,
    route,
    save_artifact,
    save_corpus_file,
    silhouette_score,
    sweep_k,
    test_embed,
    train_router,
)

__all__ = [
    "BenchmarkId",
    "CentroidModel",
    "EmbedderFingerprint",
    "ModelCard",
    "OriError",
    "ParseError",
    "PromptRecord",
    "Registry",
    "RouterArtifact",
    "RoutingDecision",
    "TestEmbedder",
    "TransportError",
    "ValidationError",
    "agglomerative_fit",
    "assign_nearest_centroid",
    "collapse_whitespace",
    "corpus_hash",
    "dominant_benchmark",
    "eval_exact_match",
    "eval_multiple_choice",
    "fnv1a64",
    "grader_for",
    "kmeans_fit",
    "knn_route",
    "load_artifact",
    "load_corpus_file",
    "normalize_for_match",
    "normalize_prompt",
    "pca_project_2d",
    "preprocess",
    "proportionate_sample",
    "resolve_benchmark_alias",
    "route",
    "save_artifact",
    "save_corpus_file",
    "silhouette_score",
    "sweep_k",
    "test_embed",
    "train_router",
]
