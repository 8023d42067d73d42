#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ori/analysis.hpp"
#include "ori/benchmark.hpp"
#include "ori/clustering.hpp"
#include "ori/corpus.hpp"
#include "ori/embedding.hpp"
#include "ori/registry.hpp"

namespace ori::router {

inline constexpr int kArtifactVersion = 1;

struct RouterMeta {
  std::string corpus_hash;
  std::uint64_t seed = 0;
  double silhouette_mean = 0.0;  // 0 when k == 1 (silhouette undefined)
  double inertia = 0.0;
  std::size_t training_size = 0;
};

/// The persisted trained state: centroids plus the cluster -> benchmark ->
/// model maps, guarded by the embedder fingerprint. Immutable after load.
struct RouterArtifact {
  int version = kArtifactVersion;
  embedding::EmbedderFingerprint fingerprint;
  clustering::CentroidModel centroid_model;
  std::map<std::size_t, BenchmarkId> cluster_to_benchmark;  // non-empty clusters only
  std::map<BenchmarkId, std::string> benchmark_to_model;
  RouterMeta meta;

  /// Present only when trained with store_embeddings (enables knn_route).
  std::vector<clustering::Point> training_embeddings;
  std::vector<BenchmarkId> training_benchmarks;

  std::string to_json() const;
  static RouterArtifact from_json(std::string_view json_text);
};

struct RoutingDecision {
  std::string prompt_id;
  std::size_t cluster = 0;
  std::optional<BenchmarkId> benchmark;  // unset when an unmapped cluster fell back
  std::string model_id;
  double distance = 0.0;  // Euclidean distance to the chosen centroid
  bool fallback_used = false;
};

struct TrainOptions {
  std::optional<std::size_t> k;         // fixed cluster count; wins over k_range
  clustering::KRange k_range{2, 30};    // swept when k is unset
  std::uint64_t seed = 0;
  bool store_embeddings = false;        // keep training vectors for knn_route
  std::size_t silhouette_cap = 5000;
  clustering::KMeansOptions kmeans;
};

/// Intermediate training state, captured on request for reports and CSVs.
struct TrainDiagnostics {
  std::optional<clustering::SweepResult> sweep;  // present when k was swept
  analysis::BenchmarkDistribution distribution;
  std::vector<std::size_t> labels;               // fitted cluster per record
  std::vector<clustering::Point> embeddings;     // record order
};

/// Trains the routing artifact: embed -> (sweep_k | fixed k) -> kmeans_fit ->
/// count_distribution -> build_cluster_benchmark_map -> best model per mapped
/// benchmark. Every stage error is prefixed with its stage name. Records with
/// split=test are rejected before any fitting.
RouterArtifact train_router(const std::vector<corpus::PromptRecord>& records,
                            embedding::Provider& provider, const registry::Registry& registry,
                            const TrainOptions& options,
                            embedding::EmbeddingCache* cache = nullptr,
                            TrainDiagnostics* diagnostics = nullptr);

/// Routes one prompt: embed, nearest centroid (ties -> smallest index),
/// dominant benchmark of that cluster, registry's best enabled model for it.
/// Unmapped clusters and disabled/missing models fall back to the registry's
/// best-average enabled model with fallback_used set.
RoutingDecision route(const RouterArtifact& artifact, const registry::Registry& registry,
                      std::string_view prompt_text, embedding::Provider& provider);

/// Batch form of route; always emits exactly one decision per prompt.
std::vector<RoutingDecision> route_batch(const RouterArtifact& artifact,
                                         const registry::Registry& registry,
                                         std::span<const std::string> prompts,
                                         embedding::Provider& provider,
                                         embedding::EmbeddingCache* cache = nullptr);

/// Alternate mode per the k-nearest-neighbors reading: majority benchmark of
/// the k nearest stored training embeddings (ties -> smaller mean distance,
/// then lexicographic), then model selection as in route. Requires an artifact
/// trained with store_embeddings.
RoutingDecision knn_route(const RouterArtifact& artifact, const registry::Registry& registry,
                          std::string_view prompt_text, embedding::Provider& provider,
                          std::size_t k_neighbors);

/// Canonical JSON envelope; load validates version, dimensions, finiteness and
/// map consistency. Round-trips are bit-exact.
void save_artifact(const RouterArtifact& artifact, const std::filesystem::path& path);
RouterArtifact load_artifact(const std::filesystem::path& path);

/// One-line JSON form of a decision (the /v1/route and `route` CLI payload).
std::string decision_to_json(const RoutingDecision& decision);

}  // namespace ori::router
