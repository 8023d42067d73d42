#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "ori/benchmark.hpp"

namespace ori::analysis {

/// Cluster x benchmark count matrix D[k][j].
struct BenchmarkDistribution {
  std::vector<BenchmarkId> benchmarks;               // column order
  std::vector<std::vector<std::uint64_t>> counts;    // K rows
  std::size_t cluster_count() const { return counts.size(); }
  std::uint64_t cluster_size(std::size_t k) const;
};

/// Row-normalized proportions plus dominance diagnostics.
struct ClusterProfile {
  std::vector<std::vector<double>> proportions;      // p[k][j], zero rows when empty
  std::vector<bool> empty;                           // per cluster
  std::vector<std::optional<BenchmarkId>> dominant;  // unset for empty clusters
  std::vector<double> dominant_share;                // 0 for empty clusters
};

/// Exact counting of (cluster, benchmark) pairs into a K x |benchmarks|
/// matrix. Labels outside [0, K) or benchmarks missing from the declared set
/// are errors; empty clusters are fine (all-zero rows).
BenchmarkDistribution count_distribution(
    std::span<const std::pair<std::size_t, BenchmarkId>> records, std::size_t k,
    std::vector<BenchmarkId> benchmarks);

/// p[k][j] = D[k][j] / sum_l D[k][l]; empty rows stay all-zero and are flagged.
ClusterProfile proportions(const BenchmarkDistribution& dist);

/// Most frequent benchmark of a non-empty cluster; count ties break by
/// benchmark-name lexicographic order. Empty cluster is an error.
BenchmarkId dominant_benchmark(const BenchmarkDistribution& dist, std::size_t cluster);

struct ClusterBenchmarkMap {
  std::map<std::size_t, BenchmarkId> dominant;  // one entry per non-empty cluster
  std::vector<std::size_t> empty_clusters;      // omitted from the map
};

/// Dominant benchmark per non-empty cluster. All-empty input is an error.
ClusterBenchmarkMap build_cluster_benchmark_map(const BenchmarkDistribution& dist);

/// Clusters whose dominant share falls below the warning threshold.
std::vector<std::size_t> weakly_dominated_clusters(const ClusterProfile& profile,
                                                   double min_share = 0.4);

/// CSV report: cluster,benchmark,count,proportion,dominant.
void write_profile_csv(std::ostream& out, const BenchmarkDistribution& dist);

}  // namespace ori::analysis
