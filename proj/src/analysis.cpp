#include "ori/analysis.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "ori/errors.hpp"

namespace ori::analysis {

std::uint64_t BenchmarkDistribution::cluster_size(std::size_t k) const {
  if (k >= counts.size()) throw ValidationError("cluster index out of range");
  std::uint64_t total = 0;
  for (std::uint64_t c : counts[k]) total += c;
  return total;
}

BenchmarkDistribution count_distribution(
    std::span<const std::pair<std::size_t, BenchmarkId>> records, std::size_t k,
    std::vector<BenchmarkId> benchmarks) {
  if (k == 0) throw ValidationError("count_distribution: k must be >= 1");
  std::map<BenchmarkId, std::size_t> column;
  for (std::size_t j = 0; j < benchmarks.size(); ++j) {
    if (!column.emplace(benchmarks[j], j).second) {
      throw ValidationError("count_distribution: duplicate benchmark " + benchmarks[j].name());
    }
  }
  BenchmarkDistribution dist;
  dist.benchmarks = std::move(benchmarks);
  dist.counts.assign(k, std::vector<std::uint64_t>(dist.benchmarks.size(), 0));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& [cluster, bench] = records[i];
    if (cluster >= k) {
      std::ostringstream msg;
      msg << "count_distribution: record " << i << " has cluster " << cluster
          << ", expected < " << k;
      throw ValidationError(msg.str());
    }
    auto it = column.find(bench);
    if (it == column.end()) {
      throw ValidationError("count_distribution: record " + std::to_string(i) +
                            " names undeclared benchmark " + bench.name());
    }
    ++dist.counts[cluster][it->second];
  }
  return dist;
}

ClusterProfile proportions(const BenchmarkDistribution& dist) {
  const std::size_t k = dist.cluster_count();
  const std::size_t b = dist.benchmarks.size();
  ClusterProfile profile;
  profile.proportions.assign(k, std::vector<double>(b, 0.0));
  profile.empty.assign(k, false);
  profile.dominant.assign(k, std::nullopt);
  profile.dominant_share.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const std::uint64_t total = dist.cluster_size(c);
    if (total == 0) {
      profile.empty[c] = true;
      continue;
    }
    for (std::size_t j = 0; j < b; ++j) {
      profile.proportions[c][j] =
          static_cast<double>(dist.counts[c][j]) / static_cast<double>(total);
    }
    const BenchmarkId dom = dominant_benchmark(dist, c);
    profile.dominant[c] = dom;
    for (std::size_t j = 0; j < b; ++j) {
      if (dist.benchmarks[j] == dom) {
        profile.dominant_share[c] = profile.proportions[c][j];
        break;
      }
    }
  }
  return profile;
}

BenchmarkId dominant_benchmark(const BenchmarkDistribution& dist, std::size_t cluster) {
  if (cluster >= dist.cluster_count()) {
    throw ValidationError("dominant_benchmark: cluster index out of range");
  }
  const auto& row = dist.counts[cluster];
  std::size_t best = dist.benchmarks.size();
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] == 0) continue;
    if (best == dist.benchmarks.size() || row[j] > row[best] ||
        (row[j] == row[best] && dist.benchmarks[j] < dist.benchmarks[best])) {
      best = j;
    }
  }
  if (best == dist.benchmarks.size()) {
    throw ValidationError("dominant_benchmark: cluster " + std::to_string(cluster) +
                          " is empty");
  }
  return dist.benchmarks[best];
}

ClusterBenchmarkMap build_cluster_benchmark_map(const BenchmarkDistribution& dist) {
  ClusterBenchmarkMap map;
  for (std::size_t c = 0; c < dist.cluster_count(); ++c) {
    if (dist.cluster_size(c) == 0) {
      map.empty_clusters.push_back(c);
    } else {
      map.dominant.emplace(c, dominant_benchmark(dist, c));
    }
  }
  if (map.dominant.empty()) {
    throw ValidationError("build_cluster_benchmark_map: every cluster is empty");
  }
  return map;
}

std::vector<std::size_t> weakly_dominated_clusters(const ClusterProfile& profile,
                                                   double min_share) {
  std::vector<std::size_t> weak;
  for (std::size_t c = 0; c < profile.dominant_share.size(); ++c) {
    if (profile.empty[c]) continue;
    if (profile.dominant_share[c] < min_share) weak.push_back(c);
  }
  return weak;
}

void write_profile_csv(std::ostream& out, const BenchmarkDistribution& dist) {
  const ClusterProfile profile = proportions(dist);
  out << "cluster,benchmark,count,proportion,dominant\n";
  std::ostringstream line;
  line << std::setprecision(17);
  for (std::size_t c = 0; c < dist.cluster_count(); ++c) {
    for (std::size_t j = 0; j < dist.benchmarks.size(); ++j) {
      line.str("");
      const bool dominant =
          profile.dominant[c].has_value() && *profile.dominant[c] == dist.benchmarks[j];
      line << c << "," << dist.benchmarks[j].name() << "," << dist.counts[c][j] << ","
           << profile.proportions[c][j] << "," << (dominant ? "true" : "false") << "\n";
      out << line.str();
    }
  }
}

}  // namespace ori::analysis
