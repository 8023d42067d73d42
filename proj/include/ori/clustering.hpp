#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace ori::clustering {

using Point = std::vector<double>;

/// Trained K-Means state.
struct CentroidModel {
  std::size_t k = 0;
  std::vector<Point> centroids;
  double inertia = 0.0;  // sum of squared distances to assigned centroids
  std::uint64_t seed = 0;
  std::size_t iterations_run = 0;
  /// Inertia after the initial assignment and after each Lloyd iteration.
  /// Non-increasing; asserted during fitting.
  std::vector<double> inertia_trace;
};

struct KMeansOptions {
  std::size_t max_iter = 300;
  double tol = 1e-6;  // stop when the max centroid displacement falls below
};

/// Lloyd's algorithm with k-means++ initialization. Deterministic for fixed
/// (points, k, seed). Empty clusters are repaired by reseeding to the point
/// farthest from its assigned centroid.
CentroidModel kmeans_fit(std::span<const Point> points, std::size_t k,
                         std::uint64_t seed, const KMeansOptions& options = {});

/// argmin_k ||x - mu_k||^2; exact ties go to the smallest index.
std::size_t assign_nearest_centroid(const Point& x, const CentroidModel& model);

struct SilhouetteResult {
  std::vector<double> per_point;
  double mean = 0.0;
};

/// s(i) = (b(i) - a(i)) / max{a(i), b(i)} with s(i) = 0 for singleton
/// clusters. Requires at least two distinct labels.
SilhouetteResult silhouette_score(std::span<const Point> points,
                                  std::span<const std::size_t> labels);

struct KRange {
  std::size_t min = 2;
  std::size_t max = 30;
};

struct SweepOptions {
  /// Points above this count are silhouette-scored on a seeded subsample.
  std::size_t silhouette_cap = 5000;
};

struct SweepResult {
  std::map<std::size_t, double> scores;  // k -> silhouette mean
  std::size_t best_k = 0;                // argmax; ties -> smallest k
  std::size_t silhouette_cap = 0;
  std::uint64_t seed = 0;
};

/// Fits K-Means for every k in the inclusive range and scores each clustering
/// by mean silhouette. Requires k_range.min >= 2 and n > k_range.max.
SweepResult sweep_k(std::span<const Point> points, KRange k_range,
                    std::uint64_t seed, const SweepOptions& options = {});

/// Full merge history of an agglomerative clustering. Leaves are 0..n-1 and
/// merge step t creates cluster id n+t (so exactly n-1 merges).
struct LinkageTree {
  struct Merge {
    std::size_t a = 0;
    std::size_t b = 0;
    double distance = 0.0;
  };
  std::vector<Merge> merges;
  std::size_t leaf_count = 0;
};

struct AgglomerativeResult {
  std::vector<std::size_t> labels;  // tree cut to k clusters
  LinkageTree tree;
};

/// Average-linkage Euclidean hierarchy, cut to k clusters. Deterministic: tied
/// merges pick the pair whose clusters carry the smallest leaf indices. Cut
/// labels are numbered by first occurrence over point index.
AgglomerativeResult agglomerative_fit(std::span<const Point> points, std::size_t k);

/// Mean-centered projection onto the top-2 principal directions. Sign is fixed
/// by making each component's largest-magnitude loading positive. All-identical
/// input projects to all zeros.
std::vector<std::array<double, 2>> pca_project_2d(std::span<const Point> points);

double squared_distance(const Point& a, const Point& b);
double euclidean_distance(const Point& a, const Point& b);

}  // namespace ori::clustering
