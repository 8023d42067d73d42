#include "ori/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ori/errors.hpp"
#include "ori/rng.hpp"
#include "ori/text.hpp"

namespace ori::clustering {

namespace {

std::size_t checked_dim(std::span<const Point> points, const char* who) {
  if (points.empty()) throw ValidationError(std::string(who) + ": empty input");
  const std::size_t dim = points.front().size();
  if (dim == 0) throw ValidationError(std::string(who) + ": zero-dimensional input");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != dim) {
      std::ostringstream msg;
      msg << who << ": point " << i << " has dim " << points[i].size() << ", expected " << dim;
      throw ValidationError(msg.str());
    }
  }
  return dim;
}

std::vector<std::size_t> assign_all(std::span<const Point> points,
                                    const std::vector<Point>& centroids) {
  std::vector<std::size_t> labels(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::size_t best = 0;
    double best_d = squared_distance(points[i], centroids[0]);
    for (std::size_t c = 1; c < centroids.size(); ++c) {
      const double d = squared_distance(points[i], centroids[c]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    labels[i] = best;
  }
  return labels;
}

double total_inertia(std::span<const Point> points, const std::vector<Point>& centroids,
                     const std::vector<std::size_t>& labels) {
  double sum = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    sum += squared_distance(points[i], centroids[labels[i]]);
  }
  return sum;
}

// k-means++: first seed uniform, then each next seed drawn with probability
// proportional to the squared distance to the nearest chosen seed.
std::vector<Point> plus_plus_init(std::span<const Point> points, std::size_t k,
                                  rng::SplitMix64& rng) {
  const std::size_t n = points.size();
  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  chosen.push_back(rng.next_below(n));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], points[chosen[0]]);

  while (chosen.size() < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = n;  // sentinel
    if (total > 0.0) {
      const double r = rng.next_unit() * total;
      double cum = 0.0;
      std::size_t last_positive = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        last_positive = i;
        cum += d2[i];
        if (cum > r) {
          pick = i;
          break;
        }
      }
      if (pick == n) pick = last_positive;  // fp underflow at the tail
    }
    if (pick == n) {
      // All remaining points coincide with a seed; take the smallest unused index.
      for (std::size_t i = 0; i < n; ++i) {
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) {
          pick = i;
          break;
        }
      }
    }
    chosen.push_back(pick);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], points[pick]));
    }
  }
  std::vector<Point> centroids;
  centroids.reserve(k);
  for (std::size_t c : chosen) centroids.push_back(points[c]);
  return centroids;
}

// Shared silhouette accumulation; Dist is (i, j) -> Euclidean distance.
template <typename Dist>
SilhouetteResult silhouette_impl(std::size_t n, std::span<const std::size_t> labels,
                                 Dist&& dist) {
  // Densify labels so cluster sizes index a flat vector.
  std::vector<std::size_t> dense(n);
  std::vector<std::size_t> sizes;
  {
    std::map<std::size_t, std::size_t> to_dense;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] = to_dense.emplace(labels[i], to_dense.size());
      dense[i] = it->second;
    }
    sizes.assign(to_dense.size(), 0);
    for (std::size_t d : dense) ++sizes[d];
  }
  if (sizes.size() < 2) {
    throw ValidationError("silhouette_score requires at least 2 distinct labels");
  }

  SilhouetteResult result;
  result.per_point.resize(n, 0.0);
  std::vector<double> sum_by_cluster(sizes.size());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t own = dense[i];
    if (sizes[own] == 1) {
      result.per_point[i] = 0.0;  // singleton convention
      continue;
    }
    std::fill(sum_by_cluster.begin(), sum_by_cluster.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sum_by_cluster[dense[j]] += dist(i, j);
    }
    const double a = sum_by_cluster[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sizes.size(); ++c) {
      if (c == own || sizes[c] == 0) continue;
      b = std::min(b, sum_by_cluster[c] / static_cast<double>(sizes[c]));
    }
    const double denom = std::max(a, b);
    const double s = denom > 0.0 ? (b - a) / denom : 0.0;
    result.per_point[i] = s;
    total += s;
  }
  result.mean = total / static_cast<double>(n);
  return result;
}

}  // namespace

double squared_distance(const Point& a, const Point& b) {
  if (a.size() != b.size()) {
    std::ostringstream msg;
    msg << "dimension mismatch: " << a.size() << " vs " << b.size();
    throw ValidationError(msg.str());
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

double euclidean_distance(const Point& a, const Point& b) {
  return std::sqrt(squared_distance(a, b));
}

CentroidModel kmeans_fit(std::span<const Point> points, std::size_t k, std::uint64_t seed,
                         const KMeansOptions& options) {
  if (k == 0) throw ValidationError("kmeans_fit: k must be >= 1");
  const std::size_t dim = checked_dim(points, "kmeans_fit");
  const std::size_t n = points.size();
  if (n < k) {
    std::ostringstream msg;
    msg << "kmeans_fit: " << n << " points cannot form " << k << " clusters";
    throw ValidationError(msg.str());
  }

  rng::SplitMix64 rng(seed);
  std::vector<Point> centroids = plus_plus_init(points, k, rng);
  std::vector<std::size_t> labels = assign_all(points, centroids);

  CentroidModel model;
  model.k = k;
  model.seed = seed;
  model.inertia_trace.push_back(total_inertia(points, centroids, labels));

  std::vector<Point> sums(k, Point(dim, 0.0));
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
    for (auto& s : sums) std::fill(s.begin(), s.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = labels[i];
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
    }

    // Repair empty clusters by stealing the point farthest from its (updated)
    // mean out of a cluster that can spare one. With n >= k a donor with two
    // or more members always exists.
    for (std::size_t e = 0; e < k; ++e) {
      if (counts[e] != 0) continue;
      std::size_t steal = n;
      double steal_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = labels[i];
        if (counts[c] < 2) continue;
        double d = 0.0;
        const double inv = 1.0 / static_cast<double>(counts[c]);
        for (std::size_t dd = 0; dd < dim; ++dd) {
          const double delta = points[i][dd] - sums[c][dd] * inv;
          d += delta * delta;
        }
        if (d > steal_d) {
          steal_d = d;
          steal = i;
        }
      }
      if (steal == n) throw std::logic_error("kmeans_fit: no donor for empty cluster");
      const std::size_t from = labels[steal];
      --counts[from];
      ++counts[e];
      for (std::size_t dd = 0; dd < dim; ++dd) {
        sums[from][dd] -= points[steal][dd];
        sums[e][dd] += points[steal][dd];
      }
      labels[steal] = e;
    }

    double max_shift_sq = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double inv = 1.0 / static_cast<double>(counts[c]);
      double shift_sq = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double next = sums[c][d] * inv;
        const double delta = next - centroids[c][d];
        shift_sq += delta * delta;
        centroids[c][d] = next;
      }
      max_shift_sq = std::max(max_shift_sq, shift_sq);
    }

    labels = assign_all(points, centroids);
    const double inertia = total_inertia(points, centroids, labels);
    const double prev = model.inertia_trace.back();
    if (inertia > prev * (1.0 + 1e-12) + 1e-12) {
      throw std::logic_error("kmeans_fit: inertia increased across an iteration");
    }
    model.inertia_trace.push_back(inertia);
    model.iterations_run = iter + 1;
    const double shift = std::sqrt(max_shift_sq);
    if (shift < options.tol || shift == 0.0) break;
  }

  model.centroids = std::move(centroids);
  model.inertia = model.inertia_trace.back();
  return model;
}

std::size_t assign_nearest_centroid(const Point& x, const CentroidModel& model) {
  if (model.centroids.empty()) throw ValidationError("assign_nearest_centroid: empty model");
  if (x.size() != model.centroids.front().size()) {
    std::ostringstream msg;
    msg << "assign_nearest_centroid: point dim " << x.size() << " vs centroid dim "
        << model.centroids.front().size();
    throw ValidationError(msg.str());
  }
  std::size_t best = 0;
  double best_d = squared_distance(x, model.centroids[0]);
  for (std::size_t c = 1; c < model.centroids.size(); ++c) {
    const double d = squared_distance(x, model.centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

SilhouetteResult silhouette_score(std::span<const Point> points,
                                  std::span<const std::size_t> labels) {
  checked_dim(points, "silhouette_score");
  if (labels.size() != points.size()) {
    throw ValidationError("silhouette_score: labels not aligned with points");
  }
  return silhouette_impl(points.size(), labels, [points](std::size_t i, std::size_t j) {
    return euclidean_distance(points[i], points[j]);
  });
}

SweepResult sweep_k(std::span<const Point> points, KRange k_range, std::uint64_t seed,
                    const SweepOptions& options) {
  if (k_range.min < 2) throw ValidationError("sweep_k: k_range.min must be >= 2");
  if (k_range.max < k_range.min) throw ValidationError("sweep_k: empty k range");
  checked_dim(points, "sweep_k");
  const std::size_t n = points.size();
  if (n <= k_range.max) {
    std::ostringstream msg;
    msg << "sweep_k: need more than " << k_range.max << " points, got " << n;
    throw ValidationError(msg.str());
  }

  SweepResult result;
  result.silhouette_cap = options.silhouette_cap;
  result.seed = seed;

  // Silhouette is O(n^2); score on a seeded subsample when n exceeds the cap.
  std::vector<std::size_t> sample(n);
  std::iota(sample.begin(), sample.end(), std::size_t{0});
  if (options.silhouette_cap > 0 && n > options.silhouette_cap) {
    rng::SplitMix64 rng(rng::tagged_seed(seed, "silhouette-subsample"));
    for (std::size_t i = 0; i < options.silhouette_cap; ++i) {
      const std::size_t j = i + rng.next_below(n - i);
      std::swap(sample[i], sample[j]);
    }
    sample.resize(options.silhouette_cap);
    std::sort(sample.begin(), sample.end());
  }
  const std::size_t m = sample.size();

  // One pairwise-distance matrix serves every k; skip it when it would not fit.
  std::vector<double> dist;
  const bool use_matrix = m <= 8192;
  if (use_matrix) {
    dist.assign(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        const double d = euclidean_distance(points[sample[i]], points[sample[j]]);
        dist[i * m + j] = d;
        dist[j * m + i] = d;
      }
    }
  }

  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = k_range.min; k <= k_range.max; ++k) {
    CentroidModel model;
    try {
      model = kmeans_fit(points, k, seed);
    } catch (const Error& e) {
      throw ValidationError("sweep_k: k=" + std::to_string(k) + ": " + e.what());
    }
    std::vector<std::size_t> sub_labels(m);
    std::set<std::size_t> distinct;
    for (std::size_t i = 0; i < m; ++i) {
      sub_labels[i] = assign_nearest_centroid(points[sample[i]], model);
      distinct.insert(sub_labels[i]);
    }
    double score = 0.0;  // a subsample collapsed into one cluster scores neutral
    if (distinct.size() >= 2) {
      if (use_matrix) {
        score = silhouette_impl(m, sub_labels, [&dist, m](std::size_t i, std::size_t j) {
                  return dist[i * m + j];
                }).mean;
      } else {
        score = silhouette_impl(m, sub_labels, [&points, &sample](std::size_t i, std::size_t j) {
                  return euclidean_distance(points[sample[i]], points[sample[j]]);
                }).mean;
      }
    }
    result.scores[k] = score;
    if (score > best_score) {
      best_score = score;
      result.best_k = k;
    }
  }
  return result;
}

AgglomerativeResult agglomerative_fit(std::span<const Point> points, std::size_t k) {
  if (k == 0) throw ValidationError("agglomerative_fit: k must be >= 1");
  checked_dim(points, "agglomerative_fit");
  const std::size_t n = points.size();
  if (n < k) {
    std::ostringstream msg;
    msg << "agglomerative_fit: " << n << " points cannot form " << k << " clusters";
    throw ValidationError(msg.str());
  }

  AgglomerativeResult result;
  result.tree.leaf_count = n;
  result.tree.merges.reserve(n - 1);

  // Slot i carries the cluster whose smallest leaf is i; merges fold the
  // larger slot into the smaller, so a lexicographic scan realizes the
  // smallest-pair tie rule.
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = euclidean_distance(points[i], points[j]);
      dist[i * n + j] = d;
      dist[j * n + i] = d;
    }
  }
  std::vector<bool> active(n, true);
  std::vector<std::size_t> cluster_id(n);
  std::iota(cluster_id.begin(), cluster_id.end(), std::size_t{0});
  std::vector<std::size_t> sizes(n, 1);
  std::vector<std::pair<std::size_t, std::size_t>> merged_slots;
  merged_slots.reserve(n - 1);

  double prev_distance = 0.0;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t bi = n, bj = n;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        if (dist[i * n + j] < best) {
          best = dist[i * n + j];
          bi = i;
          bj = j;
        }
      }
    }
    if (best + 1e-9 * std::max(1.0, prev_distance) < prev_distance) {
      throw std::logic_error("agglomerative_fit: merge distances decreased");
    }
    prev_distance = std::max(prev_distance, best);

    result.tree.merges.push_back({cluster_id[bi], cluster_id[bj], best});
    merged_slots.emplace_back(bi, bj);

    const double wi = static_cast<double>(sizes[bi]);
    const double wj = static_cast<double>(sizes[bj]);
    for (std::size_t h = 0; h < n; ++h) {
      if (!active[h] || h == bi || h == bj) continue;
      const double d = (wi * dist[bi * n + h] + wj * dist[bj * n + h]) / (wi + wj);
      dist[bi * n + h] = d;
      dist[h * n + bi] = d;
    }
    sizes[bi] += sizes[bj];
    active[bj] = false;
    cluster_id[bi] = n + step;
  }

  // Cut: union the first n-k merges, then number roots by first occurrence.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&parent](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (std::size_t t = 0; t + k < n; ++t) {
    const auto [a, b] = merged_slots[t];
    parent[find(b)] = find(a);
  }
  result.labels.resize(n);
  std::map<std::size_t, std::size_t> numbering;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = find(i);
    auto [it, inserted] = numbering.emplace(root, numbering.size());
    result.labels[i] = it->second;
  }
  return result;
}

namespace {

// Cyclic Jacobi eigensolver for a symmetric matrix (row-major d x d). Returns
// eigenvalues in `values`; `vectors` holds eigenvectors as columns.
void jacobi_eigen(std::vector<double>& a, std::size_t d, std::vector<double>& values,
                  std::vector<double>& vectors) {
  vectors.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) vectors[i * d + i] = 1.0;

  double scale = 0.0;
  for (std::size_t i = 0; i < d; ++i) scale = std::max(scale, std::abs(a[i * d + i]));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) scale = std::max(scale, std::abs(a[i * d + j]));
  }
  const double eps = std::max(scale, 1.0) * 1e-15;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i + 1; j < d; ++j) off += a[i * d + j] * a[i * d + j];
    }
    if (std::sqrt(off) <= eps) break;

    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (std::abs(apq) <= eps * 1e-3) continue;
        const double app = a[p * d + p];
        const double aqq = a[q * d + q];
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        a[p * d + p] = app - t * apq;
        a[q * d + q] = aqq + t * apq;
        a[p * d + q] = 0.0;
        a[q * d + p] = 0.0;
        for (std::size_t h = 0; h < d; ++h) {
          if (h == p || h == q) continue;
          const double ahp = a[h * d + p];
          const double ahq = a[h * d + q];
          a[h * d + p] = c * ahp - s * ahq;
          a[p * d + h] = a[h * d + p];
          a[h * d + q] = s * ahp + c * ahq;
          a[q * d + h] = a[h * d + q];
        }
        for (std::size_t h = 0; h < d; ++h) {
          const double vhp = vectors[h * d + p];
          const double vhq = vectors[h * d + q];
          vectors[h * d + p] = c * vhp - s * vhq;
          vectors[h * d + q] = s * vhp + c * vhq;
        }
      }
    }
  }
  values.resize(d);
  for (std::size_t i = 0; i < d; ++i) values[i] = a[i * d + i];
}

}  // namespace

std::vector<std::array<double, 2>> pca_project_2d(std::span<const Point> points) {
  const std::size_t dim = checked_dim(points, "pca_project_2d");
  const std::size_t n = points.size();
  if (n < 2) throw ValidationError("pca_project_2d: need at least 2 points");
  if (dim < 2) throw ValidationError("pca_project_2d: need dim >= 2");

  Point mean(dim, 0.0);
  for (const Point& p : points) {
    for (std::size_t d = 0; d < dim; ++d) mean[d] += p[d];
  }
  for (double& v : mean) v /= static_cast<double>(n);

  std::vector<Point> centered(n, Point(dim));
  double total_var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      centered[i][d] = points[i][d] - mean[d];
      total_var += centered[i][d] * centered[i][d];
    }
  }
  std::vector<std::array<double, 2>> out(n, {0.0, 0.0});
  if (total_var <= 1e-30) return out;  // all points identical

  std::vector<double> cov(dim * dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < dim; ++p) {
      const double v = centered[i][p];
      if (v == 0.0) continue;
      for (std::size_t q = p; q < dim; ++q) cov[p * dim + q] += v * centered[i][q];
    }
  }
  const double inv = 1.0 / static_cast<double>(n - 1);
  for (std::size_t p = 0; p < dim; ++p) {
    for (std::size_t q = p; q < dim; ++q) {
      cov[p * dim + q] *= inv;
      cov[q * dim + p] = cov[p * dim + q];
    }
  }

  std::vector<double> values;
  std::vector<double> vectors;
  jacobi_eigen(cov, dim, values, vectors);

  std::vector<std::size_t> order(dim);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&values](std::size_t a, std::size_t b) { return values[a] > values[b]; });

  std::array<std::vector<double>, 2> axes;
  for (std::size_t comp = 0; comp < 2; ++comp) {
    const std::size_t col = order[comp];
    std::vector<double> axis(dim);
    for (std::size_t d = 0; d < dim; ++d) axis[d] = vectors[d * dim + col];
    std::size_t arg = 0;
    for (std::size_t d = 1; d < dim; ++d) {
      if (std::abs(axis[d]) > std::abs(axis[arg])) arg = d;
    }
    if (axis[arg] < 0.0) {
      for (double& v : axis) v = -v;
    }
    axes[comp] = std::move(axis);
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t comp = 0; comp < 2; ++comp) {
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) dot += centered[i][d] * axes[comp][d];
      out[i][comp] = dot;
    }
  }
  return out;
}

}  // namespace ori::clustering
