#include "ori/router.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ori/analysis.hpp"
#include "ori/errors.hpp"
#include "ori/rng.hpp"
#include "ori/text.hpp"

namespace ori::router {

namespace {

using nlohmann::json;

[[noreturn]] void fail_stage(const std::string& stage, const std::string& what) {
  throw ValidationError("train_router[" + stage + "]: " + what);
}

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    fail_stage(stage, e.what());
  }
}

void check_finite(const std::vector<double>& v, const std::string& what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw ValidationError(what + ": non-finite entry");
  }
}

// Silhouette of the fitted clustering, on a seeded subsample past the cap.
double training_silhouette(std::span<const clustering::Point> points,
                           const clustering::CentroidModel& model, std::uint64_t seed,
                           std::size_t cap) {
  if (model.k < 2 || points.size() <= model.k) return 0.0;
  std::vector<std::size_t> sample(points.size());
  std::iota(sample.begin(), sample.end(), std::size_t{0});
  if (cap > 0 && points.size() > cap) {
    rng::SplitMix64 rng(rng::tagged_seed(seed, "silhouette-subsample"));
    for (std::size_t i = 0; i < cap; ++i) {
      const std::size_t j = i + rng.next_below(sample.size() - i);
      std::swap(sample[i], sample[j]);
    }
    sample.resize(cap);
    std::sort(sample.begin(), sample.end());
  }
  std::vector<clustering::Point> sub;
  sub.reserve(sample.size());
  std::vector<std::size_t> labels;
  labels.reserve(sample.size());
  std::set<std::size_t> distinct;
  for (std::size_t i : sample) {
    sub.push_back(points[i]);
    labels.push_back(clustering::assign_nearest_centroid(points[i], model));
    distinct.insert(labels.back());
  }
  if (distinct.size() < 2) return 0.0;
  return clustering::silhouette_score(sub, labels).mean;
}

// Shared decision logic once the embedding is known.
RoutingDecision decide(const RouterArtifact& artifact, const registry::Registry& registry,
                       const clustering::Point& x, std::string prompt_id) {
  RoutingDecision decision;
  decision.prompt_id = std::move(prompt_id);
  decision.cluster = clustering::assign_nearest_centroid(x, artifact.centroid_model);
  decision.distance =
      std::sqrt(clustering::squared_distance(x, artifact.centroid_model.centroids[decision.cluster]));

  auto mapped = artifact.cluster_to_benchmark.find(decision.cluster);
  if (mapped != artifact.cluster_to_benchmark.end()) {
    decision.benchmark = mapped->second;
    auto model_it = artifact.benchmark_to_model.find(mapped->second);
    if (model_it != artifact.benchmark_to_model.end()) {
      const registry::ModelCard* card = registry.find(model_it->second);
      if (card != nullptr && card->enabled) {
        decision.model_id = card->model_id;
        return decision;
      }
    }
  }
  auto fallback = registry.best_average_model();
  if (!fallback) throw ValidationError("route: registry has no enabled scored model");
  decision.model_id = *fallback;
  decision.fallback_used = true;
  return decision;
}

std::string default_prompt_id(std::string_view text) {
  return text::hex64(text::fnv1a64(text));
}

json fingerprint_to_json(const embedding::EmbedderFingerprint& fp) {
  return {{"provider", fp.provider}, {"model", fp.model}, {"dim", fp.dim}};
}

}  // namespace

RouterArtifact train_router(const std::vector<corpus::PromptRecord>& records,
                            embedding::Provider& provider, const registry::Registry& registry,
                            const TrainOptions& options, embedding::EmbeddingCache* cache,
                            TrainDiagnostics* diagnostics) {
  run_stage("leakage-check", [&] {
    if (records.empty()) throw ValidationError("empty training corpus");
    for (const auto& rec : records) {
      if (rec.split == corpus::Split::test) {
        throw ValidationError("record " + rec.id + " carries split=test");
      }
    }
    if (registry.size() == 0) throw ValidationError("registry is empty");
    return 0;
  });

  std::vector<std::string> texts;
  texts.reserve(records.size());
  for (const auto& rec : records) texts.push_back(rec.text);

  std::vector<clustering::Point> points = run_stage("embed", [&] {
    return embedding::embed_batch(provider, texts, cache);
  });

  const std::size_t k = run_stage("cluster-count", [&]() -> std::size_t {
    if (options.k) {
      if (*options.k == 0) throw ValidationError("k must be >= 1");
      if (*options.k > points.size()) {
        throw ValidationError("k=" + std::to_string(*options.k) + " exceeds corpus size " +
                              std::to_string(points.size()));
      }
      return *options.k;
    }
    clustering::SweepOptions sweep_options;
    sweep_options.silhouette_cap = options.silhouette_cap;
    clustering::SweepResult sweep =
        clustering::sweep_k(points, options.k_range, options.seed, sweep_options);
    const std::size_t best = sweep.best_k;
    if (diagnostics != nullptr) diagnostics->sweep = std::move(sweep);
    return best;
  });

  clustering::CentroidModel model = run_stage("kmeans", [&] {
    return clustering::kmeans_fit(points, k, options.seed, options.kmeans);
  });

  const double silhouette = run_stage("silhouette", [&] {
    return training_silhouette(points, model, options.seed, options.silhouette_cap);
  });

  analysis::BenchmarkDistribution dist = run_stage("distribution", [&] {
    std::set<BenchmarkId> seen;
    for (const auto& rec : records) seen.insert(rec.benchmark);
    std::vector<std::pair<std::size_t, BenchmarkId>> pairs;
    pairs.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      pairs.emplace_back(clustering::assign_nearest_centroid(points[i], model),
                         records[i].benchmark);
    }
    if (diagnostics != nullptr) {
      diagnostics->labels.clear();
      diagnostics->labels.reserve(pairs.size());
      for (const auto& [cluster, bench] : pairs) diagnostics->labels.push_back(cluster);
    }
    return analysis::count_distribution(pairs, k,
                                        std::vector<BenchmarkId>(seen.begin(), seen.end()));
  });

  analysis::ClusterBenchmarkMap cluster_map = run_stage("benchmark-map", [&] {
    return analysis::build_cluster_benchmark_map(dist);
  });

  std::map<BenchmarkId, std::string> model_map = run_stage("model-map", [&] {
    std::map<BenchmarkId, std::string> out;
    std::vector<std::string> unmapped;
    for (const auto& [cluster, bench] : cluster_map.dominant) {
      if (out.count(bench) != 0) continue;
      try {
        out.emplace(bench, registry.best_model_for_benchmark(bench).model_id);
      } catch (const Error&) {
        unmapped.push_back(bench.name());
      }
    }
    if (!unmapped.empty()) {
      std::sort(unmapped.begin(), unmapped.end());
      unmapped.erase(std::unique(unmapped.begin(), unmapped.end()), unmapped.end());
      std::string joined;
      for (const auto& name : unmapped) {
        if (!joined.empty()) joined += ", ";
        joined += name;
      }
      throw ValidationError("no enabled scored model for benchmark(s): " + joined);
    }
    return out;
  });

  if (diagnostics != nullptr) {
    diagnostics->distribution = dist;
    diagnostics->embeddings = points;
  }

  RouterArtifact artifact;
  artifact.version = kArtifactVersion;
  artifact.fingerprint = provider.fingerprint();
  artifact.centroid_model = std::move(model);
  artifact.cluster_to_benchmark =
      std::map<std::size_t, BenchmarkId>(cluster_map.dominant.begin(), cluster_map.dominant.end());
  artifact.benchmark_to_model = std::move(model_map);
  artifact.meta.corpus_hash = corpus::corpus_hash(records);
  artifact.meta.seed = options.seed;
  artifact.meta.silhouette_mean = silhouette;
  artifact.meta.inertia = artifact.centroid_model.inertia;
  artifact.meta.training_size = records.size();
  if (options.store_embeddings) {
    artifact.training_embeddings = std::move(points);
    artifact.training_benchmarks.reserve(records.size());
    for (const auto& rec : records) artifact.training_benchmarks.push_back(rec.benchmark);
  }
  return artifact;
}

RoutingDecision route(const RouterArtifact& artifact, const registry::Registry& registry,
                      std::string_view prompt_text, embedding::Provider& provider) {
  if (prompt_text.empty()) throw ValidationError("route: empty prompt text");
  const auto fp = provider.fingerprint();
  if (fp != artifact.fingerprint) {
    throw ValidationError("route: embedder " + fp.to_string() +
                          " does not match artifact fingerprint " +
                          artifact.fingerprint.to_string());
  }
  return decide(artifact, registry, provider.embed(prompt_text),
                default_prompt_id(prompt_text));
}

std::vector<RoutingDecision> route_batch(const RouterArtifact& artifact,
                                         const registry::Registry& registry,
                                         std::span<const std::string> prompts,
                                         embedding::Provider& provider,
                                         embedding::EmbeddingCache* cache) {
  const auto fp = provider.fingerprint();
  if (fp != artifact.fingerprint) {
    throw ValidationError("route_batch: embedder " + fp.to_string() +
                          " does not match artifact fingerprint " +
                          artifact.fingerprint.to_string());
  }
  std::vector<clustering::Point> points = embedding::embed_batch(provider, prompts, cache);
  std::vector<RoutingDecision> decisions;
  decisions.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    decisions.push_back(decide(artifact, registry, points[i], default_prompt_id(prompts[i])));
  }
  return decisions;
}

RoutingDecision knn_route(const RouterArtifact& artifact, const registry::Registry& registry,
                          std::string_view prompt_text, embedding::Provider& provider,
                          std::size_t k_neighbors) {
  if (prompt_text.empty()) throw ValidationError("knn_route: empty prompt text");
  if (k_neighbors == 0) throw ValidationError("knn_route: k_neighbors must be >= 1");
  if (artifact.training_embeddings.empty()) {
    throw ValidationError("knn_route: artifact lacks stored training embeddings");
  }
  const auto fp = provider.fingerprint();
  if (fp != artifact.fingerprint) {
    throw ValidationError("knn_route: embedder " + fp.to_string() +
                          " does not match artifact fingerprint " +
                          artifact.fingerprint.to_string());
  }
  const clustering::Point x = provider.embed(prompt_text);

  const std::size_t n = artifact.training_embeddings.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = clustering::euclidean_distance(x, artifact.training_embeddings[i]);
  }
  const std::size_t k = std::min(k_neighbors, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&d](std::size_t a, std::size_t b) {
                      return d[a] != d[b] ? d[a] < d[b] : a < b;
                    });

  struct Tally {
    std::size_t votes = 0;
    double distance_sum = 0.0;
  };
  std::map<BenchmarkId, Tally> tallies;
  for (std::size_t i = 0; i < k; ++i) {
    Tally& t = tallies[artifact.training_benchmarks[order[i]]];
    ++t.votes;
    t.distance_sum += d[order[i]];
  }
  const BenchmarkId* winner = nullptr;
  double winner_mean = 0.0;
  for (const auto& [bench, tally] : tallies) {  // map order: final tie -> smallest name
    const double mean = tally.distance_sum / static_cast<double>(tally.votes);
    const bool better =
        winner == nullptr || tally.votes > tallies.at(*winner).votes ||
        (tally.votes == tallies.at(*winner).votes && mean < winner_mean);
    if (better) {
      winner = &bench;
      winner_mean = mean;
    }
  }

  RoutingDecision decision;
  decision.prompt_id = default_prompt_id(prompt_text);
  decision.cluster = clustering::assign_nearest_centroid(x, artifact.centroid_model);
  decision.distance = std::sqrt(
      clustering::squared_distance(x, artifact.centroid_model.centroids[decision.cluster]));
  decision.benchmark = *winner;

  auto model_it = artifact.benchmark_to_model.find(*winner);
  if (model_it != artifact.benchmark_to_model.end()) {
    const registry::ModelCard* card = registry.find(model_it->second);
    if (card != nullptr && card->enabled) {
      decision.model_id = card->model_id;
      return decision;
    }
  }
  auto fallback = registry.best_average_model();
  if (!fallback) throw ValidationError("knn_route: registry has no enabled scored model");
  decision.model_id = *fallback;
  decision.fallback_used = true;
  return decision;
}

std::string RouterArtifact::to_json() const {
  json j;
  j["version"] = version;
  j["fingerprint"] = fingerprint_to_json(fingerprint);
  json centroids = json::array();
  for (const auto& c : centroid_model.centroids) centroids.push_back(c);
  j["kmeans"] = {{"k", centroid_model.k},
                 {"dim", fingerprint.dim},
                 {"centroids", std::move(centroids)}};
  json cluster_map = json::object();
  for (const auto& [cluster, bench] : cluster_to_benchmark) {
    cluster_map[std::to_string(cluster)] = bench.name();
  }
  j["cluster_map"] = std::move(cluster_map);
  json model_map = json::object();
  for (const auto& [bench, model] : benchmark_to_model) model_map[bench.name()] = model;
  j["model_map"] = std::move(model_map);
  j["meta"] = {{"corpus_hash", meta.corpus_hash},
               {"seed", meta.seed},
               {"silhouette_mean", meta.silhouette_mean},
               {"inertia", meta.inertia},
               {"training_size", meta.training_size}};
  if (!training_embeddings.empty()) {
    json embeddings = json::array();
    for (const auto& e : training_embeddings) embeddings.push_back(e);
    json benchmarks = json::array();
    for (const auto& b : training_benchmarks) benchmarks.push_back(b.name());
    j["training"] = {{"embeddings", std::move(embeddings)},
                     {"benchmarks", std::move(benchmarks)}};
  }
  return j.dump() + "\n";
}

RouterArtifact RouterArtifact::from_json(std::string_view json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("artifact: not a JSON object");

  RouterArtifact artifact;
  try {
    if (!j.contains("version") || !j["version"].is_number_integer()) {
      throw ParseError("artifact: missing version");
    }
    artifact.version = j["version"].get<int>();
    if (artifact.version != kArtifactVersion) {
      throw ValidationError("artifact: unsupported version " + std::to_string(artifact.version) +
                            " (this build reads " + std::to_string(kArtifactVersion) + ")");
    }

    const json& fp = j.at("fingerprint");
    artifact.fingerprint.provider = fp.at("provider").get<std::string>();
    artifact.fingerprint.model = fp.at("model").get<std::string>();
    artifact.fingerprint.dim = fp.at("dim").get<std::size_t>();
    if (artifact.fingerprint.dim == 0) {
      throw ValidationError("artifact: fingerprint dim must be positive");
    }

    const json& kmeans = j.at("kmeans");
    artifact.centroid_model.k = kmeans.at("k").get<std::size_t>();
    const std::size_t dim = kmeans.at("dim").get<std::size_t>();
    if (dim != artifact.fingerprint.dim) {
      std::ostringstream msg;
      msg << "artifact: fingerprint dim " << artifact.fingerprint.dim
          << " does not match centroid dim " << dim;
      throw ValidationError(msg.str());
    }
    const json& centroids = kmeans.at("centroids");
    if (!centroids.is_array() || centroids.size() != artifact.centroid_model.k ||
        artifact.centroid_model.k == 0) {
      throw ValidationError("artifact: centroid count disagrees with k");
    }
    for (const auto& c : centroids) {
      auto vec = c.get<std::vector<double>>();
      if (vec.size() != dim) {
        throw ValidationError("artifact: centroid dim disagrees with declared dim");
      }
      check_finite(vec, "artifact centroid");
      artifact.centroid_model.centroids.push_back(std::move(vec));
    }

    for (const auto& [key, value] : j.at("cluster_map").items()) {
      std::size_t pos = 0;
      std::size_t cluster = 0;
      try {
        cluster = std::stoull(key, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != key.size() || key.empty()) {
        throw ValidationError("artifact: cluster_map key '" + key + "' is not an index");
      }
      if (cluster >= artifact.centroid_model.k) {
        throw ValidationError("artifact: cluster_map key " + key + " out of range");
      }
      artifact.cluster_to_benchmark.emplace(cluster, BenchmarkId(value.get<std::string>()));
    }

    for (const auto& [bench, model] : j.at("model_map").items()) {
      const std::string model_id = model.get<std::string>();
      if (model_id.empty()) throw ValidationError("artifact: empty model id in model_map");
      artifact.benchmark_to_model.emplace(BenchmarkId(bench), model_id);
    }
    for (const auto& [cluster, bench] : artifact.cluster_to_benchmark) {
      if (artifact.benchmark_to_model.count(bench) == 0) {
        throw ValidationError("artifact: cluster " + std::to_string(cluster) +
                              " maps to benchmark " + bench.name() +
                              " with no model assignment");
      }
    }

    const json& meta = j.at("meta");
    artifact.meta.corpus_hash = meta.at("corpus_hash").get<std::string>();
    artifact.meta.seed = meta.at("seed").get<std::uint64_t>();
    artifact.meta.silhouette_mean = meta.at("silhouette_mean").get<double>();
    artifact.meta.inertia = meta.at("inertia").get<double>();
    artifact.meta.training_size = meta.at("training_size").get<std::size_t>();
    if (!std::isfinite(artifact.meta.silhouette_mean) ||
        !std::isfinite(artifact.meta.inertia) || artifact.meta.inertia < 0.0) {
      throw ValidationError("artifact: meta statistics out of range");
    }
    artifact.centroid_model.seed = artifact.meta.seed;
    artifact.centroid_model.inertia = artifact.meta.inertia;

    if (j.contains("training")) {
      const json& training = j.at("training");
      const json& embeddings = training.at("embeddings");
      const json& benchmarks = training.at("benchmarks");
      if (!embeddings.is_array() || !benchmarks.is_array() ||
          embeddings.size() != benchmarks.size() || embeddings.empty()) {
        throw ValidationError("artifact: training embeddings and benchmarks disagree");
      }
      for (const auto& e : embeddings) {
        auto vec = e.get<std::vector<double>>();
        if (vec.size() != dim) {
          throw ValidationError("artifact: training embedding dim disagrees");
        }
        check_finite(vec, "artifact training embedding");
        artifact.training_embeddings.push_back(std::move(vec));
      }
      for (const auto& b : benchmarks) {
        artifact.training_benchmarks.emplace_back(b.get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("artifact: ") + e.what());
  }
  return artifact;
}

std::string decision_to_json(const RoutingDecision& decision) {
  json j;
  j["prompt_id"] = decision.prompt_id;
  j["cluster"] = decision.cluster;
  if (decision.benchmark) {
    j["benchmark"] = decision.benchmark->name();
  } else {
    j["benchmark"] = nullptr;
  }
  j["model_id"] = decision.model_id;
  j["distance"] = decision.distance;
  j["fallback_used"] = decision.fallback_used;
  return j.dump();
}

void save_artifact(const RouterArtifact& artifact, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out << artifact.to_json();
    if (!out.flush()) throw ValidationError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

RouterArtifact load_artifact(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open artifact: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return RouterArtifact::from_json(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace ori::router
