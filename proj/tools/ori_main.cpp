#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ori/analysis.hpp"
#include "ori/clustering.hpp"
#include "ori/corpus.hpp"
#include "ori/embedding.hpp"
#include "ori/errors.hpp"
#include "ori/eval.hpp"
#include "ori/gateway.hpp"
#include "ori/registry.hpp"
#include "ori/router.hpp"

namespace {

using namespace ori;

struct EmbedderFlags {
  std::string provider = "test";
  std::size_t dim = 384;
  std::string url;
  std::string model;
  std::string file;
  std::string cache;
};

void add_embedder_flags(CLI::App* cmd, EmbedderFlags& flags) {
  cmd->add_option("--embedder", flags.provider, "Embedding provider: test | http | file")
      ->check(CLI::IsMember({"test", "http", "file"}));
  cmd->add_option("--dim", flags.dim, "Embedding dimension (test/http providers)");
  cmd->add_option("--embedder-url", flags.url, "HTTP embedding endpoint URL");
  cmd->add_option("--embedder-model", flags.model, "Model name sent to the HTTP embedder");
  cmd->add_option("--embedder-file", flags.file, "Precomputed embedding file");
  cmd->add_option("--cache", flags.cache, "Persistent embedding cache path");
}

std::unique_ptr<embedding::Provider> make_provider(const EmbedderFlags& flags) {
  if (flags.provider == "test") return std::make_unique<embedding::TestEmbedder>(flags.dim);
  if (flags.provider == "http") {
    if (flags.url.empty()) throw ValidationError("--embedder http needs --embedder-url");
    return std::make_unique<embedding::HttpEmbedder>(flags.url, flags.model, flags.dim);
  }
  if (flags.file.empty()) throw ValidationError("--embedder file needs --embedder-file");
  return std::make_unique<embedding::FileEmbedder>(flags.file);
}

std::unique_ptr<embedding::EmbeddingCache> make_cache(const EmbedderFlags& flags,
                                                      embedding::Provider& provider) {
  if (flags.cache.empty()) return nullptr;
  return std::make_unique<embedding::EmbeddingCache>(flags.cache, provider.fingerprint());
}

registry::Registry load_registry(const std::string& path) {
  return path.empty() ? registry::Registry::shipped() : registry::Registry::load(path);
}

clustering::KRange parse_k_range(const std::string& text) {
  const auto sep = text.find("..");
  if (sep == std::string::npos) {
    throw ValidationError("--k-range must look like 2..30, got '" + text + "'");
  }
  clustering::KRange range;
  try {
    std::size_t pos = 0;
    range.min = std::stoull(text.substr(0, sep), &pos);
    if (pos != sep) throw std::invalid_argument(text);
    range.max = std::stoull(text.substr(sep + 2), &pos);
    if (pos != text.size() - sep - 2) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    throw ValidationError("--k-range must look like 2..30, got '" + text + "'");
  }
  return range;
}

std::vector<corpus::PromptRecord> load_split(const std::vector<std::string>& paths,
                                             corpus::Split split) {
  std::vector<corpus::PromptRecord> out;
  for (const auto& path : paths) {
    for (auto& rec : corpus::load_corpus_file(path)) {
      if (rec.split == split) out.push_back(std::move(rec));
    }
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << content;
  if (!out.flush()) throw ValidationError("cannot write " + path);
}

eval::GraderOverrides parse_graders(const std::vector<std::string>& specs) {
  eval::GraderOverrides overrides;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ValidationError("--grader must look like BENCH=mc or BENCH=exact, got '" + spec +
                            "'");
    }
    const std::string kind = spec.substr(eq + 1);
    eval::Grader grader;
    if (kind == "mc" || kind == "multiple-choice") {
      grader = eval::Grader::multiple_choice;
    } else if (kind == "exact" || kind == "exact-match") {
      grader = eval::Grader::exact_match;
    } else {
      throw ValidationError("unknown grader '" + kind + "' (use mc or exact)");
    }
    overrides[BenchmarkId(spec.substr(0, eq))] = grader;
  }
  return overrides;
}

std::map<std::string, std::string> parse_named_paths(const std::vector<std::string>& specs,
                                                     const char* flag) {
  std::map<std::string, std::string> out;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
      throw ValidationError(std::string(flag) + " must look like name=path, got '" + spec + "'");
    }
    out[spec.substr(0, eq)] = spec.substr(eq + 1);
  }
  return out;
}

struct TrainArgs {
  std::vector<std::string> corpus_paths;
  std::string registry_path;
  std::string out_path;
  std::size_t k = 0;  // 0 = sweep
  std::string k_range = "2..30";
  std::uint64_t seed = 0;
  std::size_t quota = 0;  // 0 = keep everything
  std::size_t max_chars = 8192;
  bool keep_duplicates = false;
  bool store_embeddings = false;
  std::size_t silhouette_cap = 5000;
  double min_dominance = 0.4;
  std::string sweep_csv;
  std::string profile_csv;
  std::string projection_csv;
  EmbedderFlags embedder;
};

int run_train(const TrainArgs& args) {
  const registry::Registry reg = load_registry(args.registry_path);
  std::vector<corpus::PromptRecord> records = load_split(args.corpus_paths, corpus::Split::train);
  if (records.empty()) throw ValidationError("train: no split=train records in the corpus");
  std::cout << "loaded " << records.size() << " training records\n";

  corpus::CorpusConfig config;
  config.seed = args.seed;
  config.max_prompt_chars = args.max_chars;
  config.dedup = !args.keep_duplicates;

  if (args.quota > 0) {
    config.per_benchmark_quota = args.quota;
    std::map<BenchmarkId, std::vector<corpus::PromptRecord>> by_benchmark;
    for (auto& rec : records) by_benchmark[rec.benchmark].push_back(std::move(rec));
    std::vector<std::vector<corpus::PromptRecord>> samples;
    samples.reserve(by_benchmark.size());
    for (const auto& [bench, group] : by_benchmark) {
      samples.push_back(corpus::proportionate_sample(group, config));
    }
    records = corpus::merge_with_source(samples);
    std::cout << "sampled down to " << records.size() << " records (quota " << args.quota
              << " per benchmark)\n";
  }

  records = corpus::preprocess(records, config);
  if (records.empty()) throw ValidationError("train: preprocessing removed every record");
  std::cout << "preprocessed corpus: " << records.size() << " records\n";

  auto provider = make_provider(args.embedder);
  auto cache = make_cache(args.embedder, *provider);

  router::TrainOptions options;
  if (args.k > 0) {
    options.k = args.k;
  } else {
    options.k_range = parse_k_range(args.k_range);
  }
  options.seed = args.seed;
  options.store_embeddings = args.store_embeddings;
  options.silhouette_cap = args.silhouette_cap;

  router::TrainDiagnostics diagnostics;
  const router::RouterArtifact artifact =
      router::train_router(records, *provider, reg, options, cache.get(), &diagnostics);

  router::save_artifact(artifact, args.out_path);
  std::cout << "k=" << artifact.centroid_model.k << " silhouette_mean="
            << artifact.meta.silhouette_mean << " inertia=" << artifact.meta.inertia << "\n";
  std::cout << "clusters mapped: " << artifact.cluster_to_benchmark.size() << " of "
            << artifact.centroid_model.k << "\n";
  for (const auto& [bench, model] : artifact.benchmark_to_model) {
    std::cout << "  " << bench.name() << " -> " << model << "\n";
  }

  const analysis::ClusterProfile profile = analysis::proportions(diagnostics.distribution);
  for (std::size_t weak : analysis::weakly_dominated_clusters(profile, args.min_dominance)) {
    std::cout << "warning: cluster " << weak << " dominant share "
              << profile.dominant_share[weak] << " below " << args.min_dominance << "\n";
  }

  if (!args.sweep_csv.empty()) {
    if (!diagnostics.sweep) {
      throw ValidationError("--sweep-csv needs a swept k (omit --k)");
    }
    std::ostringstream csv;
    csv.precision(17);
    csv << "k,silhouette_mean\n";
    for (const auto& [k, score] : diagnostics.sweep->scores) csv << k << "," << score << "\n";
    write_text_file(args.sweep_csv, csv.str());
  }
  if (!args.profile_csv.empty()) {
    std::ostringstream csv;
    analysis::write_profile_csv(csv, diagnostics.distribution);
    write_text_file(args.profile_csv, csv.str());
  }
  if (!args.projection_csv.empty()) {
    const auto projected = clustering::pca_project_2d(diagnostics.embeddings);
    std::ostringstream csv;
    csv.precision(17);
    csv << "x,y,cluster,benchmark\n";
    for (std::size_t i = 0; i < projected.size(); ++i) {
      csv << projected[i][0] << "," << projected[i][1] << "," << diagnostics.labels[i] << ","
          << records[i].benchmark.name() << "\n";
    }
    write_text_file(args.projection_csv, csv.str());
  }
  std::cout << "artifact written to " << args.out_path << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string artifact_path;
  std::vector<std::string> testset_paths;
  std::string registry_path;
  std::vector<std::string> mock_scripts;
  std::vector<std::string> graders;
  std::string report_prefix;
  std::string json_path;
  std::string mode = "centroid";
  std::size_t k_neighbors = 5;
  double timeout_seconds = 120.0;
  std::int64_t max_tokens = 512;
  EmbedderFlags embedder;
};

int run_evaluate(const EvaluateArgs& args) {
  const router::RouterArtifact artifact = router::load_artifact(args.artifact_path);
  const registry::Registry reg = load_registry(args.registry_path);
  auto provider = make_provider(args.embedder);

  registry::Dispatcher dispatcher;
  for (const auto& [name, path] : parse_named_paths(args.mock_scripts, "--mock-script")) {
    dispatcher.load_mock_script(name, path);
  }

  const std::vector<corpus::PromptRecord> testset =
      load_split(args.testset_paths, corpus::Split::test);
  if (testset.empty()) throw ValidationError("evaluate: no split=test records in the test set");

  eval::EvaluateOptions options;
  options.knn_mode = args.mode == "knn";
  options.k_neighbors = args.k_neighbors;
  options.graders = parse_graders(args.graders);
  options.generation.timeout_seconds = args.timeout_seconds;
  options.generation.max_tokens = args.max_tokens;

  const eval::PolicyEvaluation result =
      eval::evaluate_policies(testset, artifact, reg, dispatcher, *provider, options);

  const std::string text = eval::comparison_text(result.runs);
  std::cout << text;
  if (!args.report_prefix.empty()) {
    write_text_file(args.report_prefix + ".txt", text);
    write_text_file(args.report_prefix + ".csv", eval::comparison_csv(result.runs));
  }
  if (!args.json_path.empty()) {
    write_text_file(args.json_path, eval::runs_to_json(result.runs));
  }
  return 0;
}

struct RouteArgs {
  std::string artifact_path;
  std::string registry_path;
  std::string text;
  std::size_t knn = 0;  // 0 = centroid mode
  EmbedderFlags embedder;
};

int run_route(const RouteArgs& args) {
  const router::RouterArtifact artifact = router::load_artifact(args.artifact_path);
  const registry::Registry reg = load_registry(args.registry_path);
  auto provider = make_provider(args.embedder);
  const router::RoutingDecision decision =
      args.knn > 0 ? router::knn_route(artifact, reg, args.text, *provider, args.knn)
                   : router::route(artifact, reg, args.text, *provider);
  std::cout << router::decision_to_json(decision) << "\n";
  return 0;
}

std::atomic<bool> g_stop{false};

int run_serve(const std::string& config_path) {
  gateway::Gateway service(gateway::load_config(config_path));
  const int port = service.start();
  std::cout << "listening on port " << port << std::endl;
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  return 0;
}

int run_report(const std::vector<std::string>& run_files, const std::string& csv_path) {
  std::map<std::string, eval::RunReport> merged;
  for (const auto& path : run_files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    for (auto& [policy, report] : eval::runs_from_json(buf.str())) {
      if (!merged.emplace(policy, std::move(report)).second) {
        throw ValidationError("report: duplicate policy '" + policy + "' in " + path);
      }
    }
  }
  std::cout << eval::comparison_text(merged);
  if (!csv_path.empty()) write_text_file(csv_path, eval::comparison_csv(merged));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ORI prompt router: train, evaluate and serve cluster-based model routing"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Fit centroids and the benchmark/model maps");
  train->add_option("--corpus", train_args.corpus_paths, "Corpus JSONL file(s)")
      ->required()
      ->expected(-1);
  train->add_option("--registry", train_args.registry_path, "Registry JSON (default: shipped)");
  train->add_option("--out", train_args.out_path, "Artifact output path")->required();
  train->add_option("--k", train_args.k, "Fixed cluster count (omit to sweep)");
  train->add_option("--k-range", train_args.k_range, "Swept k range, e.g. 2..30");
  train->add_option("--seed", train_args.seed, "Seed for sampling, init and subsampling");
  train->add_option("--quota", train_args.quota, "Per-benchmark sample quota (0 = all)");
  train->add_option("--max-chars", train_args.max_chars, "Drop prompts longer than this");
  train->add_flag("--keep-duplicates", train_args.keep_duplicates,
                  "Skip the duplicate-text filter");
  train->add_flag("--store-embeddings", train_args.store_embeddings,
                  "Persist training vectors in the artifact (enables knn mode)");
  train->add_option("--silhouette-cap", train_args.silhouette_cap,
                    "Silhouette subsample cap");
  train->add_option("--min-dominance", train_args.min_dominance,
                    "Warn when a cluster's dominant share falls below this");
  train->add_option("--sweep-csv", train_args.sweep_csv, "Write k,silhouette_mean CSV");
  train->add_option("--profile-csv", train_args.profile_csv, "Write cluster profile CSV");
  train->add_option("--projection-csv", train_args.projection_csv,
                    "Write 2-D projection CSV");
  add_embedder_flags(train, train_args.embedder);

  EvaluateArgs eval_args;
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Score the routed policy against baselines and oracle");
  evaluate->add_option("--artifact", eval_args.artifact_path, "Trained artifact")->required();
  evaluate->add_option("--testset", eval_args.testset_paths, "Test corpus JSONL file(s)")
      ->required()
      ->expected(-1);
  evaluate->add_option("--registry", eval_args.registry_path, "Registry JSON");
  evaluate->add_option("--mock-script", eval_args.mock_scripts,
                       "Mock backend script, name=path (repeatable)");
  evaluate->add_option("--grader", eval_args.graders,
                       "Grader override, BENCH=mc|exact (repeatable)");
  evaluate->add_option("--report", eval_args.report_prefix,
                       "Write <prefix>.txt and <prefix>.csv");
  evaluate->add_option("--json", eval_args.json_path, "Write machine-readable runs JSON");
  evaluate->add_option("--mode", eval_args.mode, "Routing mode")
      ->check(CLI::IsMember({"centroid", "knn"}));
  evaluate->add_option("--k-neighbors", eval_args.k_neighbors, "Neighbors in knn mode");
  evaluate->add_option("--timeout", eval_args.timeout_seconds, "Backend timeout seconds");
  evaluate->add_option("--max-tokens", eval_args.max_tokens, "Backend max_tokens");
  add_embedder_flags(evaluate, eval_args.embedder);

  RouteArgs route_args;
  CLI::App* route = app.add_subcommand("route", "Route one prompt and print the decision");
  route->add_option("--artifact", route_args.artifact_path, "Trained artifact")->required();
  route->add_option("--registry", route_args.registry_path, "Registry JSON");
  route->add_option("--text", route_args.text, "Prompt text")->required();
  route->add_option("--knn", route_args.knn, "Use knn mode with this many neighbors");
  add_embedder_flags(route, route_args.embedder);

  std::string serve_config;
  CLI::App* serve = app.add_subcommand("serve", "Run the HTTP gateway");
  serve->add_option("--config", serve_config, "Gateway config JSON")->required();

  std::vector<std::string> report_runs;
  std::string report_csv;
  CLI::App* report = app.add_subcommand("report", "Merge runs JSON files into one table");
  report->add_option("--runs", report_runs, "Runs JSON file(s) from evaluate --json")
      ->required()
      ->expected(-1);
  report->add_option("--csv", report_csv, "Also write the merged table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return run_train(train_args);
    if (evaluate->parsed()) return run_evaluate(eval_args);
    if (route->parsed()) return run_route(route_args);
    if (serve->parsed()) return run_serve(serve_config);
    if (report->parsed()) return run_report(report_runs, report_csv);
  } catch (const ori::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
