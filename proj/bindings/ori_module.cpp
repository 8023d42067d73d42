// Python face of the library. Vectors cross the boundary as plain lists so
// the module works without numpy; convert on the python side when needed.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ori/analysis.hpp"
#include "ori/benchmark.hpp"
#include "ori/clustering.hpp"
#include "ori/corpus.hpp"
#include "ori/embedding.hpp"
#include "ori/errors.hpp"
#include "ori/eval.hpp"
#include "ori/registry.hpp"
#include "ori/router.hpp"
#include "ori/text.hpp"

namespace py = pybind11;
using namespace ori;

namespace {

std::vector<std::pair<std::size_t, BenchmarkId>> to_labeled(
    const std::vector<std::pair<std::size_t, std::string>>& records) {
  std::vector<std::pair<std::size_t, BenchmarkId>> out;
  out.reserve(records.size());
  for (const auto& [label, name] : records) out.emplace_back(label, BenchmarkId(name));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cluster-based prompt routing core";

  // Translators run newest-first, so the base class must be registered before
  // the subclasses or it would shadow them.
  py::register_exception<Error>(m, "OriError", PyExc_RuntimeError);
  py::register_exception<TransportError>(m, "TransportError", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

  py::class_<BenchmarkId>(m, "BenchmarkId")
      .def(py::init<std::string_view>())
      .def_property_readonly("name", &BenchmarkId::name)
      .def("__repr__",
           [](const BenchmarkId& b) { return "BenchmarkId('" + b.name() + "')"; })
      .def("__eq__", [](const BenchmarkId& a, const BenchmarkId& b) { return a == b; })
      .def("__lt__", [](const BenchmarkId& a, const BenchmarkId& b) { return a < b; })
      .def("__hash__",
           [](const BenchmarkId& b) { return py::hash(py::str(b.name())); });

  // text primitives
  m.def("normalize_prompt", &text::normalize_prompt, py::arg("s"));
  m.def("normalize_for_match", &text::normalize_for_match, py::arg("s"));
  m.def("collapse_whitespace", &text::collapse_whitespace, py::arg("s"));
  m.def("fnv1a64", &text::fnv1a64, py::arg("bytes"));

  // embedding
  m.def(
      "test_embed",
      [](std::string_view t, std::size_t dim) { return embedding::test_embed(t, dim); },
      py::arg("text"), py::arg("dim") = 384);

  py::class_<embedding::EmbedderFingerprint>(m, "EmbedderFingerprint")
      .def_readonly("provider", &embedding::EmbedderFingerprint::provider)
      .def_readonly("model", &embedding::EmbedderFingerprint::model)
      .def_readonly("dim", &embedding::EmbedderFingerprint::dim)
      .def("__repr__",
           [](const embedding::EmbedderFingerprint& f) { return f.to_string(); });

  py::class_<embedding::TestEmbedder>(m, "TestEmbedder")
      .def(py::init<std::size_t>(), py::arg("dim") = 384)
      .def("embed",
           [](embedding::TestEmbedder& e, std::string_view t) { return e.embed(t); })
      .def("fingerprint", &embedding::TestEmbedder::fingerprint);

  // clustering
  py::class_<clustering::CentroidModel>(m, "CentroidModel")
      .def_readonly("k", &clustering::CentroidModel::k)
      .def_readonly("centroids", &clustering::CentroidModel::centroids)
      .def_readonly("inertia", &clustering::CentroidModel::inertia)
      .def_readonly("iterations_run", &clustering::CentroidModel::iterations_run)
      .def_readonly("inertia_trace", &clustering::CentroidModel::inertia_trace);

  m.def(
      "kmeans_fit",
      [](const std::vector<clustering::Point>& points, std::size_t k, std::uint64_t seed,
         std::size_t max_iter, double tol) {
        clustering::KMeansOptions options;
        options.max_iter = max_iter;
        options.tol = tol;
        return clustering::kmeans_fit(points, k, seed, options);
      },
      py::arg("points"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iter") = 300,
      py::arg("tol") = 1e-6);
  m.def(
      "assign_nearest_centroid",
      [](const clustering::Point& x, const clustering::CentroidModel& model) {
        return clustering::assign_nearest_centroid(x, model);
      },
      py::arg("x"), py::arg("model"));
  m.def(
      "silhouette_score",
      [](const std::vector<clustering::Point>& points,
         const std::vector<std::size_t>& labels) {
        const auto result = clustering::silhouette_score(points, labels);
        return py::make_tuple(result.mean, result.per_point);
      },
      py::arg("points"), py::arg("labels"),
      "Returns (mean, per_point) silhouette values");
  m.def(
      "sweep_k",
      [](const std::vector<clustering::Point>& points, std::size_t k_min, std::size_t k_max,
         std::uint64_t seed, std::size_t silhouette_cap) {
        clustering::SweepOptions options;
        options.silhouette_cap = silhouette_cap;
        const auto result =
            clustering::sweep_k(points, {k_min, k_max}, seed, options);
        return py::make_tuple(result.best_k, result.scores);
      },
      py::arg("points"), py::arg("k_min") = 2, py::arg("k_max") = 30, py::arg("seed") = 0,
      py::arg("silhouette_cap") = 5000, "Returns (best_k, {k: silhouette_mean})");
  m.def(
      "agglomerative_fit",
      [](const std::vector<clustering::Point>& points, std::size_t k) {
        const auto result = clustering::agglomerative_fit(points, k);
        std::vector<py::tuple> merges;
        merges.reserve(result.tree.merges.size());
        for (const auto& merge : result.tree.merges) {
          merges.push_back(py::make_tuple(merge.a, merge.b, merge.distance));
        }
        return py::make_tuple(result.labels, merges);
      },
      py::arg("points"), py::arg("k"), "Returns (labels, [(a, b, distance), ...])");
  m.def(
      "pca_project_2d",
      [](const std::vector<clustering::Point>& points) {
        return clustering::pca_project_2d(points);
      },
      py::arg("points"));

  // analysis
  m.def(
      "dominant_benchmark",
      [](const std::vector<std::pair<std::size_t, std::string>>& records, std::size_t k,
         const std::vector<std::string>& benchmarks, std::size_t cluster) {
        std::vector<BenchmarkId> ids;
        ids.reserve(benchmarks.size());
        for (const auto& name : benchmarks) ids.emplace_back(name);
        const auto dist =
            analysis::count_distribution(to_labeled(records), k, std::move(ids));
        return analysis::dominant_benchmark(dist, cluster).name();
      },
      py::arg("records"), py::arg("k"), py::arg("benchmarks"), py::arg("cluster"));

  // corpus
  py::class_<corpus::PromptRecord>(m, "PromptRecord")
      .def(py::init([](std::string id, std::string text, std::string benchmark,
                       std::string subcategory, std::string reference, std::string split) {
             corpus::PromptRecord rec;
             rec.id = std::move(id);
             rec.text = std::move(text);
             rec.benchmark = BenchmarkId(benchmark);
             rec.subcategory = std::move(subcategory);
             rec.reference = std::move(reference);
             rec.split = corpus::split_from_string(split);
             return rec;
           }),
           py::arg("id"), py::arg("text"), py::arg("benchmark"),
           py::arg("subcategory") = "", py::arg("reference") = "",
           py::arg("split") = "train")
      .def_readwrite("id", &corpus::PromptRecord::id)
      .def_readwrite("text", &corpus::PromptRecord::text)
      .def_property(
          "benchmark",
          [](const corpus::PromptRecord& r) { return r.benchmark.name(); },
          [](corpus::PromptRecord& r, std::string_view name) {
            r.benchmark = BenchmarkId(name);
          })
      .def_readwrite("subcategory", &corpus::PromptRecord::subcategory)
      .def_readwrite("reference", &corpus::PromptRecord::reference)
      .def_property(
          "split", [](const corpus::PromptRecord& r) { return corpus::to_string(r.split); },
          [](corpus::PromptRecord& r, std::string_view s) {
            r.split = corpus::split_from_string(s);
          });

  m.def("load_corpus_file", &corpus::load_corpus_file, py::arg("path"));
  m.def("save_corpus_file", &corpus::save_corpus_file, py::arg("path"), py::arg("records"));
  m.def(
      "preprocess",
      [](const std::vector<corpus::PromptRecord>& records, std::size_t max_prompt_chars,
         bool dedup) {
        corpus::CorpusConfig config;
        config.max_prompt_chars = max_prompt_chars;
        config.dedup = dedup;
        return corpus::preprocess(records, config);
      },
      py::arg("records"), py::arg("max_prompt_chars") = 8192, py::arg("dedup") = true);
  m.def(
      "proportionate_sample",
      [](const std::vector<corpus::PromptRecord>& records, std::size_t quota,
         std::uint64_t seed) {
        corpus::CorpusConfig config;
        config.per_benchmark_quota = quota;
        config.seed = seed;
        return corpus::proportionate_sample(records, config);
      },
      py::arg("records"), py::arg("quota"), py::arg("seed") = 0);
  m.def("corpus_hash", &corpus::corpus_hash, py::arg("records"));

  // registry
  py::class_<registry::ModelCard>(m, "ModelCard")
      .def(py::init([](std::string model_id, std::string endpoint,
                       const std::map<std::string, double>& scores, double price_in,
                       double price_out, bool enabled) {
             registry::ModelCard card;
             card.model_id = std::move(model_id);
             card.endpoint = std::move(endpoint);
             for (const auto& [name, score] : scores) {
               card.benchmark_scores[BenchmarkId(name)] = score;
             }
             card.price_per_mtok_in = price_in;
             card.price_per_mtok_out = price_out;
             card.enabled = enabled;
             return card;
           }),
           py::arg("model_id"), py::arg("endpoint"),
           py::arg("benchmark_scores") = std::map<std::string, double>{},
           py::arg("price_per_mtok_in") = 0.0, py::arg("price_per_mtok_out") = 0.0,
           py::arg("enabled") = true)
      .def_readonly("model_id", &registry::ModelCard::model_id)
      .def_readonly("endpoint", &registry::ModelCard::endpoint)
      .def_property_readonly("benchmark_scores",
                             [](const registry::ModelCard& card) {
                               std::map<std::string, double> out;
                               for (const auto& [b, s] : card.benchmark_scores) {
                                 out[b.name()] = s;
                               }
                               return out;
                             })
      .def_readonly("enabled", &registry::ModelCard::enabled);

  py::class_<registry::Registry>(m, "Registry")
      .def(py::init<>())
      .def_static("shipped", &registry::Registry::shipped)
      .def_static("load", &registry::Registry::load, py::arg("path"))
      .def_static(
          "from_json",
          [](std::string_view text) { return registry::Registry::from_json(text); },
          py::arg("json_text"))
      .def("to_json", &registry::Registry::to_json)
      .def("save", &registry::Registry::save, py::arg("path"))
      .def("register_model", &registry::Registry::register_model, py::arg("card"))
      .def("set_enabled", &registry::Registry::set_enabled, py::arg("model_id"),
           py::arg("enabled"))
      .def(
          "best_model_for_benchmark",
          [](const registry::Registry& reg, std::string_view benchmark) {
            return reg.best_model_for_benchmark(BenchmarkId(benchmark)).model_id;
          },
          py::arg("benchmark"))
      .def("best_average_model", &registry::Registry::best_average_model)
      .def("__len__", &registry::Registry::size);

  m.def(
      "resolve_benchmark_alias",
      [](std::string_view name) {
        return registry::resolve_benchmark_alias(BenchmarkId(name)).name();
      },
      py::arg("benchmark"));

  // router
  py::class_<router::RoutingDecision>(m, "RoutingDecision")
      .def_readonly("prompt_id", &router::RoutingDecision::prompt_id)
      .def_readonly("cluster", &router::RoutingDecision::cluster)
      .def_property_readonly("benchmark",
                             [](const router::RoutingDecision& d) -> py::object {
                               if (!d.benchmark) return py::none();
                               return py::cast(d.benchmark->name());
                             })
      .def_readonly("model_id", &router::RoutingDecision::model_id)
      .def_readonly("distance", &router::RoutingDecision::distance)
      .def_readonly("fallback_used", &router::RoutingDecision::fallback_used)
      .def("__repr__", &router::decision_to_json);

  py::class_<router::RouterArtifact>(m, "RouterArtifact")
      .def_property_readonly("k",
                             [](const router::RouterArtifact& a) {
                               return a.centroid_model.k;
                             })
      .def_property_readonly("fingerprint",
                             [](const router::RouterArtifact& a) { return a.fingerprint; })
      .def_property_readonly("cluster_to_benchmark",
                             [](const router::RouterArtifact& a) {
                               std::map<std::size_t, std::string> out;
                               for (const auto& [c, b] : a.cluster_to_benchmark) {
                                 out[c] = b.name();
                               }
                               return out;
                             })
      .def_property_readonly("benchmark_to_model",
                             [](const router::RouterArtifact& a) {
                               std::map<std::string, std::string> out;
                               for (const auto& [b, id] : a.benchmark_to_model) {
                                 out[b.name()] = id;
                               }
                               return out;
                             })
      .def_property_readonly("silhouette_mean",
                             [](const router::RouterArtifact& a) {
                               return a.meta.silhouette_mean;
                             })
      .def("to_json", &router::RouterArtifact::to_json)
      .def_static(
          "from_json",
          [](std::string_view text) { return router::RouterArtifact::from_json(text); },
          py::arg("json_text"));

  m.def(
      "train_router",
      [](const std::vector<corpus::PromptRecord>& records, embedding::TestEmbedder& provider,
         const registry::Registry& reg, std::optional<std::size_t> k, std::size_t k_min,
         std::size_t k_max, std::uint64_t seed, bool store_embeddings,
         std::size_t silhouette_cap) {
        router::TrainOptions options;
        options.k = k;
        options.k_range = {k_min, k_max};
        options.seed = seed;
        options.store_embeddings = store_embeddings;
        options.silhouette_cap = silhouette_cap;
        return router::train_router(records, provider, reg, options);
      },
      py::arg("records"), py::arg("provider"), py::arg("registry"),
      py::arg("k") = std::nullopt, py::arg("k_min") = 2, py::arg("k_max") = 30,
      py::arg("seed") = 0, py::arg("store_embeddings") = false,
      py::arg("silhouette_cap") = 5000);
  m.def(
      "route",
      [](const router::RouterArtifact& artifact, const registry::Registry& reg,
         std::string_view prompt, embedding::TestEmbedder& provider) {
        return router::route(artifact, reg, prompt, provider);
      },
      py::arg("artifact"), py::arg("registry"), py::arg("text"), py::arg("provider"));
  m.def(
      "knn_route",
      [](const router::RouterArtifact& artifact, const registry::Registry& reg,
         std::string_view prompt, embedding::TestEmbedder& provider,
         std::size_t k_neighbors) {
        return router::knn_route(artifact, reg, prompt, provider, k_neighbors);
      },
      py::arg("artifact"), py::arg("registry"), py::arg("text"), py::arg("provider"),
      py::arg("k_neighbors") = 5);
  m.def("save_artifact", &router::save_artifact, py::arg("artifact"), py::arg("path"));
  m.def("load_artifact", &router::load_artifact, py::arg("path"));

  // eval
  m.def("eval_multiple_choice", &eval::eval_multiple_choice, py::arg("predicted"),
        py::arg("reference"));
  m.def("eval_exact_match", &eval::eval_exact_match, py::arg("predicted"),
        py::arg("reference"));
  m.def(
      "grader_for",
      [](std::string_view benchmark) {
        return eval::grader_for(BenchmarkId(benchmark)) == eval::Grader::multiple_choice
                   ? "multiple_choice"
                   : "exact_match";
      },
      py::arg("benchmark"));
}
