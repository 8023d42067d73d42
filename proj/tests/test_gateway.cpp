// Gateway tests: config parsing, the HTTP surface (route, completions,
// metrics), backend error mapping, backpressure and artifact hot reload.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include "ori/embedding.hpp"
#include "ori/errors.hpp"
#include "ori/gateway.hpp"
#include "ori/registry.hpp"
#include "ori/router.hpp"
#include "support/test_util.hpp"

namespace {

using namespace ori;
using nlohmann::json;

constexpr std::size_t kDim = 16;

// OpenAI-shaped backend with a controllable delay, plus always-broken paths.
class BackendServer {
 public:
  BackendServer() {
    server_.Post("/ok/chat/completions", [this](const httplib::Request&,
                                                httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms.load()));
      json reply = {{"choices",
                     json::array({{{"message", {{"role", "assistant"},
                                                {"content", "The answer is A"}}}}})},
                    {"usage", {{"prompt_tokens", 9}, {"completion_tokens", 7}}}};
      res.set_content(reply.dump(), "application/json");
    });
    server_.Post("/slow/chat/completions",
                 [](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1500));
      res.set_content("{}", "application/json");
    });
    server_.Post("/garbled/chat/completions",
                 [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"nope": 1})", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    while (!server_.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  ~BackendServer() {
    server_.stop();
    thread_.join();
  }

  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }

  std::atomic<int> delay_ms{0};

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

registry::Registry two_mock_registry() {
  registry::Registry registry;
  const auto add = [&registry](const std::string& id, double mmlu, double bbh, double p_in,
                               double p_out) {
    registry::ModelCard card;
    card.model_id = id;
    card.endpoint = "mock:" + id;
    card.benchmark_scores[BenchmarkId("MMLU")] = mmlu;
    card.benchmark_scores[BenchmarkId("BBH")] = bbh;
    card.price_per_mtok_in = p_in;
    card.price_per_mtok_out = p_out;
    registry.register_model(card);
  };
  add("model-a", 90.0, 10.0, 1.0, 2.0);
  add("model-b", 10.0, 90.0, 3.0, 4.0);
  return registry;
}

// Two-cluster artifact pinned to the test embedder: "anchor one" lands on
// cluster 0 (MMLU -> model-a), "anchor two" on cluster 1 (BBH -> model-b).
router::RouterArtifact two_cluster_artifact() {
  embedding::TestEmbedder embedder(kDim);
  router::RouterArtifact artifact;
  artifact.fingerprint = embedder.fingerprint();
  artifact.centroid_model.k = 2;
  artifact.centroid_model.centroids = {embedder.embed("anchor one"),
                                       embedder.embed("anchor two")};
  artifact.cluster_to_benchmark = {{0, BenchmarkId("MMLU")}, {1, BenchmarkId("BBH")}};
  artifact.benchmark_to_model = {{BenchmarkId("MMLU"), "model-a"},
                                 {BenchmarkId("BBH"), "model-b"}};
  return artifact;
}

router::RouterArtifact single_cluster_artifact(const std::string& model_id) {
  embedding::TestEmbedder embedder(kDim);
  router::RouterArtifact artifact;
  artifact.fingerprint = embedder.fingerprint();
  artifact.centroid_model.k = 1;
  artifact.centroid_model.centroids = {embedder.embed("hub")};
  artifact.cluster_to_benchmark = {{0, BenchmarkId("MMLU")}};
  artifact.benchmark_to_model = {{BenchmarkId("MMLU"), model_id}};
  return artifact;
}

// Files plus a ready config for the standard two-mock setup.
struct Fixture {
  testutil::TempDir dir;
  gateway::GatewayConfig config;

  Fixture() {
    router::save_artifact(two_cluster_artifact(), dir.file("artifact.json"));
    two_mock_registry().save(dir.file("registry.json"));
    testutil::write_file(dir.file("model-a.jsonl"),
                         R"({"match": "", "reply": "The answer is A", "tokens_out": 4})"
                         "\n");
    testutil::write_file(dir.file("model-b.jsonl"),
                         R"({"match": "", "reply": "The answer is B", "tokens_out": 6})"
                         "\n");
    config.listen_port = 0;
    config.artifact_path = dir.file("artifact.json").string();
    config.registry_path = dir.file("registry.json").string();
    config.embedder.provider = "test";
    config.embedder.dim = kDim;
    config.mock_scripts = {{"model-a", dir.file("model-a.jsonl").string()},
                           {"model-b", dir.file("model-b.jsonl").string()}};
  }
};

httplib::Client make_client(int port) {
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(std::chrono::seconds(20));
  return client;
}

std::string chat_body(const std::string& text) {
  json body = {{"model", "auto"},
               {"messages", json::array({{{"role", "user"}, {"content", text}}})}};
  return body.dump();
}

}  // namespace

TEST_CASE("gateway config file round-trips every field") {
  testutil::TempDir dir;
  const auto path = dir.file("config.json");
  testutil::write_file(path, R"({
    "listen_host": "0.0.0.0",
    "listen_port": 9001,
    "artifact": "art.json",
    "registry": "reg.json",
    "embedder": {"provider": "http", "model": "all-mini", "dim": 64,
                 "url": "http://embed.local", "cache": "cache.jsonl"},
    "backend_timeout_seconds": 7.5,
    "max_concurrent_backends": 3,
    "backend_queue_limit": 9,
    "metrics_enabled": false,
    "mock_scripts": {"m1": "s1.jsonl"}
  })");
  const auto cfg = gateway::load_config(path);
  CHECK(cfg.listen_host == "0.0.0.0");
  CHECK(cfg.listen_port == 9001);
  CHECK(cfg.artifact_path == "art.json");
  CHECK(cfg.registry_path == "reg.json");
  CHECK(cfg.embedder.provider == "http");
  CHECK(cfg.embedder.model == "all-mini");
  CHECK(cfg.embedder.dim == 64);
  CHECK(cfg.embedder.url == "http://embed.local");
  CHECK(cfg.embedder.cache_path == "cache.jsonl");
  CHECK(cfg.backend_timeout_seconds == 7.5);
  CHECK(cfg.max_concurrent_backends == 3);
  CHECK(cfg.backend_queue_limit == 9);
  CHECK_FALSE(cfg.metrics_enabled);
  CHECK(cfg.mock_scripts.at("m1") == "s1.jsonl");
}

TEST_CASE("gateway config defaults and validation") {
  testutil::TempDir dir;
  const auto path = dir.file("config.json");

  testutil::write_file(path, "{}");
  const auto cfg = gateway::load_config(path);
  CHECK(cfg.listen_host == "127.0.0.1");
  CHECK(cfg.listen_port == 8080);
  CHECK(cfg.embedder.provider == "test");
  CHECK(cfg.embedder.dim == 384);
  CHECK(cfg.backend_timeout_seconds == 120.0);
  CHECK(cfg.max_concurrent_backends == 8);
  CHECK(cfg.backend_queue_limit == 64);
  CHECK(cfg.metrics_enabled);
  CHECK(cfg.artifact_path.empty());

  testutil::write_file(path, R"({"max_concurrent_backends": 0})");
  CHECK_THROWS_WITH_AS(gateway::load_config(path),
                       doctest::Contains("max_concurrent_backends must be >= 1"),
                       ValidationError);

  testutil::write_file(path, R"({"backend_timeout_seconds": 0})");
  CHECK_THROWS_WITH_AS(gateway::load_config(path),
                       doctest::Contains("backend_timeout_seconds must be > 0"),
                       ValidationError);

  testutil::write_file(path, R"({"listen_port": "eighty"})");
  CHECK_THROWS_AS(gateway::load_config(path), ParseError);

  testutil::write_file(path, "no json at all");
  CHECK_THROWS_WITH_AS(gateway::load_config(path), doctest::Contains("not a JSON object"),
                       ParseError);

  CHECK_THROWS_WITH_AS(gateway::load_config(dir.file("missing.json")),
                       doctest::Contains("cannot open config"), ValidationError);
}

TEST_CASE("gateway starts on an ephemeral port and rejects double start") {
  Fixture fx;
  gateway::Gateway gw(fx.config);
  const int port = gw.start();
  CHECK(port > 0);
  CHECK(gw.port() == port);
  CHECK_THROWS_WITH_AS(gw.start(), doctest::Contains("already started"), Error);
  gw.stop();
  gw.stop();  // idempotent
}

TEST_CASE("route endpoint returns deterministic decisions") {
  Fixture fx;
  gateway::Gateway gw(fx.config);
  auto client = make_client(gw.start());

  const auto first = client.Post("/v1/route", R"({"text": "anchor one"})", "application/json");
  REQUIRE(first);
  CHECK(first->status == 200);
  const json decision = json::parse(first->body);
  CHECK(decision["model_id"] == "model-a");
  CHECK(decision["benchmark"] == "MMLU");
  CHECK(decision["cluster"] == 0);
  CHECK(decision["fallback_used"] == false);
  CHECK(decision["distance"].get<double>() < 1e-9);

  const auto second =
      client.Post("/v1/route", R"({"text": "anchor one"})", "application/json");
  REQUIRE(second);
  CHECK(second->body == first->body);

  const auto other = client.Post("/v1/route", R"({"text": "anchor two"})", "application/json");
  REQUIRE(other);
  CHECK(json::parse(other->body)["model_id"] == "model-b");

  // The wire decision matches a local route against the same artifact.
  embedding::TestEmbedder embedder(kDim);
  const auto local = router::route(router::load_artifact(fx.dir.file("artifact.json")),
                                   registry::Registry::load(fx.dir.file("registry.json")),
                                   "anchor one", embedder);
  CHECK(first->body == router::decision_to_json(local) + "\n");
}

TEST_CASE("route endpoint rejects bad requests") {
  Fixture fx;
  gateway::Gateway gw(fx.config);
  auto client = make_client(gw.start());

  for (const char* body : {R"({"text": ""})", R"({"no_text": 1})", "not json", "[1,2]"}) {
    const auto res = client.Post("/v1/route", body, "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(json::parse(res->body).contains("error"));
  }
}

TEST_CASE("gateway without an artifact answers 503") {
  Fixture fx;
  fx.config.artifact_path.clear();
  gateway::Gateway gw(fx.config);
  auto client = make_client(gw.start());

  const auto route = client.Post("/v1/route", R"({"text": "hello"})", "application/json");
  REQUIRE(route);
  CHECK(route->status == 503);

  const auto chat = client.Post("/v1/chat/completions", chat_body("hello"), "application/json");
  REQUIRE(chat);
  CHECK(chat->status == 503);
}

TEST_CASE("completions proxy the scripted backend and tag the decision") {
  Fixture fx;
  gateway::Gateway gw(fx.config);
  auto client = make_client(gw.start());

  const auto res =
      client.Post("/v1/chat/completions", chat_body("anchor one"), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value_count("X-ORI-Model") == 1);
  CHECK(res->get_header_value("X-ORI-Model") == "model-a");
  CHECK(res->get_header_value("X-ORI-Cluster") == "0");

  const json reply = json::parse(res->body);
  CHECK(reply["object"] == "chat.completion");
  CHECK(reply["model"] == "model-a");
  CHECK(reply["choices"][0]["message"]["content"] == "The answer is A");
  CHECK(reply["choices"][0]["message"]["role"] == "assistant");
  CHECK(reply["usage"]["prompt_tokens"] == 2);  // "anchor one"
  CHECK(reply["usage"]["completion_tokens"] == 4);
  CHECK(reply["usage"]["total_tokens"] == 6);

  const auto other =
      client.Post("/v1/chat/completions", chat_body("anchor two"), "application/json");
  REQUIRE(other);
  CHECK(other->get_header_value("X-ORI-Model") == "model-b");
  CHECK(other->get_header_value("X-ORI-Cluster") == "1");
  CHECK(json::parse(other->body)["choices"][0]["message"]["content"] == "The answer is B");
}

TEST_CASE("completions route the last user message") {
  Fixture fx;
  gateway::Gateway gw(fx.config);
  auto client = make_client(gw.start());

  json body = {{"messages",
                json::array({{{"role", "user"}, {"content", "anchor one"}},
                             {{"role", "assistant"}, {"content", "noted"}},
                             {{"role", "user"}, {"content", "anchor two"}}})}};
  const auto res = client.Post("/v1/chat/completions", body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("X-ORI-Model") == "model-b");

  // No user turn: the last message's content is still routable.
  json tail = {{"messages", json::array({{{"role", "system"}, {"content", "anchor one"}}})}};
  const auto fallback = client.Post("/v1/chat/completions", tail.dump(), "application/json");
  REQUIRE(fallback);
  CHECK(fallback->status == 200);
  CHECK(fallback->get_header_value("X-ORI-Model") == "model-a");

  for (const char* bad : {R"({"messages": []})", R"({"messages": "x"})", "{}", "broken"}) {
    const auto rejected = client.Post("/v1/chat/completions", bad, "application/json");
    REQUIRE(rejected);
    CHECK(rejected->status == 400);
  }
}

TEST_CASE("completions map backend failures onto gateway statuses") {
  testutil::TempDir dir;
  BackendServer backend;

  const auto gateway_for = [&](const std::string& endpoint, double timeout_seconds) {
    registry::Registry registry;
    registry::ModelCard card;
    card.model_id = "flaky";
    card.endpoint = endpoint;
    card.benchmark_scores[BenchmarkId("MMLU")] = 50.0;
    registry.register_model(card);
    registry.save(dir.file("flaky-registry.json"));
    router::save_artifact(single_cluster_artifact("flaky"), dir.file("flaky-artifact.json"));

    gateway::GatewayConfig config;
    config.listen_port = 0;
    config.artifact_path = dir.file("flaky-artifact.json").string();
    config.registry_path = dir.file("flaky-registry.json").string();
    config.embedder.dim = kDim;
    config.backend_timeout_seconds = timeout_seconds;
    return std::make_unique<gateway::Gateway>(config);
  };

  SUBCASE("timeout becomes 504") {
    auto gw = gateway_for(backend.url("/slow"), 0.3);
    auto client = make_client(gw->start());
    const auto res = client.Post("/v1/chat/completions", chat_body("hi"), "application/json");
    REQUIRE(res);
    CHECK(res->status == 504);
    const json err = json::parse(res->body);
    CHECK(err["model_id"] == "flaky");
  }
  SUBCASE("unreachable backend becomes 502") {
    auto gw = gateway_for("http://127.0.0.1:1", 0.5);
    auto client = make_client(gw->start());
    const auto res = client.Post("/v1/chat/completions", chat_body("hi"), "application/json");
    REQUIRE(res);
    CHECK(res->status == 502);
    CHECK(json::parse(res->body)["model_id"] == "flaky");
  }
  SUBCASE("malformed backend reply becomes 502") {
    auto gw = gateway_for(backend.url("/garbled"), 5.0);
    auto client = make_client(gw->start());
    const auto res = client.Post("/v1/chat/completions", chat_body("hi"), "application/json");
    REQUIRE(res);
    CHECK(res->status == 502);
    CHECK(json::parse(res->body)["error"].get<std::string>().find("lacks choices") !=
          std::string::npos);
  }
}

TEST_CASE("completions answer 503 when every backend is disabled") {
  Fixture fx;
  auto registry = registry::Registry::load(fx.dir.file("registry.json"));
  registry.set_enabled("model-a", false);
  registry.set_enabled("model-b", false);
  registry.save(fx.dir.file("registry.json"));

  gateway::Gateway gw(fx.config);
  auto client = make_client(gw.start());
  const auto res =
      client.Post("/v1/chat/completions", chat_body("anchor one"), "application/json");
  REQUIRE(res);
  CHECK(res->status == 503);
}

TEST_CASE("metrics equal the recorded usage at a quiescent point") {
  Fixture fx;
  gateway::Gateway gw(fx.config);
  auto client = make_client(gw.start());

  const auto fresh = gw.metrics();
  CHECK(fresh.requests_total == 0);
  CHECK(fresh.dispatches_by_model.empty());
  CHECK(gw.usage_records().empty());

  // 2 good routes + 1 bad route + 3 good completions + 1 bad completion.
  client.Post("/v1/route", R"({"text": "anchor one"})", "application/json");
  client.Post("/v1/route", R"({"text": "anchor two"})", "application/json");
  client.Post("/v1/route", R"({"text": ""})", "application/json");
  client.Post("/v1/chat/completions", chat_body("anchor one"), "application/json");
  client.Post("/v1/chat/completions", chat_body("anchor one"), "application/json");
  client.Post("/v1/chat/completions", chat_body("anchor two"), "application/json");
  client.Post("/v1/chat/completions", "{}", "application/json");

  const auto m = gw.metrics();
  CHECK(m.requests_total == 7);
  CHECK(m.route_requests == 3);
  CHECK(m.completion_requests == 4);
  CHECK(m.fallbacks_total == 0);
  CHECK(m.rejected_overload == 0);
  CHECK(m.dispatches_by_model.at("model-a") == 2);
  CHECK(m.dispatches_by_model.at("model-b") == 1);

  const auto usage = gw.usage_records();
  REQUIRE(usage.size() == 3);
  double cost = 0.0;
  std::int64_t tok_in = 0;
  std::int64_t tok_out = 0;
  for (const auto& u : usage) {
    cost += u.cost_usd;
    tok_in += u.prompt_tokens;
    tok_out += u.completion_tokens;
  }
  CHECK(m.total_cost_usd == cost);
  CHECK(m.total_prompt_tokens == tok_in);
  CHECK(m.total_completion_tokens == tok_out);
  // Mock pricing is exact: 2 calls at (2*1+4*2) plus 1 at (2*3+6*4) per mtok.
  CHECK(m.total_cost_usd == doctest::Approx(2 * 10e-6 + 30e-6).epsilon(1e-12));

  const auto exposition = client.Get("/metrics");
  REQUIRE(exposition);
  CHECK(exposition->status == 200);
  const std::string& text = exposition->body;
  CHECK(text.find("ori_requests_total 7\n") != std::string::npos);
  CHECK(text.find("ori_route_requests_total 3\n") != std::string::npos);
  CHECK(text.find("ori_completion_requests_total 4\n") != std::string::npos);
  CHECK(text.find("ori_fallbacks_total 0\n") != std::string::npos);
  CHECK(text.find("ori_prompt_tokens_total 6\n") != std::string::npos);
  CHECK(text.find("ori_completion_tokens_total 14\n") != std::string::npos);
  CHECK(text.find("ori_dispatches_total{model=\"model-a\"} 2\n") != std::string::npos);
  CHECK(text.find("ori_dispatches_total{model=\"model-b\"} 1\n") != std::string::npos);
}

TEST_CASE("metrics endpoint can be disabled") {
  Fixture fx;
  fx.config.metrics_enabled = false;
  gateway::Gateway gw(fx.config);
  auto client = make_client(gw.start());
  const auto res = client.Get("/metrics");
  REQUIRE(res);
  CHECK(res->status == 404);
}

TEST_CASE("fallback routes are counted") {
  Fixture fx;
  auto registry = registry::Registry::load(fx.dir.file("registry.json"));
  registry.set_enabled("model-a", false);  // MMLU cluster now falls back to model-b
  registry.save(fx.dir.file("registry.json"));

  gateway::Gateway gw(fx.config);
  auto client = make_client(gw.start());
  const auto res = client.Post("/v1/route", R"({"text": "anchor one"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  const json decision = json::parse(res->body);
  CHECK(decision["model_id"] == "model-b");
  CHECK(decision["fallback_used"] == true);
  CHECK(gw.metrics().fallbacks_total == 1);
}

TEST_CASE("parallel route calls match serial execution") {
  Fixture fx;
  gateway::Gateway gw(fx.config);
  const int port = gw.start();

  auto serial_client = make_client(port);
  const auto serial =
      serial_client.Post("/v1/route", R"({"text": "anchor one"})", "application/json");
  REQUIRE(serial);

  std::atomic<int> mismatches{0};
  std::atomic<int> failures{0};
  std::vector<std::thread> workers;
  for (int t = 0; t < 8; ++t) {
    workers.emplace_back([&, port] {
      auto client = make_client(port);
      for (int i = 0; i < 4; ++i) {
        const auto res =
            client.Post("/v1/route", R"({"text": "anchor one"})", "application/json");
        if (!res || res->status != 200) {
          ++failures;
        } else if (res->body != serial->body) {
          ++mismatches;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  CHECK(failures.load() == 0);
  CHECK(mismatches.load() == 0);
  CHECK(gw.metrics().route_requests == 33);
}

TEST_CASE("parallel completions agree on the routed model") {
  Fixture fx;
  gateway::Gateway gw(fx.config);
  const int port = gw.start();

  std::atomic<int> wrong{0};
  std::atomic<int> failures{0};
  std::vector<std::thread> workers;
  for (int t = 0; t < 5; ++t) {
    workers.emplace_back([&, port] {
      auto client = make_client(port);
      for (int i = 0; i < 4; ++i) {
        const auto res =
            client.Post("/v1/chat/completions", chat_body("anchor two"), "application/json");
        if (!res || res->status != 200) {
          ++failures;
        } else if (res->get_header_value("X-ORI-Model") != "model-b" ||
                   res->get_header_value_count("X-ORI-Model") != 1) {
          ++wrong;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  CHECK(failures.load() == 0);
  CHECK(wrong.load() == 0);

  const auto m = gw.metrics();
  CHECK(m.completion_requests == 20);
  CHECK(m.dispatches_by_model.at("model-b") == 20);
  CHECK(gw.usage_records().size() == 20);
}

TEST_CASE("bounded backend slots queue excess requests") {
  testutil::TempDir dir;
  BackendServer backend;
  backend.delay_ms = 120;

  registry::Registry registry;
  registry::ModelCard card;
  card.model_id = "pooled";
  card.endpoint = backend.url("/ok");
  card.benchmark_scores[BenchmarkId("MMLU")] = 50.0;
  registry.register_model(card);
  registry.save(dir.file("registry.json"));
  router::save_artifact(single_cluster_artifact("pooled"), dir.file("artifact.json"));

  gateway::GatewayConfig config;
  config.listen_port = 0;
  config.artifact_path = dir.file("artifact.json").string();
  config.registry_path = dir.file("registry.json").string();
  config.embedder.dim = kDim;
  config.max_concurrent_backends = 1;

  SUBCASE("queue absorbs the burst") {
    config.backend_queue_limit = 8;
    gateway::Gateway gw(config);
    const int port = gw.start();

    std::atomic<int> ok{0};
    std::vector<std::thread> workers;
    for (int t = 0; t < 4; ++t) {
      workers.emplace_back([&, port] {
        auto client = make_client(port);
        const auto res =
            client.Post("/v1/chat/completions", chat_body("hi"), "application/json");
        if (res && res->status == 200) ++ok;
      });
    }
    for (auto& w : workers) w.join();
    CHECK(ok.load() == 4);
    const auto m = gw.metrics();
    CHECK(m.rejected_overload == 0);
    CHECK(m.dispatches_by_model.at("pooled") == 4);
  }

  SUBCASE("zero queue sheds load with 429") {
    config.backend_queue_limit = 0;
    backend.delay_ms = 400;
    gateway::Gateway gw(config);
    const int port = gw.start();

    std::atomic<int> ok{0};
    std::atomic<int> shed{0};
    std::atomic<int> other{0};
    std::vector<std::thread> workers;
    for (int t = 0; t < 4; ++t) {
      workers.emplace_back([&, port] {
        auto client = make_client(port);
        const auto res =
            client.Post("/v1/chat/completions", chat_body("hi"), "application/json");
        if (res && res->status == 200) {
          ++ok;
        } else if (res && res->status == 429) {
          ++shed;
        } else {
          ++other;
        }
      });
    }
    for (auto& w : workers) w.join();
    CHECK(other.load() == 0);
    CHECK(ok.load() >= 1);
    CHECK(shed.load() >= 1);
    CHECK(ok.load() + shed.load() == 4);
    CHECK(gw.metrics().rejected_overload == static_cast<std::uint64_t>(shed.load()));
  }
}

TEST_CASE("artifact hot reload swaps decisions atomically") {
  Fixture fx;
  // Start on a single-cluster artifact that sends everything to model-a.
  router::save_artifact(single_cluster_artifact("model-a"), fx.dir.file("artifact.json"));
  gateway::Gateway gw(fx.config);
  auto client = make_client(gw.start());

  auto res = client.Post("/v1/route", R"({"text": "anchor two"})", "application/json");
  REQUIRE(res);
  CHECK(json::parse(res->body)["model_id"] == "model-a");

  router::save_artifact(two_cluster_artifact(), fx.dir.file("artifact.json"));
  gw.reload_artifact(fx.dir.file("artifact.json"));

  res = client.Post("/v1/route", R"({"text": "anchor two"})", "application/json");
  REQUIRE(res);
  CHECK(json::parse(res->body)["model_id"] == "model-b");
}

TEST_CASE("reload rejects artifacts from a different embedder") {
  Fixture fx;
  gateway::Gateway gw(fx.config);
  gw.start();

  embedding::TestEmbedder smaller(8);
  router::RouterArtifact wrong;
  wrong.fingerprint = smaller.fingerprint();
  wrong.centroid_model.k = 1;
  wrong.centroid_model.centroids = {smaller.embed("hub")};
  wrong.cluster_to_benchmark = {{0, BenchmarkId("MMLU")}};
  wrong.benchmark_to_model = {{BenchmarkId("MMLU"), "model-a"}};
  router::save_artifact(wrong, fx.dir.file("wrong.json"));

  CHECK_THROWS_WITH_AS(gw.reload_artifact(fx.dir.file("wrong.json")),
                       doctest::Contains("test/fnv1a64-splitmix64-box-muller/8"),
                       ValidationError);

  // The old artifact keeps serving after the failed reload.
  auto client = make_client(gw.port());
  const auto res = client.Post("/v1/route", R"({"text": "anchor one"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
}

TEST_CASE("gateway construction validates embedder artifact pairing") {
  Fixture fx;
  fx.config.embedder.dim = 8;  // artifact on disk was built at dim 16
  CHECK_THROWS_WITH_AS(gateway::Gateway(fx.config), doctest::Contains("trained with"),
                       ValidationError);

  fx.config.embedder.dim = kDim;
  fx.config.embedder.provider = "carrier-pigeon";
  CHECK_THROWS_WITH_AS(gateway::Gateway(fx.config), doctest::Contains("unknown provider"),
                       ValidationError);

  fx.config.embedder.provider = "http";
  fx.config.embedder.url.clear();
  CHECK_THROWS_WITH_AS(gateway::Gateway(fx.config), doctest::Contains("needs a url"),
                       ValidationError);
}

TEST_CASE("configured embedding cache is filled by live routing") {
  Fixture fx;
  fx.config.embedder.cache_path = fx.dir.file("cache.jsonl").string();
  gateway::Gateway gw(fx.config);
  auto client = make_client(gw.start());

  client.Post("/v1/route", R"({"text": "anchor one"})", "application/json");
  client.Post("/v1/route", R"({"text": "anchor one"})", "application/json");

  embedding::TestEmbedder embedder(kDim);
  embedding::EmbeddingCache cache(fx.dir.file("cache.jsonl"), embedder.fingerprint());
  CHECK(cache.size() == 1);
  auto hit = cache.get("anchor one");
  REQUIRE(hit.has_value());
  CHECK(*hit == embedder.embed("anchor one"));
}

TEST_CASE("gateway built from a config file serves end to end") {
  Fixture fx;
  json config = {{"listen_port", 0},
                 {"artifact", fx.config.artifact_path},
                 {"registry", fx.config.registry_path},
                 {"embedder", {{"provider", "test"}, {"dim", kDim}}},
                 {"mock_scripts",
                  {{"model-a", fx.config.mock_scripts.at("model-a")},
                   {"model-b", fx.config.mock_scripts.at("model-b")}}}};
  testutil::write_file(fx.dir.file("config.json"), config.dump());

  gateway::Gateway gw(gateway::load_config(fx.dir.file("config.json")));
  auto client = make_client(gw.start());
  const auto res =
      client.Post("/v1/chat/completions", chat_body("anchor one"), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("X-ORI-Model") == "model-a");
}
