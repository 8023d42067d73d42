#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "ori/errors.hpp"
#include "ori/registry.hpp"
#include "support/test_util.hpp"

using namespace ori;
using json = nlohmann::json;
using testutil::TempDir;

namespace {

registry::ModelCard make_card(std::string id, double mmlu_score,
                              std::string endpoint = "") {
  registry::ModelCard card;
  card.model_id = id;
  card.endpoint = endpoint.empty() ? "mock:" + id : endpoint;
  card.benchmark_scores[BenchmarkId("MMLU")] = mmlu_score;
  return card;
}

/// Chat-completion endpoint used by the HTTP dispatch tests.
class ChatServer {
 public:
  ChatServer() {
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   last_path = req.path;
                   last_auth = req.get_header_value("Authorization");
                   const json body = json::parse(req.body);
                   last_model = body.value("model", "");
                   json reply{
                       {"choices",
                        json::array({{{"message", {{"role", "assistant"},
                                                   {"content", "The answer is C"}}}}})},
                       {"usage", {{"prompt_tokens", 100}, {"completion_tokens", 50}}}};
                   res.set_content(reply.dump(), "application/json");
                 });
    server_.Post("/plain/chat/completions",
                 [](const httplib::Request&, httplib::Response& res) {
                   // No usage block: the client falls back to approximation.
                   json reply{{"choices", json::array({{{"message",
                                                         {{"content", "two words"}}}}})}};
                   res.set_content(reply.dump(), "application/json");
                 });
    server_.Post("/error/chat/completions",
                 [](const httplib::Request&, httplib::Response& res) {
                   res.status = 503;
                   res.set_content("overloaded", "text/plain");
                 });
    server_.Post("/garbled/chat/completions",
                 [](const httplib::Request&, httplib::Response& res) {
                   res.set_content("{\"nope\": 1}", "application/json");
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ChatServer() {
    server_.stop();
    thread_.join();
  }

  std::string origin() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::string last_path;
  std::string last_auth;
  std::string last_model;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("shipped registry carries the published leaderboard values") {
  const auto reg = registry::Registry::shipped();
  CHECK(reg.size() == 4);

  const auto* qwen = reg.find("Qwen2.5-72B");
  REQUIRE(qwen != nullptr);
  CHECK(qwen->benchmark_scores.at(BenchmarkId("MMLU")) == doctest::Approx(82.3));
  CHECK(qwen->benchmark_scores.at(BenchmarkId("GPQA")) == doctest::Approx(49.0));
  CHECK(qwen->benchmark_scores.at(BenchmarkId("MATH-L5")) == doctest::Approx(52.7));

  const auto* calme = reg.find("Calme-2.4-78B");
  REQUIRE(calme != nullptr);
  CHECK(calme->benchmark_scores.at(BenchmarkId("MUSR")) == doctest::Approx(36.37));

  const auto* deepseek = reg.find("Deepseek-67B");
  REQUIRE(deepseek != nullptr);
  CHECK(deepseek->benchmark_scores.at(BenchmarkId("BBH")) == doctest::Approx(78.8));

  const auto* llama = reg.find("Llama-3.3-70B");
  REQUIRE(llama != nullptr);
  CHECK(llama->benchmark_scores.at(BenchmarkId("IFEVAL")) == doctest::Approx(92.1));

  for (const auto& [id, card] : reg.cards()) {
    CHECK(card.enabled);
    CHECK(card.endpoint == "mock:" + id);
    CHECK(card.price_per_mtok_in == 0.0);
    CHECK(card.price_per_mtok_out == 0.0);
  }
}

TEST_CASE("best_model_for_benchmark follows the leaderboard") {
  const auto reg = registry::Registry::shipped();
  CHECK(reg.best_model_for_benchmark(BenchmarkId("MMLU")).model_id == "Qwen2.5-72B");
  CHECK(reg.best_model_for_benchmark(BenchmarkId("BBH")).model_id == "Deepseek-67B");
  CHECK(reg.best_model_for_benchmark(BenchmarkId("IFEVAL")).model_id == "Llama-3.3-70B");
  CHECK(reg.best_model_for_benchmark(BenchmarkId("MUSR")).model_id == "Calme-2.4-78B");
  CHECK(reg.best_model_for_benchmark(BenchmarkId("GPQA")).model_id == "Qwen2.5-72B");
  CHECK(reg.best_model_for_benchmark(BenchmarkId("MATH-L5")).model_id == "Qwen2.5-72B");
  // Corpus name MMLU-PRO resolves to the registry's MMLU column.
  CHECK(reg.best_model_for_benchmark(BenchmarkId("MMLU-PRO")).model_id == "Qwen2.5-72B");
  CHECK_THROWS_AS(reg.best_model_for_benchmark(BenchmarkId("UNKNOWN")), ValidationError);
}

TEST_CASE("benchmark aliases collapse the paper's two naming schemes") {
  CHECK(registry::resolve_benchmark_alias(BenchmarkId("MMLU-PRO")) == BenchmarkId("MMLU"));
  // MuSR/IFEval/Math-L5 already collapse under uppercase normalization.
  CHECK(BenchmarkId("MuSR") == BenchmarkId("MUSR"));
  CHECK(BenchmarkId("IFEval") == BenchmarkId("IFEVAL"));
  CHECK(BenchmarkId("Math-L5") == BenchmarkId("MATH-L5"));
  CHECK(registry::resolve_benchmark_alias(BenchmarkId("GPQA")) == BenchmarkId("GPQA"));
  CHECK(registry::resolve_benchmark_alias(BenchmarkId("NOVEL")) == BenchmarkId("NOVEL"));
}

TEST_CASE("disabling a model removes it from every argmax pool") {
  auto reg = registry::Registry::shipped();
  reg.set_enabled("Qwen2.5-72B", false);
  // Nothing else in the shipped registry scores MMLU.
  CHECK_THROWS_AS(reg.best_model_for_benchmark(BenchmarkId("MMLU")), ValidationError);

  // With a second scorer present, disabling hands the argmax to it.
  auto extended = registry::Registry::shipped();
  extended.register_model(make_card("Runner-Up", 70.0));
  CHECK(extended.best_model_for_benchmark(BenchmarkId("MMLU")).model_id == "Qwen2.5-72B");
  extended.set_enabled("Qwen2.5-72B", false);
  CHECK(extended.best_model_for_benchmark(BenchmarkId("MMLU")).model_id == "Runner-Up");
  extended.set_enabled("Qwen2.5-72B", true);
  CHECK(extended.best_model_for_benchmark(BenchmarkId("MMLU")).model_id == "Qwen2.5-72B");

  CHECK_THROWS_AS(reg.set_enabled("No-Such-Model", true), ValidationError);
}

TEST_CASE("score ties break toward the smaller model id") {
  registry::Registry reg;
  reg.register_model(make_card("bravo", 50.0));
  reg.register_model(make_card("alpha", 50.0));
  reg.register_model(make_card("charlie", 49.0));
  CHECK(reg.best_model_for_benchmark(BenchmarkId("MMLU")).model_id == "alpha");
}

TEST_CASE("argmax is invariant under uniform positive rescaling") {
  registry::Registry reg;
  reg.register_model(make_card("a", 80.0));
  reg.register_model(make_card("b", 60.0));
  reg.register_model(make_card("c", 90.0));
  const std::string before = reg.best_model_for_benchmark(BenchmarkId("MMLU")).model_id;

  registry::Registry scaled;
  for (const auto& [id, card] : reg.cards()) {
    auto copy = card;
    for (auto& [bench, score] : copy.benchmark_scores) score *= 0.5;
    scaled.register_model(copy);
  }
  CHECK(scaled.best_model_for_benchmark(BenchmarkId("MMLU")).model_id == before);
}

TEST_CASE("register_model validates and upserts") {
  registry::Registry reg;
  reg.register_model(make_card("m", 50.0));
  CHECK(reg.size() == 1);
  reg.register_model(make_card("m", 70.0));  // replace
  CHECK(reg.size() == 1);
  CHECK(reg.find("m")->benchmark_scores.at(BenchmarkId("MMLU")) == doctest::Approx(70.0));

  CHECK_THROWS_AS(reg.register_model(make_card("over", 101.0)), ValidationError);
  CHECK_THROWS_AS(reg.register_model(make_card("under", -1.0)), ValidationError);
  CHECK_THROWS_AS(reg.register_model(make_card("", 10.0)), ValidationError);
  auto no_endpoint = make_card("m2", 10.0);
  no_endpoint.endpoint = "";
  CHECK_THROWS_AS(reg.register_model(no_endpoint), ValidationError);
  auto priced = make_card("m3", 10.0);
  priced.price_per_mtok_in = -0.01;
  CHECK_THROWS_AS(reg.register_model(priced), ValidationError);
}

TEST_CASE("best_average_model prefers the highest mean over scored benchmarks") {
  const auto reg = registry::Registry::shipped();
  // Means: Qwen (82.3+49+52.7)/3 = 61.33, Calme 36.37, Deepseek 78.8,
  // Llama 92.1. Llama wins on its single scored benchmark.
  auto best = reg.best_average_model();
  REQUIRE(best.has_value());
  CHECK(*best == "Llama-3.3-70B");

  auto crippled = reg;
  crippled.set_enabled("Llama-3.3-70B", false);
  CHECK(*crippled.best_average_model() == "Deepseek-67B");

  registry::Registry empty;
  CHECK(!empty.best_average_model().has_value());

  auto all_off = registry::Registry::shipped();
  for (const auto& [id, card] : all_off.cards()) all_off.set_enabled(id, false);
  CHECK(!all_off.best_average_model().has_value());
}

TEST_CASE("registry serialization round-trips bit-exactly") {
  auto reg = registry::Registry::shipped();
  auto card = make_card("Custom-1B", 12.5, "https://api.example.com/v1");
  card.price_per_mtok_in = 0.6;
  card.price_per_mtok_out = 1.2;
  card.enabled = false;
  reg.register_model(card);

  const std::string first = reg.to_json();
  const auto reloaded = registry::Registry::from_json(first);
  CHECK(reloaded == reg);
  CHECK(reloaded.to_json() == first);

  TempDir tmp;
  reg.save(tmp.file("reg.json"));
  CHECK(registry::Registry::load(tmp.file("reg.json")) == reg);
  CHECK(testutil::read_file(tmp.file("reg.json")) == first);
}

TEST_CASE("shipped registry matches the checked-in data file") {
  const std::string on_disk =
      testutil::read_file(testutil::data_dir() / "registry.json");
  CHECK(on_disk == registry::Registry::shipped().to_json());
}

TEST_CASE("registry json validation") {
  CHECK_THROWS_AS(registry::Registry::from_json("not json"), ParseError);
  CHECK_THROWS_AS(registry::Registry::from_json("[]"), ParseError);
  CHECK_THROWS_AS(registry::Registry::from_json("{\"version\": 2, \"models\": {}}"),
                  ValidationError);
  CHECK_THROWS_AS(registry::Registry::from_json("{\"version\": 1}"), ParseError);
  // Score out of range inside the file is rejected on load.
  const std::string bad = R"({"version":1,"models":{"m":{"endpoint":"mock:m",
    "benchmark_scores":{"MMLU":140.0}}}})";
  CHECK_THROWS_AS(registry::Registry::from_json(bad), ValidationError);
}

TEST_CASE("completion_cost applies the per-MTok formula") {
  registry::ModelCard card;
  card.model_id = "m";
  card.endpoint = "mock:m";
  card.price_per_mtok_in = 1.0;
  card.price_per_mtok_out = 2.0;
  CHECK(registry::completion_cost(100, 50, card) == doctest::Approx(0.0002));
  CHECK(registry::completion_cost(0, 0, card) == 0.0);
  CHECK_THROWS_AS(registry::completion_cost(-1, 0, card), ValidationError);
}

TEST_CASE("token_env_var uppercases and strips punctuation") {
  CHECK(registry::token_env_var("Qwen2.5-72B") == "ORI_BACKEND_TOKEN_QWEN2_5_72B");
  CHECK(registry::token_env_var("llama") == "ORI_BACKEND_TOKEN_LLAMA");
}

TEST_CASE("approximate_tokens counts whitespace-delimited words") {
  CHECK(registry::approximate_tokens("one two  three") == 3);
  CHECK(registry::approximate_tokens("") == 0);
  CHECK(registry::approximate_tokens("   ") == 0);
  CHECK(registry::approximate_tokens("single") == 1);
}

TEST_CASE("mock scripts answer deterministically") {
  TempDir tmp;
  testutil::write_file(tmp.file("script.jsonl"),
                       R"({"match": "capital of France", "reply": "B", "tokens_out": 7})"
                       "\n"
                       R"({"match": "", "reply": "I do not know"})"
                       "\n");
  registry::Dispatcher dispatcher;
  dispatcher.load_mock_script("echo", tmp.file("script.jsonl"));

  registry::ModelCard card;
  card.model_id = "echo-model";
  card.endpoint = "mock:echo";
  card.price_per_mtok_in = 1.0;
  card.price_per_mtok_out = 2.0;

  const auto result =
      dispatcher.dispatch_completion(card, "What is the capital of France? A or B");
  CHECK(result.text == "B");
  CHECK(result.usage.model_id == "echo-model");
  CHECK(result.usage.prompt_tokens == 9);   // whitespace-token approximation
  CHECK(result.usage.completion_tokens == 7);  // from the script
  CHECK(result.usage.wall_seconds > 0.0);
  CHECK(result.usage.cost_usd ==
        doctest::Approx((9 * 1.0 + 7 * 2.0) / 1e6));

  // Fallback rule matches anything; tokens default to the reply word count.
  const auto fallback = dispatcher.dispatch_completion(card, "unrelated prompt");
  CHECK(fallback.text == "I do not know");
  CHECK(fallback.usage.completion_tokens == 4);

  // Same prompt, same reply.
  const auto again =
      dispatcher.dispatch_completion(card, "What is the capital of France? A or B");
  CHECK(again.text == result.text);
}

TEST_CASE("mock dispatch failure modes") {
  TempDir tmp;
  testutil::write_file(tmp.file("narrow.jsonl"),
                       R"({"match": "only this", "reply": "ok"})"
                       "\n");
  registry::Dispatcher dispatcher;
  dispatcher.load_mock_script("narrow", tmp.file("narrow.jsonl"));

  registry::ModelCard card;
  card.model_id = "m";
  card.endpoint = "mock:narrow";

  // No rule matches the prompt.
  CHECK_THROWS_AS(dispatcher.dispatch_completion(card, "different text"),
                  BackendFormatError);

  card.endpoint = "mock:unregistered";
  CHECK_THROWS_AS(dispatcher.dispatch_completion(card, "only this"), ValidationError);

  card.endpoint = "mock:narrow";
  card.enabled = false;
  CHECK_THROWS_AS(dispatcher.dispatch_completion(card, "only this"), ValidationError);
  card.enabled = true;
  CHECK_THROWS_AS(dispatcher.dispatch_completion(card, ""), ValidationError);
}

TEST_CASE("mock script parse errors name the line") {
  TempDir tmp;
  testutil::write_file(tmp.file("bad.jsonl"),
                       R"({"match": "x", "reply": "y"})"
                       "\n"
                       R"({"match": "z"})"
                       "\n");
  try {
    registry::MockScript::load(tmp.file("bad.jsonl"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }

  testutil::write_file(tmp.file("neg.jsonl"),
                       R"({"match": "", "reply": "r", "tokens_out": -3})"
                       "\n");
  CHECK_THROWS_AS(registry::MockScript::load(tmp.file("neg.jsonl")), ParseError);
}

TEST_CASE("http dispatch speaks the OpenAI protocol") {
  ChatServer server;
  registry::Dispatcher dispatcher;

  registry::ModelCard card;
  card.model_id = "Remote-Model";
  card.endpoint = server.origin() + "/v1";
  card.price_per_mtok_in = 2.0;
  card.price_per_mtok_out = 4.0;

  setenv("ORI_BACKEND_TOKEN_REMOTE_MODEL", "sekrit", 1);
  const auto result = dispatcher.dispatch_completion(card, "pick a letter");
  unsetenv("ORI_BACKEND_TOKEN_REMOTE_MODEL");

  CHECK(result.text == "The answer is C");
  CHECK(server.last_path == "/v1/chat/completions");  // suffix appended once
  CHECK(server.last_auth == "Bearer sekrit");
  CHECK(server.last_model == "Remote-Model");
  CHECK(result.usage.prompt_tokens == 100);
  CHECK(result.usage.completion_tokens == 50);
  CHECK(result.usage.cost_usd == doctest::Approx((100 * 2.0 + 50 * 4.0) / 1e6));
  CHECK(result.usage.wall_seconds > 0.0);

  // Endpoint already ending in the suffix is not doubled.
  card.endpoint = server.origin() + "/v1/chat/completions";
  const auto direct = dispatcher.dispatch_completion(card, "again");
  CHECK(direct.text == "The answer is C");
  CHECK(server.last_path == "/v1/chat/completions");
}

TEST_CASE("http dispatch reports failures with the model name") {
  ChatServer server;
  registry::Dispatcher dispatcher;
  registry::ModelCard card;
  card.model_id = "Flaky-Model";

  card.endpoint = server.origin() + "/plain";
  const auto approx = dispatcher.dispatch_completion(card, "two words in, two out");
  CHECK(approx.usage.prompt_tokens == 5);     // approximated
  CHECK(approx.usage.completion_tokens == 2); // approximated from "two words"

  card.endpoint = server.origin() + "/error";
  CHECK_THROWS_WITH_AS(dispatcher.dispatch_completion(card, "x"),
                       doctest::Contains("Flaky-Model"), TransportError);

  card.endpoint = server.origin() + "/garbled";
  CHECK_THROWS_AS(dispatcher.dispatch_completion(card, "x"), BackendFormatError);

  card.endpoint = "http://127.0.0.1:1";
  registry::GenerationParams params;
  params.timeout_seconds = 0.5;
  CHECK_THROWS_WITH_AS(dispatcher.dispatch_completion(card, "x", params),
                       doctest::Contains("Flaky-Model"), TransportError);
}
