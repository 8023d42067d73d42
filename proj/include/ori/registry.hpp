#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ori/benchmark.hpp"

namespace ori::registry {

/// One routable backend: identity, endpoint, leaderboard scores and pricing.
/// Endpoints are http(s) URLs or "mock:<name>" for scripted offline backends.
struct ModelCard {
  std::string model_id;
  std::string endpoint;
  std::map<BenchmarkId, double> benchmark_scores;  // 0..100
  double price_per_mtok_in = 0.0;                  // USD per million tokens
  double price_per_mtok_out = 0.0;
  bool enabled = true;

  bool operator==(const ModelCard&) const = default;
};

struct UsageRecord {
  std::string model_id;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double wall_seconds = 0.0;
  double cost_usd = 0.0;
};

/// Per-token cost of one call: (in * p_in + out * p_out) / 1e6.
double completion_cost(std::int64_t prompt_tokens, std::int64_t completion_tokens,
                       const ModelCard& card);

/// Maps corpus benchmark names onto registry benchmark names (the paper uses
/// both): MMLU-PRO -> MMLU; the remaining pairs collapse under case
/// normalization. Unknown names pass through unchanged.
BenchmarkId resolve_benchmark_alias(const BenchmarkId& b);

/// Model card collection with value semantics. Readers share immutable
/// snapshots (see gateway); mutation happens on a copy that is swapped in.
class Registry {
 public:
  /// The shipped default registry: exactly the published leaderboard mapping
  /// (see data/registry.json), mock endpoints, zero prices.
  static Registry shipped();

  static Registry from_json(std::string_view json_text);
  static Registry load(const std::filesystem::path& path);
  /// Canonical JSON: UTF-8, objects keyed and sorted by model id. Bit-exact
  /// across save/load round trips.
  std::string to_json() const;
  void save(const std::filesystem::path& path) const;

  /// Upsert by model_id. Rejects invariant violations (scores outside
  /// [0,100], negative prices, empty id/endpoint).
  void register_model(ModelCard card);
  /// Disabling removes the model from every argmax pool. Unknown id is an error.
  void set_enabled(const std::string& model_id, bool enabled);

  /// argmax over enabled models of benchmark_scores[b] (after alias
  /// resolution); ties go to the lexicographically smallest model_id. Throws
  /// ValidationError when no enabled model has a score for b.
  const ModelCard& best_model_for_benchmark(const BenchmarkId& b) const;

  /// Enabled model with the highest mean score over its scored benchmarks;
  /// used as the routing fallback. Empty when nothing is enabled and scored.
  std::optional<std::string> best_average_model() const;

  const ModelCard* find(const std::string& model_id) const;
  std::vector<const ModelCard*> enabled_models() const;
  std::size_t size() const { return cards_.size(); }
  const std::map<std::string, ModelCard>& cards() const { return cards_; }

  bool operator==(const Registry&) const = default;

 private:
  std::map<std::string, ModelCard> cards_;
};

/// One scripted reply rule; `match` is a substring of the prompt ("" matches
/// everything).
struct MockRule {
  std::string match;
  std::string reply;
  std::int64_t tokens_out = 0;
};

/// Deterministic scripted backend, loaded from JSONL:
/// {"match": substring-or-id, "reply": str, "tokens_out": int}.
class MockScript {
 public:
  MockScript() = default;
  explicit MockScript(std::vector<MockRule> rules) : rules_(std::move(rules)) {}
  static MockScript load(const std::filesystem::path& path);

  /// First rule whose match occurs in the prompt; null when none applies.
  const MockRule* match(std::string_view prompt) const;

 private:
  std::vector<MockRule> rules_;
};

struct GenerationParams {
  double temperature = 0.0;
  std::int64_t max_tokens = 512;
  double timeout_seconds = 120.0;
};

struct CompletionResult {
  std::string text;
  UsageRecord usage;
};

/// Sends chat completions to model backends: OpenAI-compatible POST
/// <endpoint>/chat/completions with bearer auth from
/// ORI_BACKEND_TOKEN_<MODELID>, or a scripted mock for "mock:<name>"
/// endpoints. Measures wall time and computes cost per the pricing fields.
class Dispatcher {
 public:
  void register_mock(const std::string& name, MockScript script);
  void load_mock_script(const std::string& name, const std::filesystem::path& path);

  /// Throws TransportError / TimeoutError / BackendFormatError, each naming
  /// the model. The card must be enabled.
  CompletionResult dispatch_completion(const ModelCard& card, std::string_view prompt,
                                       const GenerationParams& params = {}) const;

 private:
  std::map<std::string, MockScript> mocks_;
};

/// Environment variable carrying the bearer token for a model id
/// (non-alphanumerics mapped to '_', uppercased).
std::string token_env_var(const std::string& model_id);

/// Whitespace-delimited token count; the estimate used when a backend omits
/// usage numbers and for mock prompts.
std::int64_t approximate_tokens(std::string_view s);

}  // namespace ori::registry
