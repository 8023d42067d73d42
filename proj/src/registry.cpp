#include "ori/registry.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "http_util.hpp"
#include "ori/errors.hpp"

namespace ori::registry {

namespace {

using nlohmann::json;

constexpr int kRegistryVersion = 1;

void check_card(const ModelCard& card) {
  if (card.model_id.empty()) throw ValidationError("model card needs a model_id");
  if (card.endpoint.empty()) {
    throw ValidationError("model " + card.model_id + ": endpoint must be non-empty");
  }
  for (const auto& [bench, score] : card.benchmark_scores) {
    if (!(score >= 0.0 && score <= 100.0)) {
      std::ostringstream msg;
      msg << "model " << card.model_id << ": score " << score << " for " << bench.name()
          << " outside [0,100]";
      throw ValidationError(msg.str());
    }
  }
  if (card.price_per_mtok_in < 0.0 || card.price_per_mtok_out < 0.0) {
    throw ValidationError("model " + card.model_id + ": prices must be >= 0");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

double completion_cost(std::int64_t prompt_tokens, std::int64_t completion_tokens,
                       const ModelCard& card) {
  if (prompt_tokens < 0 || completion_tokens < 0) {
    throw ValidationError("token counts must be >= 0");
  }
  return (static_cast<double>(prompt_tokens) * card.price_per_mtok_in +
          static_cast<double>(completion_tokens) * card.price_per_mtok_out) /
         1e6;
}

BenchmarkId resolve_benchmark_alias(const BenchmarkId& b) {
  // The corpus-side and leaderboard-side names differ only here; the rest
  // coincide after BenchmarkId's case normalization.
  if (b.name() == "MMLU-PRO") return BenchmarkId("MMLU");
  return b;
}

Registry Registry::shipped() {
  Registry r;
  r.register_model({"Qwen2.5-72B",
                    "mock:Qwen2.5-72B",
                    {{BenchmarkId("MMLU"), 82.3},
                     {BenchmarkId("GPQA"), 49.0},
                     {BenchmarkId("MATH-L5"), 52.7}},
                    0.0,
                    0.0,
                    true});
  r.register_model({"Calme-2.4-78B", "mock:Calme-2.4-78B", {{BenchmarkId("MUSR"), 36.37}},
                    0.0, 0.0, true});
  r.register_model({"Deepseek-67B", "mock:Deepseek-67B", {{BenchmarkId("BBH"), 78.8}},
                    0.0, 0.0, true});
  r.register_model({"Llama-3.3-70B", "mock:Llama-3.3-70B", {{BenchmarkId("IFEVAL"), 92.1}},
                    0.0, 0.0, true});
  return r;
}

Registry Registry::from_json(std::string_view json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("registry: not a JSON object");
  if (j.contains("version") && j["version"].get<int>() != kRegistryVersion) {
    throw ValidationError("registry: unsupported version");
  }
  if (!j.contains("models") || !j["models"].is_object()) {
    throw ParseError("registry: missing models object");
  }
  Registry r;
  for (const auto& [id, m] : j["models"].items()) {
    ModelCard card;
    card.model_id = id;
    try {
      card.endpoint = m.at("endpoint").get<std::string>();
      if (m.contains("benchmark_scores")) {
        for (const auto& [bench, score] : m.at("benchmark_scores").items()) {
          card.benchmark_scores[BenchmarkId(bench)] = score.get<double>();
        }
      }
      card.price_per_mtok_in = m.value("price_per_mtok_in", 0.0);
      card.price_per_mtok_out = m.value("price_per_mtok_out", 0.0);
      card.enabled = m.value("enabled", true);
    } catch (const json::exception& e) {
      throw ParseError("registry: model " + id + ": " + e.what());
    }
    r.register_model(std::move(card));
  }
  return r;
}

Registry Registry::load(const std::filesystem::path& path) {
  try {
    return from_json(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string Registry::to_json() const {
  json models = json::object();
  for (const auto& [id, card] : cards_) {
    json scores = json::object();
    for (const auto& [bench, score] : card.benchmark_scores) scores[bench.name()] = score;
    models[id] = {{"endpoint", card.endpoint},
                  {"benchmark_scores", std::move(scores)},
                  {"price_per_mtok_in", card.price_per_mtok_in},
                  {"price_per_mtok_out", card.price_per_mtok_out},
                  {"enabled", card.enabled}};
  }
  json root = {{"version", kRegistryVersion}, {"models", std::move(models)}};
  return root.dump(2) + "\n";
}

void Registry::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << to_json();
  if (!out.flush()) throw ValidationError("cannot write " + path.string());
}

void Registry::register_model(ModelCard card) {
  check_card(card);
  cards_[card.model_id] = std::move(card);
}

void Registry::set_enabled(const std::string& model_id, bool enabled) {
  auto it = cards_.find(model_id);
  if (it == cards_.end()) throw ValidationError("unknown model: " + model_id);
  it->second.enabled = enabled;
}

const ModelCard& Registry::best_model_for_benchmark(const BenchmarkId& b) const {
  const BenchmarkId bench = resolve_benchmark_alias(b);
  const ModelCard* best = nullptr;
  double best_score = 0.0;
  for (const auto& [id, card] : cards_) {  // map order: ties keep the smallest id
    if (!card.enabled) continue;
    auto it = card.benchmark_scores.find(bench);
    if (it == card.benchmark_scores.end()) continue;
    if (best == nullptr || it->second > best_score) {
      best = &card;
      best_score = it->second;
    }
  }
  if (best == nullptr) {
    throw ValidationError("no enabled model has a score for benchmark " + bench.name());
  }
  return *best;
}

std::optional<std::string> Registry::best_average_model() const {
  const ModelCard* best = nullptr;
  double best_mean = 0.0;
  for (const auto& [id, card] : cards_) {
    if (!card.enabled || card.benchmark_scores.empty()) continue;
    double sum = 0.0;
    for (const auto& [bench, score] : card.benchmark_scores) sum += score;
    const double mean = sum / static_cast<double>(card.benchmark_scores.size());
    if (best == nullptr || mean > best_mean) {
      best = &card;
      best_mean = mean;
    }
  }
  if (best == nullptr) return std::nullopt;
  return best->model_id;
}

const ModelCard* Registry::find(const std::string& model_id) const {
  auto it = cards_.find(model_id);
  return it == cards_.end() ? nullptr : &it->second;
}

std::vector<const ModelCard*> Registry::enabled_models() const {
  std::vector<const ModelCard*> out;
  for (const auto& [id, card] : cards_) {
    if (card.enabled) out.push_back(&card);
  }
  return out;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open mock script: " + path.string());
  std::vector<MockRule> rules;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    std::ostringstream where;
    where << path.string() << ":" << lineno;
    if (j.is_discarded() || !j.is_object()) {
      throw ParseError(where.str() + ": not a JSON object");
    }
    MockRule rule;
    try {
      rule.match = j.value("match", std::string());
      rule.reply = j.at("reply").get<std::string>();
      rule.tokens_out = j.contains("tokens_out") ? j["tokens_out"].get<std::int64_t>()
                                                 : approximate_tokens(rule.reply);
    } catch (const json::exception& e) {
      throw ParseError(where.str() + ": " + e.what());
    }
    if (rule.tokens_out < 0) throw ParseError(where.str() + ": tokens_out must be >= 0");
    rules.push_back(std::move(rule));
  }
  return MockScript(std::move(rules));
}

const MockRule* MockScript::match(std::string_view prompt) const {
  for (const MockRule& rule : rules_) {
    if (rule.match.empty() || prompt.find(rule.match) != std::string_view::npos) {
      return &rule;
    }
  }
  return nullptr;
}

void Dispatcher::register_mock(const std::string& name, MockScript script) {
  mocks_[name] = std::move(script);
}

void Dispatcher::load_mock_script(const std::string& name, const std::filesystem::path& path) {
  register_mock(name, MockScript::load(path));
}

std::string token_env_var(const std::string& model_id) {
  std::string var = "ORI_BACKEND_TOKEN_";
  for (char c : model_id) {
    var += std::isalnum(static_cast<unsigned char>(c))
               ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
               : '_';
  }
  return var;
}

std::int64_t approximate_tokens(std::string_view s) {
  std::int64_t count = 0;
  bool in_word = false;
  for (char c : s) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++count;
    in_word = !space;
  }
  return count;
}

CompletionResult Dispatcher::dispatch_completion(const ModelCard& card, std::string_view prompt,
                                                 const GenerationParams& params) const {
  if (!card.enabled) throw ValidationError("model " + card.model_id + " is disabled");
  if (prompt.empty()) throw ValidationError("model " + card.model_id + ": empty prompt");

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&start] {
    const auto end = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(end - start).count();
    return s > 0.0 ? s : 1e-9;
  };

  if (card.endpoint.rfind("mock:", 0) == 0) {
    const std::string name = card.endpoint.substr(5);
    auto it = mocks_.find(name);
    if (it == mocks_.end()) {
      throw ValidationError("model " + card.model_id + ": no mock script registered for '" +
                            name + "'");
    }
    const MockRule* rule = it->second.match(prompt);
    if (rule == nullptr) {
      throw BackendFormatError("model " + card.model_id + ": mock '" + name +
                               "' has no rule matching the prompt");
    }
    CompletionResult result;
    result.text = rule->reply;
    result.usage.model_id = card.model_id;
    result.usage.prompt_tokens = approximate_tokens(prompt);
    result.usage.completion_tokens = rule->tokens_out;
    result.usage.wall_seconds = elapsed();
    result.usage.cost_usd =
        completion_cost(result.usage.prompt_tokens, result.usage.completion_tokens, card);
    return result;
  }

  const auto parts = detail::split_url(card.endpoint);
  std::string path = parts.path;
  while (path.size() > 1 && path.back() == '/') path.pop_back();
  const std::string suffix = "/chat/completions";
  if (path.size() < suffix.size() || path.compare(path.size() - suffix.size(),
                                                  suffix.size(), suffix) != 0) {
    path = (path == "/" ? "" : path) + suffix;
  }

  httplib::Client client(parts.origin);
  const auto timeout =
      std::chrono::milliseconds(static_cast<long long>(params.timeout_seconds * 1000.0));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (const char* token = std::getenv(token_env_var(card.model_id).c_str())) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  json body = {{"model", card.model_id},
               {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt)}}})},
               {"temperature", params.temperature},
               {"max_tokens", params.max_tokens}};

  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    std::ostringstream msg;
    msg << "model " << card.model_id << ": " << httplib::to_string(res.error()) << " ("
        << card.endpoint << ")";
    if (res.error() == httplib::Error::ConnectionTimeout ||
        res.error() == httplib::Error::Read) {
      throw TimeoutError(msg.str());
    }
    throw TransportError(msg.str());
  }
  if (res->status != 200) {
    std::ostringstream msg;
    msg << "model " << card.model_id << ": backend returned HTTP " << res->status;
    throw TransportError(msg.str());
  }
  json parsed = json::parse(res->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("choices") || !parsed["choices"].is_array() ||
      parsed["choices"].empty()) {
    throw BackendFormatError("model " + card.model_id + ": response lacks choices");
  }
  CompletionResult result;
  try {
    result.text = parsed["choices"][0].at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw BackendFormatError("model " + card.model_id + ": malformed choice: " + e.what());
  }
  result.usage.model_id = card.model_id;
  if (parsed.contains("usage") && parsed["usage"].is_object()) {
    const json& usage = parsed["usage"];
    result.usage.prompt_tokens = usage.value("prompt_tokens", std::int64_t{0});
    result.usage.completion_tokens = usage.value("completion_tokens", std::int64_t{0});
  }
  if (result.usage.prompt_tokens <= 0) result.usage.prompt_tokens = approximate_tokens(prompt);
  if (result.usage.completion_tokens <= 0) {
    result.usage.completion_tokens = approximate_tokens(result.text);
  }
  result.usage.wall_seconds = elapsed();
  result.usage.cost_usd =
      completion_cost(result.usage.prompt_tokens, result.usage.completion_tokens, card);
  return result;
}

}  // namespace ori::registry
