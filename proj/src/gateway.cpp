#include "ori/gateway.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "ori/errors.hpp"

namespace ori::gateway {

namespace {

using nlohmann::json;

// Puts the persistent cache in front of any provider so both endpoints and
// repeated prompts reuse vectors.
class CachingProvider final : public embedding::Provider {
 public:
  CachingProvider(std::shared_ptr<embedding::Provider> inner,
                  std::shared_ptr<embedding::EmbeddingCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}

  embedding::EmbedderFingerprint fingerprint() const override { return inner_->fingerprint(); }

  std::vector<double> embed(std::string_view text) override {
    if (auto hit = cache_->get(text)) return std::move(*hit);
    std::vector<double> vec = inner_->embed(text);
    cache_->put(text, vec);
    return vec;
  }

 private:
  std::shared_ptr<embedding::Provider> inner_;
  std::shared_ptr<embedding::EmbeddingCache> cache_;
};

std::shared_ptr<embedding::Provider> make_provider(const EmbedderConfig& cfg) {
  std::shared_ptr<embedding::Provider> provider;
  if (cfg.provider == "test") {
    provider = std::make_shared<embedding::TestEmbedder>(cfg.dim);
  } else if (cfg.provider == "http") {
    if (cfg.url.empty()) throw ValidationError("embedder: http provider needs a url");
    provider = std::make_shared<embedding::HttpEmbedder>(cfg.url, cfg.model, cfg.dim);
  } else if (cfg.provider == "file") {
    if (cfg.file_path.empty()) throw ValidationError("embedder: file provider needs a file");
    provider = std::make_shared<embedding::FileEmbedder>(cfg.file_path);
  } else {
    throw ValidationError("embedder: unknown provider '" + cfg.provider + "'");
  }
  if (!cfg.cache_path.empty()) {
    auto cache =
        std::make_shared<embedding::EmbeddingCache>(cfg.cache_path, provider->fingerprint());
    provider = std::make_shared<CachingProvider>(std::move(provider), std::move(cache));
  }
  return provider;
}

void reply_error(httplib::Response& res, int status, const std::string& message,
                 const std::string& model_id = {}) {
  json j;
  j["error"] = message;
  if (!model_id.empty()) j["model_id"] = model_id;
  res.status = status;
  res.set_content(j.dump() + "\n", "application/json");
}

// Last user message of an OpenAI-style chat payload; falls back to the last
// message of any role.
std::string extract_prompt(const json& body) {
  if (!body.is_object() || !body.contains("messages") || !body["messages"].is_array() ||
      body["messages"].empty()) {
    return {};
  }
  const json& messages = body["messages"];
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->is_object() && it->value("role", "") == "user" && (*it)["content"].is_string()) {
      return (*it)["content"].get<std::string>();
    }
  }
  const json& last = messages.back();
  if (last.is_object() && last.contains("content") && last["content"].is_string()) {
    return last["content"].get<std::string>();
  }
  return {};
}

}  // namespace

GatewayConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ParseError(path.string() + ": not a JSON object");
  }
  GatewayConfig cfg;
  try {
    cfg.listen_host = j.value("listen_host", cfg.listen_host);
    cfg.listen_port = j.value("listen_port", cfg.listen_port);
    cfg.artifact_path = j.value("artifact", std::string());
    cfg.registry_path = j.value("registry", std::string());
    if (j.contains("embedder")) {
      const json& e = j["embedder"];
      cfg.embedder.provider = e.value("provider", cfg.embedder.provider);
      cfg.embedder.model = e.value("model", std::string());
      cfg.embedder.dim = e.value("dim", cfg.embedder.dim);
      cfg.embedder.url = e.value("url", std::string());
      cfg.embedder.file_path = e.value("file", std::string());
      cfg.embedder.cache_path = e.value("cache", std::string());
    }
    cfg.backend_timeout_seconds = j.value("backend_timeout_seconds", cfg.backend_timeout_seconds);
    cfg.max_concurrent_backends =
        j.value("max_concurrent_backends", cfg.max_concurrent_backends);
    cfg.backend_queue_limit = j.value("backend_queue_limit", cfg.backend_queue_limit);
    cfg.metrics_enabled = j.value("metrics_enabled", cfg.metrics_enabled);
    if (j.contains("mock_scripts")) {
      for (const auto& [name, p] : j["mock_scripts"].items()) {
        cfg.mock_scripts[name] = p.get<std::string>();
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (cfg.max_concurrent_backends < 1) {
    throw ValidationError(path.string() + ": max_concurrent_backends must be >= 1");
  }
  if (cfg.backend_timeout_seconds <= 0.0) {
    throw ValidationError(path.string() + ": backend_timeout_seconds must be > 0");
  }
  return cfg;
}

struct Gateway::State {
  GatewayConfig config;
  std::shared_ptr<embedding::Provider> provider;
  registry::Dispatcher dispatcher;

  // Immutable snapshots; the mutex guards only the pointer swap.
  mutable std::mutex snapshot_mutex;
  std::shared_ptr<const router::RouterArtifact> artifact;
  std::shared_ptr<const registry::Registry> registry;

  mutable std::mutex metrics_mutex;
  MetricsSnapshot counters;
  std::vector<registry::UsageRecord> usage_log;

  // Bounded in-flight backend calls; excess waiters queue up to the limit.
  std::mutex backpressure_mutex;
  std::condition_variable backpressure_cv;
  std::size_t inflight = 0;
  std::size_t queued = 0;

  httplib::Server server;
  std::thread serve_thread;

  std::pair<std::shared_ptr<const router::RouterArtifact>,
            std::shared_ptr<const registry::Registry>>
  snapshot() const {
    std::lock_guard lock(snapshot_mutex);
    return {artifact, registry};
  }
};

Gateway::Gateway(GatewayConfig config) : state_(std::make_unique<State>()) {
  state_->config = std::move(config);
  const GatewayConfig& cfg = state_->config;
  state_->provider = make_provider(cfg.embedder);
  state_->registry = std::make_shared<const registry::Registry>(
      cfg.registry_path.empty() ? registry::Registry::shipped()
                                : registry::Registry::load(cfg.registry_path));
  for (const auto& [name, path] : cfg.mock_scripts) {
    state_->dispatcher.load_mock_script(name, path);
  }
  if (!cfg.artifact_path.empty()) reload_artifact(cfg.artifact_path);
}

Gateway::~Gateway() { stop(); }

void Gateway::reload_artifact(const std::filesystem::path& path) {
  auto next = std::make_shared<const router::RouterArtifact>(router::load_artifact(path));
  const auto fp = state_->provider->fingerprint();
  if (next->fingerprint != fp) {
    throw ValidationError("artifact " + path.string() + " was trained with " +
                          next->fingerprint.to_string() + " but the gateway embeds with " +
                          fp.to_string());
  }
  std::lock_guard lock(state_->snapshot_mutex);
  state_->artifact = std::move(next);
}

int Gateway::start() {
  State* s = state_.get();
  if (s->serve_thread.joinable()) throw Error("gateway already started");

  s->server.Post("/v1/route", [s](const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard lock(s->metrics_mutex);
      ++s->counters.requests_total;
      ++s->counters.route_requests;
    }
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("text") ||
        !body["text"].is_string() || body["text"].get<std::string>().empty()) {
      reply_error(res, 400, "body must be a JSON object with non-empty \"text\"");
      return;
    }
    const auto [artifact, registry] = s->snapshot();
    if (!artifact) {
      reply_error(res, 503, "no routing artifact loaded");
      return;
    }
    try {
      const router::RoutingDecision decision =
          router::route(*artifact, *registry, body["text"].get<std::string>(), *s->provider);
      if (decision.fallback_used) {
        std::lock_guard lock(s->metrics_mutex);
        ++s->counters.fallbacks_total;
      }
      res.set_content(router::decision_to_json(decision) + "\n", "application/json");
    } catch (const Error& e) {
      reply_error(res, 500, e.what());
    }
  });

  s->server.Post("/v1/chat/completions",
                 [s](const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard lock(s->metrics_mutex);
      ++s->counters.requests_total;
      ++s->counters.completion_requests;
    }
    json body = json::parse(req.body, nullptr, false);
    const std::string prompt = body.is_discarded() ? std::string() : extract_prompt(body);
    if (prompt.empty()) {
      reply_error(res, 400, "request must carry a user message with non-empty content");
      return;
    }
    const auto [artifact, registry] = s->snapshot();
    if (!artifact) {
      reply_error(res, 503, "no routing artifact loaded");
      return;
    }

    router::RoutingDecision decision;
    try {
      decision = router::route(*artifact, *registry, prompt, *s->provider);
    } catch (const ValidationError& e) {
      reply_error(res, 503, e.what());
      return;
    } catch (const Error& e) {
      reply_error(res, 500, e.what());
      return;
    }
    const registry::ModelCard* card = registry->find(decision.model_id);
    if (card == nullptr) {
      reply_error(res, 503, "routed model " + decision.model_id + " is not in the registry",
                  decision.model_id);
      return;
    }

    {
      std::unique_lock lock(s->backpressure_mutex);
      if (s->inflight >= s->config.max_concurrent_backends) {
        if (s->queued >= s->config.backend_queue_limit) {
          lock.unlock();
          std::lock_guard mlock(s->metrics_mutex);
          ++s->counters.rejected_overload;
          reply_error(res, 429, "backend queue full");
          return;
        }
        ++s->queued;
        s->backpressure_cv.wait(
            lock, [s] { return s->inflight < s->config.max_concurrent_backends; });
        --s->queued;
      }
      ++s->inflight;
    }
    struct SlotRelease {
      State* s;
      ~SlotRelease() {
        {
          std::lock_guard lock(s->backpressure_mutex);
          --s->inflight;
        }
        s->backpressure_cv.notify_one();
      }
    } release{s};

    registry::GenerationParams params;
    params.timeout_seconds = s->config.backend_timeout_seconds;
    registry::CompletionResult completion;
    try {
      completion = s->dispatcher.dispatch_completion(*card, prompt, params);
    } catch (const TimeoutError& e) {
      reply_error(res, 504, e.what(), decision.model_id);
      return;
    } catch (const TransportError& e) {
      reply_error(res, 502, e.what(), decision.model_id);
      return;
    } catch (const BackendFormatError& e) {
      reply_error(res, 502, e.what(), decision.model_id);
      return;
    } catch (const Error& e) {
      reply_error(res, 500, e.what(), decision.model_id);
      return;
    }

    {
      std::lock_guard lock(s->metrics_mutex);
      if (decision.fallback_used) ++s->counters.fallbacks_total;
      ++s->counters.dispatches_by_model[decision.model_id];
      s->counters.total_cost_usd += completion.usage.cost_usd;
      s->counters.total_prompt_tokens += completion.usage.prompt_tokens;
      s->counters.total_completion_tokens += completion.usage.completion_tokens;
      s->usage_log.push_back(completion.usage);
    }

    json reply = {
        {"id", "ori-" + decision.prompt_id},
        {"object", "chat.completion"},
        {"model", decision.model_id},
        {"choices",
         json::array({{{"index", 0},
                       {"message", {{"role", "assistant"}, {"content", completion.text}}},
                       {"finish_reason", "stop"}}})},
        {"usage",
         {{"prompt_tokens", completion.usage.prompt_tokens},
          {"completion_tokens", completion.usage.completion_tokens},
          {"total_tokens",
           completion.usage.prompt_tokens + completion.usage.completion_tokens}}}};
    res.set_header("X-ORI-Model", decision.model_id);
    res.set_header("X-ORI-Cluster", std::to_string(decision.cluster));
    res.set_content(reply.dump() + "\n", "application/json");
  });

  s->server.Get("/metrics", [s](const httplib::Request&, httplib::Response& res) {
    if (!s->config.metrics_enabled) {
      reply_error(res, 404, "metrics disabled");
      return;
    }
    const MetricsSnapshot m = [s] {
      std::lock_guard lock(s->metrics_mutex);
      return s->counters;
    }();
    std::ostringstream out;
    out.precision(17);
    out << "ori_requests_total " << m.requests_total << "\n";
    out << "ori_route_requests_total " << m.route_requests << "\n";
    out << "ori_completion_requests_total " << m.completion_requests << "\n";
    out << "ori_fallbacks_total " << m.fallbacks_total << "\n";
    out << "ori_rejected_overload_total " << m.rejected_overload << "\n";
    out << "ori_prompt_tokens_total " << m.total_prompt_tokens << "\n";
    out << "ori_completion_tokens_total " << m.total_completion_tokens << "\n";
    out << "ori_cost_usd_total " << m.total_cost_usd << "\n";
    for (const auto& [model, count] : m.dispatches_by_model) {
      out << "ori_dispatches_total{model=\"" << model << "\"} " << count << "\n";
    }
    res.set_content(out.str(), "text/plain");
  });

  int port = s->config.listen_port;
  if (port == 0) {
    port = s->server.bind_to_any_port(s->config.listen_host);
    if (port <= 0) throw TransportError("cannot bind " + s->config.listen_host);
  } else if (!s->server.bind_to_port(s->config.listen_host, port)) {
    throw TransportError("cannot bind " + s->config.listen_host + ":" + std::to_string(port));
  }
  s->serve_thread = std::thread([s] { s->server.listen_after_bind(); });
  for (int i = 0; i < 500 && !s->server.is_running(); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  if (!s->server.is_running()) {
    s->server.stop();
    if (s->serve_thread.joinable()) s->serve_thread.join();
    throw TransportError("gateway failed to start listening");
  }
  port_ = port;
  return port;
}

void Gateway::stop() {
  if (!state_) return;
  if (state_->serve_thread.joinable()) {
    state_->server.stop();
    state_->serve_thread.join();
  }
}

MetricsSnapshot Gateway::metrics() const {
  std::lock_guard lock(state_->metrics_mutex);
  return state_->counters;
}

std::vector<registry::UsageRecord> Gateway::usage_records() const {
  std::lock_guard lock(state_->metrics_mutex);
  return state_->usage_log;
}

}  // namespace ori::gateway
