#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "ori/embedding.hpp"
#include "ori/registry.hpp"
#include "ori/router.hpp"

namespace ori::gateway {

struct EmbedderConfig {
  std::string provider = "test";  // "test" | "http" | "file"
  std::string model;
  std::size_t dim = 384;
  std::string url;         // http provider endpoint
  std::string file_path;   // file provider source
  std::string cache_path;  // optional persistent cache
};

struct GatewayConfig {
  std::string listen_host = "127.0.0.1";
  int listen_port = 8080;
  std::string artifact_path;
  std::string registry_path;
  EmbedderConfig embedder;
  double backend_timeout_seconds = 120.0;
  std::size_t max_concurrent_backends = 8;
  std::size_t backend_queue_limit = 64;
  bool metrics_enabled = true;
  std::map<std::string, std::string> mock_scripts;  // name -> path
};

GatewayConfig load_config(const std::filesystem::path& path);

/// Quiescent-point snapshot of the service counters.
struct MetricsSnapshot {
  std::uint64_t requests_total = 0;
  std::uint64_t route_requests = 0;
  std::uint64_t completion_requests = 0;
  std::uint64_t fallbacks_total = 0;
  std::uint64_t rejected_overload = 0;
  std::map<std::string, std::uint64_t> dispatches_by_model;
  double total_cost_usd = 0.0;
  std::int64_t total_prompt_tokens = 0;
  std::int64_t total_completion_tokens = 0;
};

/// HTTP service wrapping the routing pipeline. Routing state lives in
/// immutable snapshots swapped atomically, so in-flight requests finish on
/// the artifact they started with.
class Gateway {
 public:
  explicit Gateway(GatewayConfig config);
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds the configured address (port 0 picks an ephemeral port) and serves
  /// on a background thread. Returns the bound port.
  int start();
  void stop();
  int port() const { return port_; }

  /// Atomically replaces the routing artifact.
  void reload_artifact(const std::filesystem::path& path);

  MetricsSnapshot metrics() const;
  std::vector<registry::UsageRecord> usage_records() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
  int port_ = 0;
};

}  // namespace ori::gateway
