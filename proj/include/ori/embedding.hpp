#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ori::embedding {

/// Identifies which encoder produced a set of vectors. Persisted artifacts and
/// caches carry a fingerprint so an embedder mismatch is caught before any
/// vector is used.
struct EmbedderFingerprint {
  std::string provider;
  std::string model;
  std::size_t dim = 0;

  bool operator==(const EmbedderFingerprint&) const = default;
  std::string to_string() const;
};

/// Provider contract (§ pluggable): deterministic per (provider, model, text),
/// constant dimension, finite entries. Implementations must be safely callable
/// from concurrent requests.
class Provider {
 public:
  virtual ~Provider() = default;

  virtual EmbedderFingerprint fingerprint() const = 0;

  /// Embeds one non-empty text. Throws ValidationError on empty input or a
  /// dimension/finiteness violation, TransportError on provider failure.
  virtual std::vector<double> embed(std::string_view text) = 0;

  /// Embeds a batch in order. The default loops over embed(); transports that
  /// support batching override this with a single round trip.
  virtual std::vector<std::vector<double>> embed_many(std::span<const std::string> texts);
};

/// Offline deterministic embedder: seeds SplitMix64 from the FNV-1a 64 hash of
/// the whitespace-collapsed text, draws `dim` Box-Muller normals, scales to
/// unit norm. All algorithms pinned; see README for the golden values.
class TestEmbedder final : public Provider {
 public:
  explicit TestEmbedder(std::size_t dim = 384);

  EmbedderFingerprint fingerprint() const override;
  std::vector<double> embed(std::string_view text) override;

 private:
  std::size_t dim_;
};

/// Computes the test embedding directly (free-function form of TestEmbedder).
std::vector<double> test_embed(std::string_view text, std::size_t dim);

/// OpenAI-compatible HTTP embedding endpoint:
/// POST {"input": [texts], "model": model} -> {"data": [{"embedding": [...]}]}.
class HttpEmbedder final : public Provider {
 public:
  HttpEmbedder(std::string endpoint_url, std::string model, std::size_t dim,
               double timeout_seconds = 60.0);

  EmbedderFingerprint fingerprint() const override;
  std::vector<double> embed(std::string_view text) override;
  std::vector<std::vector<double>> embed_many(std::span<const std::string> texts) override;

 private:
  std::string url_;
  std::string model_;
  std::size_t dim_;
  double timeout_seconds_;
};

/// Serves precomputed vectors from an embedding file (same on-disk format as
/// the cache). Texts absent from the file are an error.
class FileEmbedder final : public Provider {
 public:
  explicit FileEmbedder(const std::filesystem::path& path);

  EmbedderFingerprint fingerprint() const override;
  std::vector<double> embed(std::string_view text) override;

 private:
  EmbedderFingerprint fingerprint_;
  std::map<std::string, std::vector<double>> by_key_;
};

/// Persistent embedding cache. JSONL file: a header record holding the
/// fingerprint, then one {"key": hex, "dim": n, "values": [...]} per vector,
/// keyed by the FNV-1a 64 hash of the exact text. Single writer, many readers.
class EmbeddingCache {
 public:
  /// Opens (or creates) the cache file. Throws ValidationError if the file's
  /// fingerprint does not match `expected`.
  EmbeddingCache(const std::filesystem::path& path, const EmbedderFingerprint& expected);

  std::optional<std::vector<double>> get(std::string_view text) const;
  void put(std::string_view text, const std::vector<double>& vec);

  const EmbedderFingerprint& fingerprint() const { return fingerprint_; }
  std::size_t size() const;

  static std::string key_for(std::string_view text);

 private:
  EmbedderFingerprint fingerprint_;
  std::filesystem::path path_;
  std::map<std::string, std::vector<double>> entries_;
  mutable std::shared_mutex mutex_;
};

/// Order-preserving batch embedding. Cache hits bypass the provider; all
/// misses go to the provider in one embed_many call and are persisted. Errors
/// carry the index of the failing text.
std::vector<std::vector<double>> embed_batch(Provider& provider,
                                             std::span<const std::string> texts,
                                             EmbeddingCache* cache = nullptr);

}  // namespace ori::embedding
