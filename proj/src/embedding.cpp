#include "ori/embedding.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "http_util.hpp"
#include "ori/errors.hpp"
#include "ori/rng.hpp"
#include "ori/text.hpp"

namespace ori::embedding {

namespace {

using nlohmann::json;

void check_vector(const std::vector<double>& vec, std::size_t dim, const std::string& context) {
  if (vec.size() != dim) {
    std::ostringstream msg;
    msg << context << ": expected dim " << dim << ", got " << vec.size();
    throw ValidationError(msg.str());
  }
  for (double v : vec) {
    if (!std::isfinite(v)) throw ValidationError(context + ": non-finite entry");
  }
}

// Rethrows the in-flight ori::Error with a prefix, preserving its type.
[[noreturn]] void rethrow_prefixed(const std::string& prefix) {
  try {
    throw;
  } catch (const TimeoutError& e) {
    throw TimeoutError(prefix + e.what());
  } catch (const BackendFormatError& e) {
    throw BackendFormatError(prefix + e.what());
  } catch (const TransportError& e) {
    throw TransportError(prefix + e.what());
  } catch (const ParseError& e) {
    throw ParseError(prefix + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  }
}

json parse_json_line(const std::string& line, const std::filesystem::path& path, std::size_t lineno) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    std::ostringstream msg;
    msg << path.string() << ":" << lineno << ": not a JSON object";
    throw ParseError(msg.str());
  }
  return j;
}

EmbedderFingerprint fingerprint_from_json(const json& j, const std::filesystem::path& path) {
  if (!j.contains("fingerprint") || !j["fingerprint"].is_object()) {
    throw ParseError(path.string() + ": first record must hold the embedder fingerprint");
  }
  const json& f = j["fingerprint"];
  EmbedderFingerprint fp;
  try {
    fp.provider = f.at("provider").get<std::string>();
    fp.model = f.at("model").get<std::string>();
    fp.dim = f.at("dim").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": malformed fingerprint header: " + e.what());
  }
  if (fp.dim == 0) throw ParseError(path.string() + ": fingerprint dim must be positive");
  return fp;
}

std::string fingerprint_header_line(const EmbedderFingerprint& fp) {
  json j;
  j["fingerprint"] = {{"provider", fp.provider}, {"model", fp.model}, {"dim", fp.dim}};
  return j.dump();
}

// Reads a cache-format file: fingerprint header, then key/dim/values records.
EmbedderFingerprint read_vector_file(const std::filesystem::path& path,
                                     std::map<std::string, std::vector<double>>& out) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open embedding file: " + path.string());
  std::optional<EmbedderFingerprint> fp;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j = parse_json_line(line, path, lineno);
    if (!fp) {
      fp = fingerprint_from_json(j, path);
      continue;
    }
    std::ostringstream where;
    where << path.string() << ":" << lineno;
    try {
      std::string key = j.at("key").get<std::string>();
      std::size_t dim = j.at("dim").get<std::size_t>();
      std::vector<double> values = j.at("values").get<std::vector<double>>();
      if (dim != fp->dim || values.size() != dim) {
        throw ParseError(where.str() + ": vector length disagrees with fingerprint dim");
      }
      check_vector(values, dim, where.str());
      out[std::move(key)] = std::move(values);
    } catch (const json::exception& e) {
      throw ParseError(where.str() + ": malformed cache record: " + e.what());
    }
  }
  if (!fp) throw ParseError(path.string() + ": missing fingerprint header");
  return *fp;
}

}  // namespace

std::string EmbedderFingerprint::to_string() const {
  std::ostringstream out;
  out << provider << "/" << model << "/" << dim;
  return out.str();
}

std::vector<std::vector<double>> Provider::embed_many(std::span<const std::string> texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    try {
      out.push_back(embed(texts[i]));
    } catch (const Error&) {
      std::ostringstream prefix;
      prefix << "text " << i << " of batch: ";
      rethrow_prefixed(prefix.str());
    }
  }
  return out;
}

std::vector<double> test_embed(std::string_view text, std::size_t dim) {
  if (dim < 2) throw ValidationError("test embedder requires dim >= 2");
  const std::string normalized = text::collapse_whitespace(text);
  rng::GaussianStream gauss(text::fnv1a64(normalized));
  std::vector<double> vec(dim);
  double norm_sq = 0.0;
  for (double& v : vec) {
    v = gauss.next();
    norm_sq += v * v;
  }
  // dim independent standard normals are never all ~0 in practice, but a unit
  // vector must come out regardless.
  if (norm_sq <= 0.0) {
    vec.assign(dim, 0.0);
    vec[0] = 1.0;
    return vec;
  }
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (double& v : vec) v *= inv;
  return vec;
}

TestEmbedder::TestEmbedder(std::size_t dim) : dim_(dim) {
  if (dim_ < 2) throw ValidationError("test embedder requires dim >= 2");
}

EmbedderFingerprint TestEmbedder::fingerprint() const {
  return {"test", "fnv1a64-splitmix64-box-muller", dim_};
}

std::vector<double> TestEmbedder::embed(std::string_view text) {
  if (text.empty()) throw ValidationError("cannot embed empty text");
  return test_embed(text, dim_);
}

HttpEmbedder::HttpEmbedder(std::string endpoint_url, std::string model, std::size_t dim,
                           double timeout_seconds)
    : url_(std::move(endpoint_url)),
      model_(std::move(model)),
      dim_(dim),
      timeout_seconds_(timeout_seconds) {
  if (dim_ == 0) throw ValidationError("embedding dim must be positive");
  detail::split_url(url_);  // validate eagerly
}

EmbedderFingerprint HttpEmbedder::fingerprint() const { return {"http", model_, dim_}; }

std::vector<double> HttpEmbedder::embed(std::string_view text) {
  std::vector<std::string> one{std::string(text)};
  return std::move(embed_many(one).front());
}

std::vector<std::vector<double>> HttpEmbedder::embed_many(std::span<const std::string> texts) {
  if (texts.empty()) return {};
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].empty()) {
      throw ValidationError("text " + std::to_string(i) + " of batch: cannot embed empty text");
    }
  }
  const auto parts = detail::split_url(url_);
  httplib::Client client(parts.origin);
  const auto timeout = std::chrono::milliseconds(
      static_cast<long long>(timeout_seconds_ * 1000.0));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  json body;
  body["input"] = json::array();
  for (const std::string& t : texts) body["input"].push_back(t);
  body["model"] = model_;

  auto res = client.Post(parts.path, body.dump(), "application/json");
  if (!res) {
    std::ostringstream msg;
    msg << "embedding endpoint " << url_ << ": " << httplib::to_string(res.error());
    if (res.error() == httplib::Error::ConnectionTimeout || res.error() == httplib::Error::Read) {
      throw TimeoutError(msg.str());
    }
    throw TransportError(msg.str());
  }
  if (res->status != 200) {
    std::ostringstream msg;
    msg << "embedding endpoint " << url_ << ": HTTP " << res->status;
    throw TransportError(msg.str());
  }
  json parsed = json::parse(res->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("data") || !parsed["data"].is_array()) {
    throw BackendFormatError("embedding endpoint " + url_ + ": response lacks a data array");
  }
  const json& data = parsed["data"];
  if (data.size() != texts.size()) {
    std::ostringstream msg;
    msg << "embedding endpoint " << url_ << ": sent " << texts.size() << " texts, got "
        << data.size() << " vectors";
    throw BackendFormatError(msg.str());
  }
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::ostringstream context;
    context << "embedding " << i << " from " << url_;
    if (!data[i].is_object() || !data[i].contains("embedding") ||
        !data[i]["embedding"].is_array()) {
      throw BackendFormatError(context.str() + ": missing embedding array");
    }
    std::vector<double> vec;
    try {
      vec = data[i]["embedding"].get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw BackendFormatError(context.str() + ": " + e.what());
    }
    try {
      check_vector(vec, dim_, context.str());
    } catch (const ValidationError& e) {
      // A wrong-shape vector is the backend's fault, not the caller's.
      throw BackendFormatError(e.what());
    }
    out.push_back(std::move(vec));
  }
  return out;
}

FileEmbedder::FileEmbedder(const std::filesystem::path& path) {
  fingerprint_ = read_vector_file(path, by_key_);
}

EmbedderFingerprint FileEmbedder::fingerprint() const { return fingerprint_; }

std::vector<double> FileEmbedder::embed(std::string_view text) {
  if (text.empty()) throw ValidationError("cannot embed empty text");
  auto it = by_key_.find(EmbeddingCache::key_for(text));
  if (it == by_key_.end()) {
    throw ValidationError("embedding file has no vector for text hash " +
                          EmbeddingCache::key_for(text));
  }
  return it->second;
}

EmbeddingCache::EmbeddingCache(const std::filesystem::path& path,
                               const EmbedderFingerprint& expected)
    : fingerprint_(expected), path_(path) {
  if (expected.dim == 0) throw ValidationError("cache fingerprint dim must be positive");
  if (std::filesystem::exists(path_)) {
    EmbedderFingerprint stored = read_vector_file(path_, entries_);
    if (stored != expected) {
      throw ValidationError("embedding cache " + path_.string() + " was written by " +
                            stored.to_string() + " but the provider is " + expected.to_string());
    }
    return;
  }
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_);
  if (!out) throw ValidationError("cannot create embedding cache: " + path_.string());
  out << fingerprint_header_line(fingerprint_) << "\n";
  if (!out.flush()) throw ValidationError("cannot write embedding cache: " + path_.string());
}

std::string EmbeddingCache::key_for(std::string_view text) {
  return text::hex64(text::fnv1a64(text));
}

std::optional<std::vector<double>> EmbeddingCache::get(std::string_view text) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key_for(text));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(std::string_view text, const std::vector<double>& vec) {
  check_vector(vec, fingerprint_.dim, "cache put");
  std::string key = key_for(text);
  std::unique_lock lock(mutex_);
  auto [it, inserted] = entries_.emplace(std::move(key), vec);
  if (!inserted) return;  // idempotent; first write wins
  json j;
  j["key"] = it->first;
  j["dim"] = fingerprint_.dim;
  j["values"] = vec;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw ValidationError("cannot append to embedding cache: " + path_.string());
  out << j.dump() << "\n";
  if (!out.flush()) throw ValidationError("cannot write embedding cache: " + path_.string());
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::vector<std::vector<double>> embed_batch(Provider& provider,
                                             std::span<const std::string> texts,
                                             EmbeddingCache* cache) {
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].empty()) {
      throw ValidationError("text at index " + std::to_string(i) + " is empty");
    }
  }
  std::vector<std::vector<double>> out(texts.size());
  std::vector<std::size_t> miss_indices;
  std::vector<std::string> miss_texts;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (cache != nullptr) {
      if (auto hit = cache->get(texts[i])) {
        out[i] = std::move(*hit);
        continue;
      }
    }
    miss_indices.push_back(i);
    miss_texts.push_back(texts[i]);
  }
  if (miss_indices.empty()) return out;

  std::vector<std::vector<double>> fresh;
  try {
    fresh = provider.embed_many(miss_texts);
  } catch (const Error&) {
    std::ostringstream prefix;
    prefix << "embed_batch (" << miss_indices.size() << " of " << texts.size()
           << " texts uncached, first at index " << miss_indices.front() << "): ";
    rethrow_prefixed(prefix.str());
  }
  if (fresh.size() != miss_texts.size()) {
    throw BackendFormatError("provider returned " + std::to_string(fresh.size()) +
                             " vectors for " + std::to_string(miss_texts.size()) + " texts");
  }
  for (std::size_t m = 0; m < miss_indices.size(); ++m) {
    if (cache != nullptr) cache->put(miss_texts[m], fresh[m]);
    out[miss_indices[m]] = std::move(fresh[m]);
  }
  return out;
}

}  // namespace ori::embedding
