#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ori/benchmark.hpp"

namespace ori::corpus {

enum class Split { train, test };

std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

/// One benchmark-labeled prompt with its reference answer.
struct PromptRecord {
  std::string id;
  std::string text;
  BenchmarkId benchmark;
  std::string subcategory;  // empty = none
  std::string reference;    // choice letter or free-form answer
  Split split = Split::train;

  bool operator==(const PromptRecord&) const = default;
};

struct CorpusConfig {
  std::size_t per_benchmark_quota = 1;
  std::uint64_t seed = 0;
  std::size_t max_prompt_chars = 8192;
  bool dedup = true;
};

/// Loads one benchmark file in the JSONL record format. Every returned record
/// carries the given benchmark and split; ids are prefixed
/// "<benchmark>/<split>/<line-no>" (the original id, when present, is kept as
/// a suffix). Unknown keys are ignored. An empty file yields an empty list.
std::vector<PromptRecord> load_dataset(const std::filesystem::path& path,
                                       const BenchmarkId& benchmark, Split split);

/// Loads a merged corpus file, honoring each record's own benchmark and split
/// fields (both required here). Ids default to "<benchmark>/<split>/<line-no>".
std::vector<PromptRecord> load_corpus_file(const std::filesystem::path& path);

/// Writes records in the JSONL record format (one object per line).
void save_corpus_file(const std::filesystem::path& path,
                      const std::vector<PromptRecord>& records);

/// Samples min(quota, size) records from a single benchmark's train split,
/// preserving subcategory proportions to within one record each
/// (largest-remainder apportionment). Deterministic in config.seed.
std::vector<PromptRecord> proportionate_sample(const std::vector<PromptRecord>& records,
                                               const CorpusConfig& config);

/// Flattens per-benchmark sample lists into the unified source-labeled corpus:
/// benchmark-name lexicographic order, original order within a benchmark.
/// Duplicate ids across lists are rejected.
std::vector<PromptRecord> merge_with_source(
    const std::vector<std::vector<PromptRecord>>& samples);

/// Cleaning pass. NFC-normalizes text and collapses whitespace runs, drops
/// records whose text or reference is empty after normalization, drops
/// over-length records, and (when config.dedup) keeps only the first record
/// per normalized text. Total: never throws on content.
std::vector<PromptRecord> preprocess(const std::vector<PromptRecord>& records,
                                     const CorpusConfig& config);

/// Stable content hash over (id, text) pairs, used for training audit metadata.
std::string corpus_hash(const std::vector<PromptRecord>& records);

}  // namespace ori::corpus
