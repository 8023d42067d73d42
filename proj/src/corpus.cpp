#include "ori/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ori/errors.hpp"
#include "ori/rng.hpp"
#include "ori/text.hpp"

using json = nlohmann::json;

namespace ori {

BenchmarkId::BenchmarkId(std::string_view name) {
  std::string cleaned = text::collapse_whitespace(name);
  if (cleaned.empty()) {
    throw ValidationError("benchmark name must be non-empty");
  }
  for (char& c : cleaned) {
    c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  name_ = std::move(cleaned);
}

}  // namespace ori

namespace ori::corpus {

std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ParseError("unknown split \"" + std::string(s) + "\" (expected train|test)");
}

namespace {

struct ParsedLine {
  std::string id;
  std::string text;
  std::string benchmark;
  std::string subcategory;
  std::string reference;
  std::string split;
};

ParsedLine parse_record_line(const std::string& line, const std::string& where) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(where + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) {
    throw ParseError(where + ": record must be a JSON object");
  }
  ParsedLine out;
  auto read_string = [&](const char* key, std::string& dst) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return;
    if (!it->is_string()) {
      throw ParseError(where + ": field \"" + key + "\" must be a string");
    }
    dst = it->get<std::string>();
  };
  read_string("id", out.id);
  read_string("text", out.text);
  read_string("benchmark", out.benchmark);
  read_string("subcategory", out.subcategory);
  read_string("reference", out.reference);
  read_string("split", out.split);
  return out;
}

template <typename PerLine>
void for_each_jsonl_line(const std::filesystem::path& path, PerLine&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool blank = std::all_of(line.begin(), line.end(), [](unsigned char c) {
      return std::isspace(c) != 0;
    });
    if (blank) continue;
    fn(line, line_no);
  }
}

std::string line_id(const BenchmarkId& benchmark, Split split, std::size_t line_no,
                    const std::string& original) {
  std::string id = benchmark.name() + "/" + std::string(to_string(split)) + "/" +
                   std::to_string(line_no);
  if (!original.empty()) {
    id += "/" + original;
  }
  return id;
}

}  // namespace

std::vector<PromptRecord> load_dataset(const std::filesystem::path& path,
                                       const BenchmarkId& benchmark, Split split) {
  std::vector<PromptRecord> records;
  for_each_jsonl_line(path, [&](const std::string& line, std::size_t line_no) {
    ParsedLine parsed = parse_record_line(line, path.string() + ":" + std::to_string(line_no));
    PromptRecord rec;
    rec.id = line_id(benchmark, split, line_no, parsed.id);
    rec.text = parsed.text;
    rec.benchmark = benchmark;
    rec.subcategory = parsed.subcategory;
    rec.reference = parsed.reference;
    rec.split = split;
    records.push_back(std::move(rec));
  });
  return records;
}

std::vector<PromptRecord> load_corpus_file(const std::filesystem::path& path) {
  std::vector<PromptRecord> records;
  for_each_jsonl_line(path, [&](const std::string& line, std::size_t line_no) {
    const std::string where = path.string() + ":" + std::to_string(line_no);
    ParsedLine parsed = parse_record_line(line, where);
    if (parsed.benchmark.empty()) {
      throw ParseError(where + ": missing required field \"benchmark\"");
    }
    if (parsed.split.empty()) {
      throw ParseError(where + ": missing required field \"split\"");
    }
    PromptRecord rec;
    rec.benchmark = BenchmarkId(parsed.benchmark);
    rec.split = split_from_string(parsed.split);
    rec.id = parsed.id.empty() ? line_id(rec.benchmark, rec.split, line_no, "") : parsed.id;
    rec.text = parsed.text;
    rec.subcategory = parsed.subcategory;
    rec.reference = parsed.reference;
    records.push_back(std::move(rec));
  });
  return records;
}

void save_corpus_file(const std::filesystem::path& path,
                      const std::vector<PromptRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  for (const PromptRecord& rec : records) {
    json j;
    j["id"] = rec.id;
    j["text"] = rec.text;
    j["benchmark"] = rec.benchmark.name();
    if (!rec.subcategory.empty()) j["subcategory"] = rec.subcategory;
    j["reference"] = rec.reference;
    j["split"] = std::string(to_string(rec.split));
    out << j.dump() << "\n";
  }
}

std::vector<PromptRecord> proportionate_sample(const std::vector<PromptRecord>& records,
                                               const CorpusConfig& config) {
  if (config.per_benchmark_quota == 0) {
    throw ValidationError("per_benchmark_quota must be >= 1");
  }
  if (records.empty()) return {};

  const BenchmarkId& benchmark = records.front().benchmark;
  for (const PromptRecord& rec : records) {
    if (rec.benchmark != benchmark) {
      throw ValidationError("proportionate_sample: mixed benchmarks in input (" +
                            benchmark.name() + " vs " + rec.benchmark.name() + ")");
    }
    if (rec.split != Split::train) {
      throw ValidationError("proportionate_sample: record " + rec.id +
                            " has split=test; sampling is train-only");
    }
  }

  const std::size_t quota = std::min(config.per_benchmark_quota, records.size());
  if (quota == records.size()) return records;

  // Group record indices by subcategory.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    groups[records[i].subcategory].push_back(i);
  }

  // Largest-remainder apportionment of the quota across subcategories.
  struct Share {
    const std::string* name;
    std::size_t size;
    std::size_t take;
    double remainder;
  };
  std::vector<Share> shares;
  shares.reserve(groups.size());
  const double total = static_cast<double>(records.size());
  std::size_t assigned = 0;
  for (const auto& [name, idx] : groups) {
    const double exact = static_cast<double>(quota) * static_cast<double>(idx.size()) / total;
    Share s{&name, idx.size(), static_cast<std::size_t>(exact), 0.0};
    s.take = std::min(s.take, s.size);
    s.remainder = exact - static_cast<double>(s.take);
    assigned += s.take;
    shares.push_back(s);
  }
  std::size_t leftover = quota - assigned;
  std::sort(shares.begin(), shares.end(), [](const Share& a, const Share& b) {
    if (a.remainder != b.remainder) return a.remainder > b.remainder;
    if (a.size != b.size) return a.size > b.size;
    return *a.name < *b.name;
  });
  for (Share& s : shares) {
    if (leftover == 0) break;
    if (s.take < s.size) {
      ++s.take;
      --leftover;
    }
  }
  // leftover can survive only if every subcategory is exhausted, which cannot
  // happen for quota < n; guard anyway.
  if (leftover > 0) {
    for (Share& s : shares) {
      while (leftover > 0 && s.take < s.size) {
        ++s.take;
        --leftover;
      }
    }
  }

  // Seeded selection within each subcategory (partial Fisher-Yates), then
  // emit in original record order.
  std::vector<bool> selected(records.size(), false);
  for (const Share& s : shares) {
    std::vector<std::size_t> idx = groups[*s.name];
    rng::SplitMix64 rng(rng::tagged_seed(config.seed, benchmark.name() + "/" + *s.name));
    for (std::size_t i = 0; i < s.take; ++i) {
      const std::size_t j = i + rng.next_below(idx.size() - i);
      std::swap(idx[i], idx[j]);
      selected[idx[i]] = true;
    }
  }

  std::vector<PromptRecord> out;
  out.reserve(quota);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (selected[i]) out.push_back(records[i]);
  }
  return out;
}

std::vector<PromptRecord> merge_with_source(
    const std::vector<std::vector<PromptRecord>>& samples) {
  std::vector<const std::vector<PromptRecord>*> groups;
  for (const auto& list : samples) {
    if (list.empty()) continue;
    const BenchmarkId& benchmark = list.front().benchmark;
    for (const PromptRecord& rec : list) {
      if (rec.benchmark != benchmark) {
        throw ValidationError("merge_with_source: list mixes benchmarks " +
                              benchmark.name() + " and " + rec.benchmark.name());
      }
    }
    groups.push_back(&list);
  }
  std::stable_sort(groups.begin(), groups.end(),
                   [](const std::vector<PromptRecord>* a, const std::vector<PromptRecord>* b) {
                     return a->front().benchmark < b->front().benchmark;
                   });

  std::vector<PromptRecord> out;
  std::set<std::string> seen_ids;
  for (const auto* list : groups) {
    for (const PromptRecord& rec : *list) {
      if (!seen_ids.insert(rec.id).second) {
        throw ValidationError("merge_with_source: duplicate id \"" + rec.id + "\"");
      }
      out.push_back(rec);
    }
  }
  return out;
}

std::vector<PromptRecord> preprocess(const std::vector<PromptRecord>& records,
                                     const CorpusConfig& config) {
  std::vector<PromptRecord> out;
  out.reserve(records.size());
  std::set<std::string> seen_texts;
  for (const PromptRecord& rec : records) {
    std::string normalized = text::normalize_prompt(rec.text);
    if (normalized.empty()) continue;
    if (text::collapse_whitespace(rec.reference).empty()) continue;
    if (text::utf8_length(normalized) > config.max_prompt_chars) continue;
    if (config.dedup && !seen_texts.insert(normalized).second) continue;
    PromptRecord cleaned = rec;
    cleaned.text = std::move(normalized);
    out.push_back(std::move(cleaned));
  }
  return out;
}

std::string corpus_hash(const std::vector<PromptRecord>& records) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&hash](std::string_view s) {
    for (unsigned char c : s) {
      hash ^= static_cast<std::uint64_t>(c);
      hash *= 0x100000001b3ULL;
    }
    hash ^= 0x1f;  // field separator
    hash *= 0x100000001b3ULL;
  };
  for (const PromptRecord& rec : records) {
    mix(rec.id);
    mix(rec.text);
  }
  return text::hex64(hash);
}

}  // namespace ori::corpus
