#include "ori/eval.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "ori/errors.hpp"
#include "ori/text.hpp"

namespace ori::eval {

namespace {

using nlohmann::json;

bool is_ascii_alnum(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// First choice letter A-J (either case) with no alphanumeric neighbor, so
// "Answer: B", "(b)" and "B." all yield B while "Brazil" yields nothing.
std::optional<char> extract_choice(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (upper < 'A' || upper > 'J') continue;
    const bool left_ok = i == 0 || !is_ascii_alnum(s[i - 1]);
    const bool right_ok = i + 1 == s.size() || !is_ascii_alnum(s[i + 1]);
    if (left_ok && right_ok) return upper;
  }
  return std::nullopt;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

double sum_correct(std::span<const EvalOutcome> outcomes) {
  double sum = 0.0;
  for (const auto& o : outcomes) sum += o.correct;
  return sum;
}

// Fixed metric column order shared by the text and CSV reports.
constexpr const char* kMetricNames[] = {"blended", "objective", "prompts",   "cost_usd",
                                        "tokens_per_s", "wall_s", "overhead_s"};

double metric_value(const RunReport& r, std::size_t metric) {
  switch (metric) {
    case 0: return r.blended_score;
    case 1: return r.objective;
    case 2: return static_cast<double>(r.prompt_count);
    case 3: return r.total_cost_usd;
    case 4: return r.tokens_per_second;
    case 5: return r.total_wall_seconds;
    default: return r.routing_overhead_seconds;
  }
}

// Directions for best-of-column marking: +1 max wins, -1 min wins, 0 unmarked.
constexpr int kMetricDirection[] = {+1, +1, 0, -1, +1, -1, 0};

std::string format_metric(std::size_t metric, const RunReport& r) {
  std::ostringstream out;
  out << std::fixed;
  switch (metric) {
    case 0: out << std::setprecision(2) << r.blended_score; break;
    case 1: out << std::setprecision(1) << r.objective; break;
    case 2: out << r.prompt_count; break;
    case 3: out << std::setprecision(6) << r.total_cost_usd; break;
    case 4:
      if (r.tokens_per_second_defined) {
        out << std::setprecision(2) << r.tokens_per_second;
      } else {
        out << "-";
      }
      break;
    case 5: out << std::setprecision(3) << r.total_wall_seconds; break;
    default: out << std::setprecision(3) << r.routing_overhead_seconds; break;
  }
  return out.str();
}

std::vector<BenchmarkId> benchmark_union(const std::map<std::string, RunReport>& runs) {
  std::vector<BenchmarkId> benchmarks;
  for (const auto& [policy, report] : runs) {
    for (const auto& [bench, score] : report.per_benchmark) {
      if (std::find(benchmarks.begin(), benchmarks.end(), bench) == benchmarks.end()) {
        benchmarks.push_back(bench);
      }
    }
  }
  std::sort(benchmarks.begin(), benchmarks.end());
  return benchmarks;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

}  // namespace

double eval_multiple_choice(std::string_view predicted, std::string_view reference) {
  const std::string ref = trim(reference);
  if (ref.size() != 1) {
    throw ValidationError("multiple-choice reference must be a single letter, got '" +
                          std::string(reference) + "'");
  }
  const char expect = static_cast<char>(std::toupper(static_cast<unsigned char>(ref[0])));
  if (expect < 'A' || expect > 'J') {
    throw ValidationError("multiple-choice reference must be A-J, got '" + ref + "'");
  }
  const auto choice = extract_choice(predicted);
  return (choice && *choice == expect) ? 1.0 : 0.0;
}

double eval_exact_match(std::string_view predicted, std::string_view reference) {
  return text::normalize_for_match(predicted) == text::normalize_for_match(reference) ? 1.0
                                                                                      : 0.0;
}

Grader grader_for(const BenchmarkId& b, const GraderOverrides& overrides) {
  auto it = overrides.find(b);
  if (it != overrides.end()) return it->second;
  static const std::map<std::string, Grader> defaults = {
      {"MMLU-PRO", Grader::multiple_choice}, {"MMLU", Grader::multiple_choice},
      {"GPQA", Grader::multiple_choice},     {"BBH", Grader::multiple_choice},
      {"MUSR", Grader::multiple_choice},     {"ARC", Grader::multiple_choice},
      {"MATH-L5", Grader::exact_match},      {"IFEVAL", Grader::exact_match},
  };
  auto d = defaults.find(b.name());
  // Unlisted benchmarks default to multiple choice, the dominant answer shape
  // in the routing corpus; override per benchmark when that is wrong.
  return d != defaults.end() ? d->second : Grader::multiple_choice;
}

double grade(Grader g, std::string_view predicted, std::string_view reference) {
  switch (g) {
    case Grader::multiple_choice:
      return eval_multiple_choice(predicted, reference);
    case Grader::exact_match:
      return eval_exact_match(predicted, reference);
  }
  throw ValidationError("unknown grader");
}

double score_model_on_benchmark(std::span<const EvalOutcome> outcomes) {
  if (outcomes.empty()) throw ValidationError("score: no outcomes");
  for (const auto& o : outcomes) {
    if (o.benchmark != outcomes.front().benchmark) {
      throw ValidationError("score: outcomes mix benchmarks " +
                            outcomes.front().benchmark.name() + " and " + o.benchmark.name());
    }
  }
  return sum_correct(outcomes) / static_cast<double>(outcomes.size()) * 100.0;
}

double objective_value(std::span<const EvalOutcome> outcomes,
                       std::span<const router::RoutingDecision> decisions) {
  if (outcomes.size() != decisions.size()) {
    std::ostringstream msg;
    msg << "objective: " << outcomes.size() << " outcomes vs " << decisions.size()
        << " decisions";
    throw ValidationError(msg.str());
  }
  std::map<std::string_view, const router::RoutingDecision*> by_id;
  for (const auto& d : decisions) {
    if (!by_id.emplace(d.prompt_id, &d).second) {
      throw ValidationError("objective: duplicate decision for prompt " + d.prompt_id);
    }
  }
  double sum = 0.0;
  for (const auto& o : outcomes) {
    auto it = by_id.find(o.prompt_id);
    if (it == by_id.end()) {
      throw ValidationError("objective: no decision for prompt " + o.prompt_id);
    }
    if (it->second->model_id != o.model_id) {
      throw ValidationError("objective: prompt " + o.prompt_id + " was routed to " +
                            it->second->model_id + " but evaluated on " + o.model_id);
    }
    sum += o.correct;
  }
  return sum;
}

RunReport aggregate_run(std::span<const registry::UsageRecord> usage,
                        std::span<const EvalOutcome> outcomes) {
  RunReport report;
  for (const auto& u : usage) {
    report.total_cost_usd += u.cost_usd;
    report.total_prompt_tokens += u.prompt_tokens;
    report.total_completion_tokens += u.completion_tokens;
    report.total_wall_seconds += u.wall_seconds;
  }
  if (!usage.empty() && report.total_wall_seconds > 0.0) {
    report.tokens_per_second =
        static_cast<double>(report.total_completion_tokens) / report.total_wall_seconds;
    report.tokens_per_second_defined = true;
  }
  report.prompt_count = outcomes.size();
  report.objective = sum_correct(outcomes);
  if (!outcomes.empty()) {
    report.blended_score = report.objective / static_cast<double>(outcomes.size()) * 100.0;
    std::map<BenchmarkId, std::vector<EvalOutcome>> by_benchmark;
    for (const auto& o : outcomes) by_benchmark[o.benchmark].push_back(o);
    for (const auto& [bench, group] : by_benchmark) {
      report.per_benchmark[bench] = score_model_on_benchmark(group);
    }
  }
  return report;
}

std::string comparison_text(const std::map<std::string, RunReport>& runs) {
  if (runs.empty()) throw ValidationError("comparison: no runs");
  const std::vector<BenchmarkId> benchmarks = benchmark_union(runs);
  constexpr std::size_t kMetricCount = std::size(kMetricNames);

  // Best-value markers per column.
  std::map<std::string, double> best_bench;
  for (const auto& bench : benchmarks) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& [policy, report] : runs) {
      auto it = report.per_benchmark.find(bench);
      if (it != report.per_benchmark.end()) best = std::max(best, it->second);
    }
    best_bench[bench.name()] = best;
  }
  std::vector<double> best_metric(kMetricCount, 0.0);
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    if (kMetricDirection[m] == 0) continue;
    double best = kMetricDirection[m] > 0 ? -std::numeric_limits<double>::infinity()
                                          : std::numeric_limits<double>::infinity();
    for (const auto& [policy, report] : runs) {
      if (m == 4 && !report.tokens_per_second_defined) continue;
      const double v = metric_value(report, m);
      best = kMetricDirection[m] > 0 ? std::max(best, v) : std::min(best, v);
    }
    best_metric[m] = best;
  }

  // Assemble cells, then align.
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"policy"};
  for (const auto& bench : benchmarks) header.push_back(bench.name());
  for (const char* name : kMetricNames) header.emplace_back(name);
  rows.push_back(std::move(header));
  for (const auto& [policy, report] : runs) {
    std::vector<std::string> row{policy};
    for (const auto& bench : benchmarks) {
      auto it = report.per_benchmark.find(bench);
      if (it == report.per_benchmark.end()) {
        row.emplace_back("-");
        continue;
      }
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(2) << it->second;
      if (it->second == best_bench[bench.name()]) cell << "*";
      row.push_back(cell.str());
    }
    for (std::size_t m = 0; m < kMetricCount; ++m) {
      std::string cell = format_metric(m, report);
      const bool defined = m != 4 || report.tokens_per_second_defined;
      if (kMetricDirection[m] != 0 && defined && metric_value(report, m) == best_metric[m]) {
        cell += "*";
      }
      row.push_back(std::move(cell));
    }
    rows.push_back(std::move(row));
  }

  std::vector<std::size_t> widths(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c != 0) out << "  ";
      out << std::left << std::setw(static_cast<int>(widths[c])) << rows[r][c];
    }
    out << "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : widths) total += w;
      out << std::string(total + 2 * (widths.size() - 1), '-') << "\n";
    }
  }
  return out.str();
}

std::string comparison_csv(const std::map<std::string, RunReport>& runs) {
  if (runs.empty()) throw ValidationError("comparison: no runs");
  const std::vector<BenchmarkId> benchmarks = benchmark_union(runs);
  std::ostringstream out;
  out << std::setprecision(17);
  out << "policy";
  for (const auto& bench : benchmarks) out << "," << csv_field(bench.name());
  for (const char* name : kMetricNames) out << "," << name;
  out << "\n";
  for (const auto& [policy, report] : runs) {
    out << csv_field(policy);
    for (const auto& bench : benchmarks) {
      out << ",";
      auto it = report.per_benchmark.find(bench);
      if (it != report.per_benchmark.end()) out << it->second;
    }
    for (std::size_t m = 0; m < std::size(kMetricNames); ++m) {
      out << ",";
      if (m == 4 && !report.tokens_per_second_defined) continue;
      out << metric_value(report, m);
    }
    out << "\n";
  }
  return out.str();
}

std::string runs_to_json(const std::map<std::string, RunReport>& runs) {
  json root = json::object();
  for (const auto& [policy, r] : runs) {
    json per_benchmark = json::object();
    for (const auto& [bench, score] : r.per_benchmark) per_benchmark[bench.name()] = score;
    root[policy] = {{"per_benchmark", std::move(per_benchmark)},
                    {"blended_score", r.blended_score},
                    {"objective", r.objective},
                    {"prompt_count", r.prompt_count},
                    {"total_cost_usd", r.total_cost_usd},
                    {"total_prompt_tokens", r.total_prompt_tokens},
                    {"total_completion_tokens", r.total_completion_tokens},
                    {"total_wall_seconds", r.total_wall_seconds},
                    {"tokens_per_second", r.tokens_per_second},
                    {"tokens_per_second_defined", r.tokens_per_second_defined},
                    {"routing_overhead_seconds", r.routing_overhead_seconds}};
  }
  return root.dump(2) + "\n";
}

std::map<std::string, RunReport> runs_from_json(std::string_view json_text) {
  json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded() || !root.is_object()) throw ParseError("runs: not a JSON object");
  std::map<std::string, RunReport> runs;
  for (const auto& [policy, r] : root.items()) {
    RunReport report;
    try {
      for (const auto& [bench, score] : r.at("per_benchmark").items()) {
        report.per_benchmark[BenchmarkId(bench)] = score.get<double>();
      }
      report.blended_score = r.at("blended_score").get<double>();
      report.objective = r.at("objective").get<double>();
      report.prompt_count = r.at("prompt_count").get<std::size_t>();
      report.total_cost_usd = r.at("total_cost_usd").get<double>();
      report.total_prompt_tokens = r.at("total_prompt_tokens").get<std::int64_t>();
      report.total_completion_tokens = r.at("total_completion_tokens").get<std::int64_t>();
      report.total_wall_seconds = r.at("total_wall_seconds").get<double>();
      report.tokens_per_second = r.at("tokens_per_second").get<double>();
      report.tokens_per_second_defined = r.at("tokens_per_second_defined").get<bool>();
      report.routing_overhead_seconds = r.at("routing_overhead_seconds").get<double>();
    } catch (const json::exception& e) {
      throw ParseError("runs: policy " + policy + ": " + e.what());
    }
    runs.emplace(policy, std::move(report));
  }
  return runs;
}

PolicyEvaluation evaluate_policies(const std::vector<corpus::PromptRecord>& testset,
                                   const router::RouterArtifact& artifact,
                                   const registry::Registry& registry,
                                   const registry::Dispatcher& dispatcher,
                                   embedding::Provider& provider,
                                   const EvaluateOptions& options) {
  if (testset.empty()) throw ValidationError("evaluate: empty test set");
  for (const auto& rec : testset) {
    if (rec.split != corpus::Split::test) {
      throw ValidationError("evaluate: record " + rec.id + " is not split=test");
    }
    if (rec.text.empty()) throw ValidationError("evaluate: record " + rec.id + " has no text");
  }
  const auto enabled = registry.enabled_models();
  if (enabled.empty()) throw ValidationError("evaluate: no enabled models");

  PolicyEvaluation result;
  const std::size_t n = testset.size();

  // Routed policy.
  std::vector<EvalOutcome> routed_outcomes;
  std::vector<registry::UsageRecord> routed_usage;
  double overhead = 0.0;
  for (const auto& rec : testset) {
    const auto t0 = std::chrono::steady_clock::now();
    router::RoutingDecision decision =
        options.knn_mode ? router::knn_route(artifact, registry, rec.text, provider,
                                             options.k_neighbors)
                         : router::route(artifact, registry, rec.text, provider);
    overhead += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    decision.prompt_id = rec.id;
    const registry::ModelCard* card = registry.find(decision.model_id);
    if (card == nullptr) {
      throw ValidationError("evaluate: routed model " + decision.model_id +
                            " is not in the registry");
    }
    registry::CompletionResult completion =
        dispatcher.dispatch_completion(*card, rec.text, options.generation);
    const Grader grader = grader_for(rec.benchmark, options.graders);
    routed_outcomes.push_back({rec.id, decision.model_id, completion.text,
                               grade(grader, completion.text, rec.reference), rec.benchmark});
    routed_usage.push_back(completion.usage);
    result.router_decisions.push_back(std::move(decision));
  }
  RunReport routed_report = aggregate_run(routed_usage, routed_outcomes);
  routed_report.routing_overhead_seconds = overhead;
  result.runs.emplace("ORI", std::move(routed_report));

  // Single-model baselines, retained per record for the oracle.
  std::vector<std::vector<EvalOutcome>> baseline_outcomes(enabled.size());
  std::vector<std::vector<registry::UsageRecord>> baseline_usage(enabled.size());
  for (std::size_t m = 0; m < enabled.size(); ++m) {
    const registry::ModelCard& card = *enabled[m];
    baseline_outcomes[m].reserve(n);
    baseline_usage[m].reserve(n);
    for (const auto& rec : testset) {
      registry::CompletionResult completion =
          dispatcher.dispatch_completion(card, rec.text, options.generation);
      const Grader grader = grader_for(rec.benchmark, options.graders);
      baseline_outcomes[m].push_back({rec.id, card.model_id, completion.text,
                                      grade(grader, completion.text, rec.reference),
                                      rec.benchmark});
      baseline_usage[m].push_back(completion.usage);
    }
    result.runs.emplace("baseline:" + card.model_id,
                        aggregate_run(baseline_usage[m], baseline_outcomes[m]));
  }

  // Oracle: per prompt, the best of the baseline answers (ties -> smallest
  // model id, which is the iteration order).
  std::vector<EvalOutcome> oracle_outcomes;
  std::vector<registry::UsageRecord> oracle_usage;
  oracle_outcomes.reserve(n);
  oracle_usage.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < enabled.size(); ++m) {
      if (baseline_outcomes[m][i].correct > baseline_outcomes[best][i].correct) best = m;
    }
    oracle_outcomes.push_back(baseline_outcomes[best][i]);
    oracle_usage.push_back(baseline_usage[best][i]);
  }
  result.runs.emplace("oracle", aggregate_run(oracle_usage, oracle_outcomes));
  return result;
}

}  // namespace ori::eval
