#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ori/benchmark.hpp"
#include "ori/corpus.hpp"
#include "ori/registry.hpp"
#include "ori/router.hpp"

namespace ori::eval {

struct EvalOutcome {
  std::string prompt_id;
  std::string model_id;
  std::string predicted;
  double correct = 0.0;  // in [0,1]; binary graders emit {0,1}
  BenchmarkId benchmark;
};

/// 1 when the first standalone choice letter in `predicted` (case-insensitive,
/// "Answer: X" and "(X)" patterns included) equals the reference letter A-J,
/// else 0. Unparseable predictions score 0.
double eval_multiple_choice(std::string_view predicted, std::string_view reference);

/// 1 iff the two strings are equal after NFC, trimming, whitespace collapse
/// and case folding.
double eval_exact_match(std::string_view predicted, std::string_view reference);

enum class Grader { multiple_choice, exact_match };

using GraderOverrides = std::map<BenchmarkId, Grader>;

/// Per-benchmark grader: multiple choice for MMLU-PRO/MMLU/GPQA/BBH/MUSR-style
/// benchmarks, exact match for MATH-L5/IFEVAL-style ones; overridable.
Grader grader_for(const BenchmarkId& b, const GraderOverrides& overrides = {});

double grade(Grader g, std::string_view predicted, std::string_view reference);

/// (sum correct / count) * 100 over one benchmark's outcomes.
double score_model_on_benchmark(std::span<const EvalOutcome> outcomes);

/// Sum of P(p_i, m_j) * R(p_i, m_j) over routed pairs. Decisions must cover
/// the outcomes one-to-one (same prompt id, same model).
double objective_value(std::span<const EvalOutcome> outcomes,
                       std::span<const router::RoutingDecision> decisions);

struct RunReport {
  std::map<BenchmarkId, double> per_benchmark;  // Score per benchmark
  double blended_score = 0.0;                   // over the merged outcome set
  double objective = 0.0;
  std::size_t prompt_count = 0;
  double total_cost_usd = 0.0;
  std::int64_t total_prompt_tokens = 0;
  std::int64_t total_completion_tokens = 0;
  double total_wall_seconds = 0.0;
  double tokens_per_second = 0.0;  // completion tokens / wall seconds
  bool tokens_per_second_defined = false;
  double routing_overhead_seconds = 0.0;  // embed + centroid search, router policies only
};

/// Exact sums over usage records plus per-benchmark scores over outcomes.
/// tokens/sec is total completion tokens over total wall seconds; an empty run
/// reports 0 with tokens_per_second_defined = false.
RunReport aggregate_run(std::span<const registry::UsageRecord> usage,
                        std::span<const EvalOutcome> outcomes);

/// Aligned text table, best score per column marked with '*'. Deterministic
/// column order (benchmarks sorted, metrics fixed).
std::string comparison_text(const std::map<std::string, RunReport>& runs);

/// CSV form of the same table.
std::string comparison_csv(const std::map<std::string, RunReport>& runs);

/// Machine-readable form (canonical JSON, one object per policy).
std::string runs_to_json(const std::map<std::string, RunReport>& runs);
std::map<std::string, RunReport> runs_from_json(std::string_view json_text);

struct EvaluateOptions {
  bool knn_mode = false;
  std::size_t k_neighbors = 5;
  GraderOverrides graders;
  registry::GenerationParams generation;
};

struct PolicyEvaluation {
  std::map<std::string, RunReport> runs;  // "ORI", "oracle", "baseline:<model>"
  std::vector<router::RoutingDecision> router_decisions;
};

/// Evaluates the routed policy against every single-model baseline and the
/// per-prompt oracle on one test set. Every prompt is dispatched through the
/// given dispatcher (mock scripts make this fully offline).
PolicyEvaluation evaluate_policies(const std::vector<corpus::PromptRecord>& testset,
                                   const router::RouterArtifact& artifact,
                                   const registry::Registry& registry,
                                   const registry::Dispatcher& dispatcher,
                                   embedding::Provider& provider,
                                   const EvaluateOptions& options = {});

}  // namespace ori::eval
