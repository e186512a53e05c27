#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stepuq/client.hpp"
#include "stepuq/core.hpp"
#include "stepuq/judge.hpp"

namespace stepuq::estimators {

/// Score of one estimator on one step. An empty score marks the estimator
/// as unavailable for the step; `note` says why.
struct Estimate {
  std::optional<double> score;
  int n_used = 0;
  std::string note;

  bool available() const { return score.has_value(); }
};

/// Decision clusters over the parse_ok samples.
struct ClusterSet {
  std::vector<PredictiveDistribution> members[2];  // indexed by decision

  std::size_t count(Label e) const { return members[to_int(e)].size(); }
  std::size_t total() const { return members[0].size() + members[1].size(); }
};

struct DecompositionResult {
  double total = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;
};

/// -p ln p - (1-p) ln(1-p), with 0 ln 0 = 0.
double binary_entropy(double p);

ClusterSet cluster_by_decision(std::span<const JudgeSample> samples);

/// Samples contributing to probability-weighted estimators.
std::vector<PredictiveDistribution> usable_distributions(std::span<const JudgeSample> samples);

/// Uniform Monte-Carlo average of the per-rationale class distributions.
std::optional<PredictiveDistribution> posterior_predictive(std::span<const JudgeSample> samples);

Estimate cot_entropy(std::span<const JudgeSample> samples);
Estimate cot_entropy_discrete(std::span<const JudgeSample> samples);
Estimate naive_entropy(std::span<const JudgeSample> samples);

/// 1 - mean pairwise cosine similarity of the embedded responses.
Estimate seu(std::span<const JudgeSample> samples, Embedder& embedder);

/// Same statistic on precomputed vectors.
double seu_from_vectors(const std::vector<std::vector<double>>& vectors);

/// Uniform score in [0, 1), a pure function of (seed, case_id).
double random_baseline(std::uint64_t seed, const std::string& case_id);

std::optional<DecompositionResult> decompose(std::span<const JudgeSample> samples);

/// Zero-shot self-reflection prompt: the greedy verdict is the proposed
/// answer and the diverse verdicts are the brainstormed ones.
std::string render_p_true_prompt(const StepCase& c, const StepVerification& v);

/// Reads p(True) at the first True/False token of a completion.
std::optional<double> p_true_probability(const Completion& completion, double epsilon);

/// 1 - p(True) for the greedy verdict.
Estimate p_true(const StepCase& c, const StepVerification& v, const judge::JudgeConfig& cfg,
                JudgeClient& client);

struct EstimateOptions {
  std::vector<EstimatorId> estimators;      // empty means all
  std::vector<std::uint64_t> random_seeds;  // one record set per seed
  JudgeClient* p_true_client = nullptr;     // p_true skipped when null
  Embedder* embedder = nullptr;             // seu skipped when null
  judge::JudgeConfig judge_cfg;
};

struct EstimateRun {
  std::vector<UncertaintyRecord> records;
  std::vector<std::string> skipped;  // "<estimator>: reason"
};

/// Scores every (case, verification) pair. Records are ordered by estimator,
/// then seed, then case order. Failed verifications are skipped.
EstimateRun estimate_all(const std::vector<StepCase>& cases,
                         const std::vector<StepVerification>& verifications,
                         const EstimateOptions& opts);

}  // namespace stepuq::estimators
