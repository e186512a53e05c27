#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "stepuq/core.hpp"

namespace stepuq::metrics {

struct ScoredStep {
  std::string case_id;
  std::optional<double> uncertainty;  // empty when the estimator was unavailable
  bool correct = false;                // z_t
  Label predicted_label = Label::kNoError;
  Label ground_truth = Label::kNoError;
};

/// P(u_correct < u_incorrect) + 0.5 P(tie) over scored steps. Empty when
/// only one correctness class is present.
std::optional<double> auroc(std::span<const ScoredStep> scored);

/// Average precision with correct verifications as the positive class,
/// ranked by increasing uncertainty. Tied scores form one threshold.
std::optional<double> auprc(std::span<const ScoredStep> scored);

/// Error-class F1 of predicted_label vs ground_truth; 0 when there are no
/// true positives.
double f1_error_class(std::span<const ScoredStep> scored);

double accuracy(std::span<const ScoredStep> scored);

struct CurvePoint {
  double coverage = 0.0;
  double f1 = 0.0;
  std::size_t n_retained = 0;
};

/// Number of steps kept at a coverage fraction: ceil(coverage * n).
std::size_t retained_count(double coverage, std::size_t n);

/// Order in which steps are retained: available scores by increasing
/// uncertainty, then unavailable ones; ties by case_id.
std::vector<std::size_t> retention_order(std::span<const ScoredStep> scored);

/// F1 on the most confident fraction of steps for each coverage.
/// Coverages must be strictly increasing within (0, 1].
std::vector<CurvePoint> rejection_curve(std::span<const ScoredStep> scored,
                                        std::span<const double> coverages);

inline constexpr double kAuF1cLow = 0.30;
inline constexpr double kAuF1cHigh = 1.00;

/// Trapezoidal mean of F1 over coverage [0.3, 1.0]. Empty unless the curve
/// has points at both ends of the band.
std::optional<double> au_f1c(std::span<const CurvePoint> curve);

/// Integer-percent grid, e.g. (30, 100, 1) -> 0.30, 0.31, ..., 1.00.
std::vector<double> coverage_grid(int lo_pct, int hi_pct, int step_pct);

const std::vector<double>& full_grid();     // 30..100 step 1
const std::vector<double>& display_grid();  // 60..100 step 4

struct Stat {
  std::optional<double> mean;  // empty when undefined for any seed
  double stddev = 0.0;
};

/// Mean and sample standard deviation; identical inputs return their
/// common value exactly.
Stat summarize(const std::vector<std::optional<double>>& values);

struct EstimatorMetrics {
  EstimatorId estimator = EstimatorId::kCotEntropy;
  std::size_t n_seeds = 1;
  Stat auroc;
  Stat auprc;
  Stat au_f1c;
  std::size_t n_scored = 0;
  std::size_t n_unavailable = 0;
  std::vector<CurvePoint> curve;  // full grid, F1 averaged over seeds
  std::vector<double> curve_std;
};

struct BaselineScore {
  double f1 = 0.0;
  double accuracy = 0.0;
};

struct EvalReport {
  std::size_t n_steps = 0;
  std::size_t n_failed = 0;
  double verification_accuracy = 0.0;
  double verification_f1 = 0.0;
  double positive_rate = 0.0;
  double greedy_parse_rate = 0.0;
  double diverse_parse_rate = 0.0;
  BaselineScore all_zeros;
  BaselineScore all_ones;
  std::vector<EstimatorMetrics> estimators;
};

/// Joins cases, verifications and uncertainty records and computes every
/// metric per estimator. Stochastic estimators are evaluated once per seed
/// and summarized as mean and standard deviation.
EvalReport evaluate(const std::vector<StepCase>& cases,
                    const std::vector<StepVerification>& verifications,
                    const std::vector<UncertaintyRecord>& records);

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

}  // namespace stepuq::metrics
