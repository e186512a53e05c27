#include "stepuq/core.hpp"

#include <cmath>
#include <fmt/format.h>

namespace stepuq {

Label label_from_int(int v) {
  if (v == 0) return Label::kNoError;
  if (v == 1) return Label::kError;
  throw DataError(fmt::format("label must be 0 or 1, got {}", v));
}

std::string make_case_id(std::string_view solution_id, int step_index) {
  return fmt::format("{}:{:03d}", solution_id, step_index);
}

PredictiveDistribution PredictiveDistribution::from_error_prob(double p_error) {
  if (!(p_error >= 0.0 && p_error <= 1.0)) {
    throw std::invalid_argument(fmt::format("error probability {} outside [0,1]", p_error));
  }
  return PredictiveDistribution(1.0 - p_error, p_error);
}

PredictiveDistribution PredictiveDistribution::normalize(double mass_no_error, double mass_error) {
  if (!(mass_no_error >= 0.0) || !(mass_error >= 0.0) || !(mass_no_error + mass_error > 0.0) ||
      !std::isfinite(mass_no_error + mass_error)) {
    throw std::invalid_argument(
        fmt::format("cannot normalize class masses ({}, {})", mass_no_error, mass_error));
  }
  const double total = mass_no_error + mass_error;
  const double p_err = mass_error / total;
  return PredictiveDistribution(1.0 - p_err, p_err);
}

bool PredictiveDistribution::is_valid() const {
  return p_no_error_ >= 0.0 && p_error_ >= 0.0 &&
         std::abs(p_no_error_ + p_error_ - 1.0) <= kSumTolerance;
}

std::string JudgeSample::full_response() const {
  return fmt::format("{}\nhas_error: {}", rationale, decision == Label::kError ? "yes" : "no");
}

std::string_view to_string(PredictionSource s) {
  switch (s) {
    case PredictionSource::kGreedyDecision: return "greedy_decision";
    case PredictionSource::kGreedyProbs: return "greedy_probs";
    case PredictionSource::kDiverseMajority: return "diverse_majority";
    case PredictionSource::kDefault: return "default";
  }
  return "default";
}

PredictionSource prediction_source_from_string(std::string_view s) {
  if (s == "greedy_decision") return PredictionSource::kGreedyDecision;
  if (s == "greedy_probs") return PredictionSource::kGreedyProbs;
  if (s == "diverse_majority") return PredictionSource::kDiverseMajority;
  if (s == "default") return PredictionSource::kDefault;
  throw DataError(fmt::format("unknown prediction source '{}'", s));
}

namespace {

struct EstimatorName {
  EstimatorId id;
  std::string_view name;
};

constexpr EstimatorName kEstimatorNames[] = {
    {EstimatorId::kCotEntropy, "cot_entropy"},
    {EstimatorId::kCotEntropyDiscrete, "cot_entropy_discrete"},
    {EstimatorId::kNaiveEntropy, "naive_entropy"},
    {EstimatorId::kPTrue, "p_true"},
    {EstimatorId::kSeu, "seu"},
    {EstimatorId::kRandom, "random"},
    {EstimatorId::kTotal, "total"},
    {EstimatorId::kAleatoric, "aleatoric"},
    {EstimatorId::kEpistemic, "epistemic"},
};

}  // namespace

std::string_view to_string(EstimatorId id) {
  for (const auto& e : kEstimatorNames) {
    if (e.id == id) return e.name;
  }
  return "unknown";
}

std::optional<EstimatorId> estimator_from_string(std::string_view s) {
  for (const auto& e : kEstimatorNames) {
    if (e.name == s) return e.id;
  }
  return std::nullopt;
}

const std::vector<EstimatorId>& all_estimators() {
  static const std::vector<EstimatorId> ids = [] {
    std::vector<EstimatorId> v;
    for (const auto& e : kEstimatorNames) v.push_back(e.id);
    return v;
  }();
  return ids;
}

bool is_entropy_family(EstimatorId id) {
  switch (id) {
    case EstimatorId::kCotEntropy:
    case EstimatorId::kCotEntropyDiscrete:
    case EstimatorId::kTotal:
    case EstimatorId::kAleatoric:
    case EstimatorId::kEpistemic:
      return true;
    default:
      return false;
  }
}

bool is_stochastic(EstimatorId id) { return id == EstimatorId::kRandom; }

std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::kIndexGap: return "index gap";
    case ViolationKind::kPositiveNotTerminal: return "positive not terminal";
    case ViolationKind::kMultiplePositives: return "multiple positives";
    case ViolationKind::kMixedSolutions: return "mixed solution ids";
  }
  return "unknown";
}

std::vector<TraceViolation> validate_trace(const std::vector<StepCase>& steps) {
  std::vector<TraceViolation> out;
  if (steps.empty()) return out;

  const std::string& sid = steps.front().solution_id;
  int positives = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const StepCase& s = steps[i];
    if (s.solution_id != sid) {
      out.push_back({ViolationKind::kMixedSolutions, s.case_id,
                     fmt::format("solution id '{}' differs from '{}'", s.solution_id, sid)});
    }
    const int expected = static_cast<int>(i) + 1;
    if (s.step_index != expected ||
        s.step_index != 1 + static_cast<int>(s.preceding_steps.size())) {
      out.push_back({ViolationKind::kIndexGap, s.case_id,
                     fmt::format("step index {} (expected {}, {} preceding steps)", s.step_index,
                                 expected, s.preceding_steps.size())});
    }
    if (s.ground_truth == Label::kError) {
      ++positives;
      if (i + 1 != steps.size()) {
        out.push_back({ViolationKind::kPositiveNotTerminal, s.case_id,
                       fmt::format("error label at step {} of {}", s.step_index, steps.size())});
      }
    }
  }
  if (positives > 1) {
    out.push_back({ViolationKind::kMultiplePositives, sid,
                   fmt::format("{} steps labeled as errors", positives)});
  }
  return out;
}

}  // namespace stepuq
