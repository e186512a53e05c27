#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stepuq {

/// Binary step label. 1 means the step contains an error.
enum class Label : std::uint8_t { kNoError = 0, kError = 1 };

inline constexpr int to_int(Label l) { return static_cast<int>(l); }
Label label_from_int(int v);

/// Natural-log maximum of a two-class entropy.
inline constexpr double kLn2 = 0.69314718055994530942;
inline constexpr double kSumTolerance = 1e-9;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Network or endpoint failure after retries are exhausted.
class TransportError : public Error {
 public:
  using Error::Error;
};

struct StepCase {
  std::string case_id;
  std::string solution_id;
  std::string question;
  std::vector<std::string> preceding_steps;
  std::string candidate_step;
  int step_index = 1;
  Label ground_truth = Label::kNoError;
};

/// Canonical case id; zero-padded so lexical order follows step order.
std::string make_case_id(std::string_view solution_id, int step_index);

/// Normalized two-class belief {no_error, error}.
class PredictiveDistribution {
 public:
  PredictiveDistribution() = default;

  /// Builds (1 - p, p). Throws std::invalid_argument outside [0,1].
  static PredictiveDistribution from_error_prob(double p_error);

  /// Normalizes two unnormalized class masses. Both must be >= 0 with a
  /// positive sum.
  static PredictiveDistribution normalize(double mass_no_error, double mass_error);

  double p_no_error() const { return p_no_error_; }
  double p_error() const { return p_error_; }
  double prob(Label l) const { return l == Label::kError ? p_error_ : p_no_error_; }

  /// Ties resolve to kNoError.
  Label argmax() const { return p_error_ > p_no_error_ ? Label::kError : Label::kNoError; }

  bool is_valid() const;
  bool is_degenerate() const { return p_error_ == 0.0 || p_error_ == 1.0; }

  friend bool operator==(const PredictiveDistribution&, const PredictiveDistribution&) = default;

 private:
  PredictiveDistribution(double p_no, double p_err) : p_no_error_(p_no), p_error_(p_err) {}

  double p_no_error_ = 0.5;
  double p_error_ = 0.5;
};

struct JudgeSample {
  std::string rationale;
  std::string response_text;
  Label decision = Label::kNoError;
  bool parse_ok = false;
  // False when the decision token could not be located in the returned
  // log-probabilities; such samples are skipped by probability-weighted
  // estimators.
  bool probs_ok = false;
  double raw_token_prob_yes = 0.0;
  double raw_token_prob_no = 0.0;
  PredictiveDistribution class_dist;
  std::optional<double> mean_token_logprob;
  double temperature = 0.0;

  /// Text embedded by SEU: rationale followed by the verdict.
  std::string full_response() const;
};

enum class PredictionSource { kGreedyDecision, kGreedyProbs, kDiverseMajority, kDefault };

std::string_view to_string(PredictionSource s);
PredictionSource prediction_source_from_string(std::string_view s);

struct StepVerification {
  std::string case_id;
  JudgeSample greedy_sample;
  Label predicted_label = Label::kNoError;
  PredictionSource prediction_source = PredictionSource::kGreedyDecision;
  bool correct = false;  // z = 1 iff predicted_label == ground truth
  std::vector<JudgeSample> diverse_samples;
  bool failed = false;
  std::string failure_cause;
  std::string shortfall_reason;
  // Greedy decision disagrees with argmax of the greedy class distribution.
  bool argmax_anomaly = false;
};

inline bool correctness_of(Label predicted, Label truth) { return predicted == truth; }

enum class EstimatorId {
  kCotEntropy,
  kCotEntropyDiscrete,
  kNaiveEntropy,
  kPTrue,
  kSeu,
  kRandom,
  kTotal,
  kAleatoric,
  kEpistemic,
};

std::string_view to_string(EstimatorId id);
std::optional<EstimatorId> estimator_from_string(std::string_view s);
const std::vector<EstimatorId>& all_estimators();
bool is_entropy_family(EstimatorId id);
bool is_stochastic(EstimatorId id);

struct UncertaintyRecord {
  std::string case_id;
  EstimatorId estimator = EstimatorId::kCotEntropy;
  std::optional<double> score;  // empty when the estimator is unavailable
  int n_samples_used = 0;
  std::uint64_t seed = 0;
  std::string note;
};

enum class ViolationKind { kIndexGap, kPositiveNotTerminal, kMultiplePositives, kMixedSolutions };

struct TraceViolation {
  ViolationKind kind;
  std::string case_id;
  std::string message;
};

std::string_view to_string(ViolationKind k);

/// Checks the truncated-trace invariants for the steps of one solution.
/// Returns every violation found; an empty result means the trace is valid.
std::vector<TraceViolation> validate_trace(const std::vector<StepCase>& steps);

}  // namespace stepuq
