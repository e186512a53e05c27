#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stepuq/client.hpp"
#include "stepuq/core.hpp"

namespace stepuq::judge {

inline constexpr std::string_view kTemplateVersion = "v1";

struct JudgeConfig {
  double t_greedy = 0.1;
  double t_diverse = 1.0;
  int n_diverse = 10;
  int max_tokens = 512;
  int top_logprobs_requested = 5;
  double epsilon_prob = 1e-4;
  int max_concurrent_requests = 4;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct PromptBundle {
  std::string text;
  std::string template_version{kTemplateVersion};
};

/// Step-wise verification prompt. A pure function of the case.
PromptBundle render_prompt(const StepCase& c);

struct ParsedResponse {
  std::string rationale;
  Label decision = Label::kNoError;
  bool parse_ok = false;
};

/// Finds the first well-formed JSON object carrying a "has_error" key,
/// tolerating surrounding prose and code fences. Never throws.
ParsedResponse parse_response(std::string_view raw_text);

/// Lowercased leading alphabetic run of a token, skipping any leading
/// non-letters: " Yes" -> "yes", "\"no" -> "no".
std::string leading_word(std::string_view token);

struct ClassMasses {
  double positive = 0.0;  // summed probability of tokens spelling the positive word
  double negative = 0.0;
};

/// Sums exp(logprob) over token variants of each word and floors each
/// class at `epsilon`.
ClassMasses class_masses(std::span<const TopToken> alternatives, std::string_view positive_word,
                         std::string_view negative_word, double epsilon);

/// Two-class belief from the alternatives at the decision position: the
/// "yes" mass is the error class, "no" the no-error class.
PredictiveDistribution extract_class_probs(std::span<const TopToken> alternatives,
                                           double epsilon);

/// Index of the token that renders the has_error value, if locatable.
std::optional<std::size_t> locate_decision_token(const std::vector<TokenLogprob>& tokens);

/// Alternatives at a position: the returned top-k plus the sampled token
/// itself when the server left it out.
std::vector<TopToken> alternatives_at(const TokenLogprob& tok);

std::optional<double> mean_token_logprob(const std::vector<TokenLogprob>& tokens);

/// Parses a verification completion into a JudgeSample.
JudgeSample make_sample(const Completion& completion, double temperature, double epsilon);

/// Folds greedy + diverse outcomes for one case. `outcomes` holds the
/// greedy result first, then the diverse ones in sample order; an empty
/// optional means the request failed with the matching `errors` entry.
StepVerification fold_step(const StepCase& c, const JudgeConfig& cfg,
                           const std::vector<std::optional<Completion>>& outcomes,
                           const std::vector<std::string>& errors);

/// One greedy and n_diverse diverse samples per case, issued concurrently
/// up to cfg.max_concurrent_requests. Results are in case order and do not
/// depend on request completion order.
std::vector<StepVerification> sample_steps(const std::vector<StepCase>& cases,
                                           const JudgeConfig& cfg, JudgeClient& client);

StepVerification sample_step(const StepCase& c, const JudgeConfig& cfg, JudgeClient& client);

/// Product of the per-step no-error probabilities. Throws on an empty list.
double solution_reward(std::span<const PredictiveDistribution> steps);

/// Per-request seed forwarded to servers that honor one.
std::uint64_t request_seed(std::uint64_t run_seed, const std::string& case_id, RequestKind kind,
                           int sample_index);

}  // namespace stepuq::judge
