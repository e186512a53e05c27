#include "stepuq/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "stepuq/concurrency.hpp"
#include "stepuq/rng.hpp"

namespace stepuq::judge {

using nlohmann::json;

void JudgeConfig::validate() const {
  if (t_greedy < 0.0 || t_diverse < 0.0) throw std::invalid_argument("temperatures must be >= 0");
  if (n_diverse < 1) throw std::invalid_argument("n_diverse must be >= 1");
  if (!(epsilon_prob > 0.0 && epsilon_prob <= 0.01)) {
    throw std::invalid_argument("epsilon_prob must lie in (0, 0.01]");
  }
  if (max_concurrent_requests < 1) throw std::invalid_argument("max_concurrent_requests must be >= 1");
  if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
  if (top_logprobs_requested < 1) throw std::invalid_argument("top_logprobs_requested must be >= 1");
}

namespace {

constexpr std::string_view kPreamble =
    "You are a professional mathematician. Given a problem and the previously proposed steps, "
    "your task is to evaluate whether the next proposed step contains any errors in relation to "
    "the preceding steps, giving your reasoning. If there is an error, state \"yes\". If there is "
    "no error, state \"no\". Focus solely on the transition from the previous step to the next.\n"
    "\n"
    "The evaluation should adhere to the following criteria:\n"
    "\n"
    "1. Accuracy: Verify all calculations, including algebraic manipulations and numerical "
    "computations, are correct.\n"
    "\n"
    "2. Logical Progression: Ensure the next proposed step follows logically from the previous "
    "step, applying mathematical rules, theorems, or formulas correctly, and making reasonable "
    "observations. Note: Omit this criterion if the step being evaluated is the first step, as "
    "there are no preceding steps to compare.\n"
    "\n"
    "3. Step-by-Step Focus: Evaluate only the immediate transition from the previous step to the "
    "next proposed step. Do not mark the next step as incorrect for not performing an action that "
    "should logically occur in a future step.\n"
    "\n";

constexpr std::string_view kFormatInstruction =
    "Now, generate your response in the following JSON format. Give your reasoning in short and "
    "concise sentences after \"reasoning\", then output your final evaluation after "
    "\"has_error\".\n"
    "\n"
    "{\"reasoning\": \"Your reasoning here.\", \"has_error\": \"yes/no\"}";

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return out;
}

// End offset (exclusive) of the balanced object starting at `open`, or npos.
std::size_t match_object(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (ch == '\\') {
        escaped = true;
      } else if (ch == '"') {
        in_string = false;
      }
      continue;
    }
    if (ch == '"') {
      in_string = true;
    } else if (ch == '{') {
      ++depth;
    } else if (ch == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::optional<Label> normalize_verdict(const json& v) {
  if (v.is_boolean()) return v.get<bool>() ? Label::kError : Label::kNoError;
  if (!v.is_string()) return std::nullopt;
  const std::string word = leading_word(v.get<std::string>());
  if (word == "yes") return Label::kError;
  if (word == "no") return Label::kNoError;
  return std::nullopt;
}

}  // namespace

PromptBundle render_prompt(const StepCase& c) {
  std::string preceding;
  if (c.preceding_steps.empty()) {
    preceding = "(none)";
  } else {
    for (std::size_t i = 0; i < c.preceding_steps.size(); ++i) {
      preceding += fmt::format("\nStep {}: {}", i + 1, c.preceding_steps[i]);
    }
  }
  PromptBundle out;
  out.text = fmt::format("{}Problem: {}\nPreceding Steps: {}\n\nNext Proposed Step to be Evaluated: {}\n\n{}",
                         kPreamble, c.question, preceding, c.candidate_step, kFormatInstruction);
  return out;
}

ParsedResponse parse_response(std::string_view raw_text) {
  ParsedResponse out;
  for (std::size_t pos = raw_text.find('{'); pos != std::string_view::npos;
       pos = raw_text.find('{', pos + 1)) {
    const auto end = match_object(raw_text, pos);
    if (end == std::string_view::npos) continue;
    json obj = json::parse(raw_text.substr(pos, end - pos), nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) continue;
    const auto it = obj.find("has_error");
    if (it == obj.end()) continue;
    const auto verdict = normalize_verdict(*it);
    if (!verdict) return out;
    if (const auto r = obj.find("reasoning"); r != obj.end() && r->is_string()) {
      out.rationale = r->get<std::string>();
    }
    out.decision = *verdict;
    out.parse_ok = true;
    return out;
  }
  return out;
}

std::string leading_word(std::string_view token) {
  std::size_t i = 0;
  while (i < token.size() && !std::isalpha(static_cast<unsigned char>(token[i]))) ++i;
  std::size_t j = i;
  while (j < token.size() && std::isalpha(static_cast<unsigned char>(token[j]))) ++j;
  return lower(token.substr(i, j - i));
}

ClassMasses class_masses(std::span<const TopToken> alternatives, std::string_view positive_word,
                         std::string_view negative_word, double epsilon) {
  ClassMasses m;
  for (const auto& alt : alternatives) {
    const std::string w = leading_word(alt.token);
    if (w == positive_word) {
      m.positive += std::exp(alt.logprob);
    } else if (w == negative_word) {
      m.negative += std::exp(alt.logprob);
    }
  }
  m.positive = std::clamp(m.positive, epsilon, 1.0);
  m.negative = std::clamp(m.negative, epsilon, 1.0);
  return m;
}

PredictiveDistribution extract_class_probs(std::span<const TopToken> alternatives,
                                           double epsilon) {
  const ClassMasses m = class_masses(alternatives, "yes", "no", epsilon);
  return PredictiveDistribution::normalize(m.negative, m.positive);
}

std::optional<std::size_t> locate_decision_token(const std::vector<TokenLogprob>& tokens) {
  if (tokens.empty()) return std::nullopt;
  std::string text;
  std::vector<std::size_t> starts;
  starts.reserve(tokens.size());
  for (const auto& t : tokens) {
    starts.push_back(text.size());
    text += t.token;
  }
  static const std::regex kValue(R"re("has_error"\s*:\s*"?\s*([A-Za-z]))re");
  std::smatch m;
  if (!std::regex_search(text, m, kValue)) return std::nullopt;
  const auto offset = static_cast<std::size_t>(m.position(1));
  const auto it = std::upper_bound(starts.begin(), starts.end(), offset);
  return static_cast<std::size_t>(std::distance(starts.begin(), it) - 1);
}

std::vector<TopToken> alternatives_at(const TokenLogprob& tok) {
  std::vector<TopToken> alts = tok.top;
  const bool listed = std::any_of(alts.begin(), alts.end(),
                                  [&](const TopToken& a) { return a.token == tok.token; });
  if (!listed) alts.push_back({tok.token, tok.logprob});
  return alts;
}

std::optional<double> mean_token_logprob(const std::vector<TokenLogprob>& tokens) {
  if (tokens.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& t : tokens) sum += t.logprob;
  return sum / static_cast<double>(tokens.size());
}

JudgeSample make_sample(const Completion& completion, double temperature, double epsilon) {
  JudgeSample s;
  s.temperature = temperature;
  s.response_text = completion.text;
  const ParsedResponse parsed = parse_response(completion.text);
  s.rationale = parsed.rationale;
  s.decision = parsed.decision;
  s.parse_ok = parsed.parse_ok;
  s.mean_token_logprob = mean_token_logprob(completion.tokens);

  s.raw_token_prob_yes = epsilon;
  s.raw_token_prob_no = epsilon;
  if (const auto pos = locate_decision_token(completion.tokens)) {
    const auto alts = alternatives_at(completion.tokens[*pos]);
    const ClassMasses m = class_masses(alts, "yes", "no", epsilon);
    s.raw_token_prob_yes = m.positive;
    s.raw_token_prob_no = m.negative;
    s.probs_ok = true;
  }
  s.class_dist = PredictiveDistribution::normalize(s.raw_token_prob_no, s.raw_token_prob_yes);
  return s;
}

std::uint64_t request_seed(std::uint64_t run_seed, const std::string& case_id, RequestKind kind,
                           int sample_index) {
  const std::uint64_t stream = rng::fnv1a64(case_id) ^
                               (static_cast<std::uint64_t>(kind) << 56) ^
                               static_cast<std::uint64_t>(sample_index);
  // Many servers reject seeds above 2^63.
  return rng::derive_seed(run_seed, stream) >> 1;
}

StepVerification fold_step(const StepCase& c, const JudgeConfig& cfg,
                           const std::vector<std::optional<Completion>>& outcomes,
                           const std::vector<std::string>& errors) {
  StepVerification v;
  v.case_id = c.case_id;
  if (outcomes.empty() || !outcomes.front()) {
    v.failed = true;
    v.failure_cause = errors.empty() ? "no greedy outcome" : errors.front();
    return v;
  }
  v.greedy_sample = make_sample(*outcomes.front(), cfg.t_greedy, cfg.epsilon_prob);

  std::size_t dropped = 0;
  std::string first_cause;
  for (std::size_t i = 1; i < outcomes.size(); ++i) {
    if (outcomes[i]) {
      v.diverse_samples.push_back(make_sample(*outcomes[i], cfg.t_diverse, cfg.epsilon_prob));
    } else {
      ++dropped;
      if (first_cause.empty() && i < errors.size()) first_cause = errors[i];
    }
  }
  if (dropped > 0) {
    v.shortfall_reason = fmt::format("{} of {} diverse samples failed: {}", dropped,
                                     outcomes.size() - 1, first_cause);
  }

  const JudgeSample& g = v.greedy_sample;
  if (g.parse_ok) {
    v.predicted_label = g.decision;
    v.prediction_source = PredictionSource::kGreedyDecision;
    const double pe = g.class_dist.p_error();
    if (g.probs_ok && pe != 0.5 && g.class_dist.argmax() != g.decision) {
      v.argmax_anomaly = true;
      spdlog::warn("{}: greedy decision {} disagrees with class distribution p_error={:.4f}",
                   c.case_id, to_int(g.decision), pe);
    }
  } else if (g.probs_ok) {
    v.predicted_label = g.class_dist.argmax();
    v.prediction_source = PredictionSource::kGreedyProbs;
  } else {
    int votes_error = 0;
    int votes_total = 0;
    for (const auto& s : v.diverse_samples) {
      if (!s.parse_ok) continue;
      ++votes_total;
      if (s.decision == Label::kError) ++votes_error;
    }
    if (votes_total > 0) {
      v.predicted_label = 2 * votes_error > votes_total ? Label::kError : Label::kNoError;
      v.prediction_source = PredictionSource::kDiverseMajority;
    } else {
      v.predicted_label = Label::kNoError;
      v.prediction_source = PredictionSource::kDefault;
    }
  }
  v.correct = correctness_of(v.predicted_label, c.ground_truth);
  return v;
}

std::vector<StepVerification> sample_steps(const std::vector<StepCase>& cases,
                                           const JudgeConfig& cfg, JudgeClient& client) {
  cfg.validate();
  const std::size_t per_case = 1 + static_cast<std::size_t>(cfg.n_diverse);
  const std::size_t total = cases.size() * per_case;

  std::vector<CompletionRequest> requests(total);
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const std::string prompt = render_prompt(cases[ci]).text;
    for (std::size_t k = 0; k < per_case; ++k) {
      CompletionRequest& r = requests[ci * per_case + k];
      r.case_id = cases[ci].case_id;
      r.kind = RequestKind::kVerify;
      r.sample_index = static_cast<int>(k);
      r.prompt = prompt;
      r.temperature = k == 0 ? cfg.t_greedy : cfg.t_diverse;
      r.max_tokens = cfg.max_tokens;
      r.top_logprobs = cfg.top_logprobs_requested;
      r.seed = request_seed(cfg.seed, r.case_id, r.kind, r.sample_index);
    }
  }

  std::vector<std::optional<Completion>> outcomes(total);
  std::vector<std::string> errors(total);
  run_bounded(total, cfg.max_concurrent_requests, [&](std::size_t i) {
    try {
      outcomes[i] = client.complete(requests[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  std::vector<StepVerification> out;
  out.reserve(cases.size());
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const auto first = static_cast<std::ptrdiff_t>(ci * per_case);
    const auto last = first + static_cast<std::ptrdiff_t>(per_case);
    std::vector<std::optional<Completion>> slice(outcomes.begin() + first, outcomes.begin() + last);
    std::vector<std::string> errs(errors.begin() + first, errors.begin() + last);
    out.push_back(fold_step(cases[ci], cfg, slice, errs));
  }
  return out;
}

StepVerification sample_step(const StepCase& c, const JudgeConfig& cfg, JudgeClient& client) {
  return sample_steps({c}, cfg, client).front();
}

double solution_reward(std::span<const PredictiveDistribution> steps) {
  if (steps.empty()) throw std::invalid_argument("solution_reward needs at least one step");
  double r = 1.0;
  for (const auto& d : steps) r *= d.p_no_error();
  return r;
}

}  // namespace stepuq::judge
