#include "stepuq/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "stepuq/concurrency.hpp"
#include "stepuq/rng.hpp"

namespace stepuq::estimators {

namespace {

// Sorted before summation so the result does not depend on sample order.
double order_free_mean(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double sum = std::accumulate(xs.begin(), xs.end(), 0.0);
  return sum / static_cast<double>(xs.size());
}

std::string verdict_word(Label l) { return l == Label::kError ? "yes" : "no"; }

}  // namespace

double binary_entropy(double p) {
  p = std::clamp(p, 0.0, 1.0);
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return h;
}

ClusterSet cluster_by_decision(std::span<const JudgeSample> samples) {
  ClusterSet cs;
  for (const auto& s : samples) {
    if (s.parse_ok) cs.members[to_int(s.decision)].push_back(s.class_dist);
  }
  return cs;
}

std::vector<PredictiveDistribution> usable_distributions(std::span<const JudgeSample> samples) {
  std::vector<PredictiveDistribution> out;
  for (const auto& s : samples) {
    if (s.parse_ok && s.probs_ok && s.class_dist.is_valid()) out.push_back(s.class_dist);
  }
  return out;
}

std::optional<PredictiveDistribution> posterior_predictive(std::span<const JudgeSample> samples) {
  const auto usable = usable_distributions(samples);
  if (usable.empty()) return std::nullopt;
  std::vector<double> p_err;
  p_err.reserve(usable.size());
  for (const auto& d : usable) p_err.push_back(d.p_error());
  return PredictiveDistribution::from_error_prob(std::clamp(order_free_mean(std::move(p_err)), 0.0, 1.0));
}

Estimate cot_entropy(std::span<const JudgeSample> samples) {
  const auto post = posterior_predictive(samples);
  if (!post) return {std::nullopt, 0, "no usable samples with class probabilities"};
  return {binary_entropy(post->p_error()), static_cast<int>(usable_distributions(samples).size()), {}};
}

Estimate cot_entropy_discrete(std::span<const JudgeSample> samples) {
  const ClusterSet cs = cluster_by_decision(samples);
  const auto n = cs.total();
  if (n == 0) return {std::nullopt, 0, "no parsed decisions"};
  const double freq = static_cast<double>(cs.count(Label::kError)) / static_cast<double>(n);
  return {binary_entropy(freq), static_cast<int>(n), {}};
}

Estimate naive_entropy(std::span<const JudgeSample> samples) {
  std::vector<double> lps;
  for (const auto& s : samples) {
    if (s.mean_token_logprob) lps.push_back(*s.mean_token_logprob);
  }
  if (lps.empty()) return {std::nullopt, 0, "no token log-probabilities"};
  Estimate e{-order_free_mean(lps), static_cast<int>(lps.size()), {}};
  if (lps.size() != samples.size()) {
    e.note = fmt::format("{} of {} samples lack log-probabilities", samples.size() - lps.size(),
                         samples.size());
  }
  return e;
}

double seu_from_vectors(const std::vector<std::vector<double>>& vectors) {
  std::vector<double> sims;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = i + 1; j < vectors.size(); ++j) {
      const auto& a = vectors[i];
      const auto& b = vectors[j];
      if (a.size() != b.size()) throw Error("embedding dimensions differ");
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
      }
      if (na == 0.0 || nb == 0.0) throw Error("zero-length embedding");
      sims.push_back(std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0));
    }
  }
  if (sims.empty()) return 0.0;
  return 1.0 - order_free_mean(std::move(sims));
}

Estimate seu(std::span<const JudgeSample> samples, Embedder& embedder) {
  std::vector<std::string> texts;
  for (const auto& s : samples) {
    if (s.parse_ok) texts.push_back(s.full_response());
  }
  if (texts.size() < 2) {
    return {0.0, static_cast<int>(texts.size()), "low-sample: fewer than 2 parsed responses"};
  }
  try {
    auto vectors = embedder.embed(texts);
    if (vectors.size() != texts.size()) throw Error("embedder returned wrong vector count");
    return {seu_from_vectors(vectors), static_cast<int>(texts.size()), {}};
  } catch (const std::exception& e) {
    return {std::nullopt, 0, fmt::format("embedder failure: {}", e.what())};
  }
}

double random_baseline(std::uint64_t seed, const std::string& case_id) {
  return rng::to_unit_interval(rng::derive_seed(seed, rng::fnv1a64(case_id)));
}

std::optional<DecompositionResult> decompose(std::span<const JudgeSample> samples) {
  const auto usable = usable_distributions(samples);
  if (usable.empty()) return std::nullopt;
  std::vector<double> p_err;
  std::vector<double> h;
  for (const auto& d : usable) {
    p_err.push_back(d.p_error());
    h.push_back(binary_entropy(d.p_error()));
  }
  DecompositionResult r;
  r.total = binary_entropy(order_free_mean(std::move(p_err)));
  r.aleatoric = order_free_mean(std::move(h));
  r.epistemic = r.total - r.aleatoric;
  return r;
}

std::string render_p_true_prompt(const StepCase& c, const StepVerification& v) {
  std::string preceding;
  if (c.preceding_steps.empty()) {
    preceding = "(none)";
  } else {
    for (std::size_t i = 0; i < c.preceding_steps.size(); ++i) {
      preceding += fmt::format("\nStep {}: {}", i + 1, c.preceding_steps[i]);
    }
  }
  std::string brainstormed;
  int k = 0;
  for (const auto& s : v.diverse_samples) {
    if (!s.parse_ok) continue;
    brainstormed += fmt::format("{}. has_error: {}. Reasoning: {}\n", ++k, verdict_word(s.decision),
                                s.rationale);
  }
  if (k == 0) brainstormed = "(none)\n";
  return fmt::format(
      "You are a professional mathematician checking a verdict about one step of a solution.\n"
      "\n"
      "Problem: {}\n"
      "Preceding Steps: {}\n"
      "\n"
      "Next Proposed Step to be Evaluated: {}\n"
      "\n"
      "Question: Does the next proposed step contain an error?\n"
      "Brainstormed answers:\n"
      "{}"
      "Proposed answer: has_error: {}. Reasoning: {}\n"
      "\n"
      "Is the proposed answer:\n"
      " (A) True\n"
      " (B) False\n"
      "Answer with a single word, True or False.\n"
      "The proposed answer is:",
      c.question, preceding, c.candidate_step, brainstormed, verdict_word(v.predicted_label),
      v.greedy_sample.rationale);
}

std::optional<double> p_true_probability(const Completion& completion, double epsilon) {
  for (const auto& tok : completion.tokens) {
    const std::string w = judge::leading_word(tok.token);
    if (w != "true" && w != "false") continue;
    const auto alts = judge::alternatives_at(tok);
    const auto m = judge::class_masses(alts, "true", "false", epsilon);
    return m.positive / (m.positive + m.negative);
  }
  return std::nullopt;
}

Estimate p_true(const StepCase& c, const StepVerification& v, const judge::JudgeConfig& cfg,
                JudgeClient& client) {
  if (v.failed) return {std::nullopt, 0, "verification failed"};
  CompletionRequest req;
  req.case_id = c.case_id;
  req.kind = RequestKind::kPTrue;
  req.sample_index = 0;
  req.prompt = render_p_true_prompt(c, v);
  req.temperature = cfg.t_greedy;
  req.max_tokens = 4;
  req.top_logprobs = cfg.top_logprobs_requested;
  req.seed = judge::request_seed(cfg.seed, c.case_id, req.kind, 0);
  try {
    const auto prob = p_true_probability(client.complete(req), cfg.epsilon_prob);
    if (!prob) return {std::nullopt, 0, "no True/False token in response"};
    return {1.0 - *prob, static_cast<int>(v.diverse_samples.size()), {}};
  } catch (const std::exception& e) {
    return {std::nullopt, 0, fmt::format("p_true request failed: {}", e.what())};
  }
}

EstimateRun estimate_all(const std::vector<StepCase>& cases,
                         const std::vector<StepVerification>& verifications,
                         const EstimateOptions& opts) {
  std::map<std::string, const StepCase*> case_by_id;
  for (const auto& c : cases) case_by_id.emplace(c.case_id, &c);

  struct Pair {
    const StepCase* c;
    const StepVerification* v;
  };
  std::vector<Pair> pairs;
  for (const auto& v : verifications) {
    if (v.failed) continue;
    const auto it = case_by_id.find(v.case_id);
    if (it == case_by_id.end()) {
      throw DataError(fmt::format("verification for unknown case '{}'", v.case_id));
    }
    pairs.push_back({it->second, &v});
  }

  const std::vector<EstimatorId> ids = opts.estimators.empty() ? all_estimators() : opts.estimators;
  EstimateRun run;

  auto emit = [&](EstimatorId id, const std::vector<Estimate>& ests, std::uint64_t seed) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      run.records.push_back(
          {pairs[i].c->case_id, id, ests[i].score, ests[i].n_used, seed, ests[i].note});
    }
  };
  auto per_step = [&](auto&& fn) {
    std::vector<Estimate> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(fn(*p.c, *p.v));
    return out;
  };

  for (const EstimatorId id : ids) {
    switch (id) {
      case EstimatorId::kCotEntropy:
        emit(id, per_step([](const StepCase&, const StepVerification& v) { return cot_entropy(v.diverse_samples); }), 0);
        break;
      case EstimatorId::kCotEntropyDiscrete:
        emit(id, per_step([](const StepCase&, const StepVerification& v) { return cot_entropy_discrete(v.diverse_samples); }), 0);
        break;
      case EstimatorId::kNaiveEntropy:
        emit(id, per_step([](const StepCase&, const StepVerification& v) { return naive_entropy(v.diverse_samples); }), 0);
        break;
      case EstimatorId::kTotal:
      case EstimatorId::kAleatoric:
      case EstimatorId::kEpistemic:
        emit(id, per_step([id](const StepCase&, const StepVerification& v) -> Estimate {
               const auto d = decompose(v.diverse_samples);
               if (!d) return {std::nullopt, 0, "no usable samples with class probabilities"};
               const int n = static_cast<int>(usable_distributions(v.diverse_samples).size());
               const double s = id == EstimatorId::kTotal       ? d->total
                                : id == EstimatorId::kAleatoric ? d->aleatoric
                                                                : d->epistemic;
               return {s, n, {}};
             }), 0);
        break;
      case EstimatorId::kRandom: {
        const auto seeds = opts.random_seeds.empty() ? std::vector<std::uint64_t>{0} : opts.random_seeds;
        for (const auto seed : seeds) {
          emit(id, per_step([seed](const StepCase& c, const StepVerification&) -> Estimate {
                 return {random_baseline(seed, c.case_id), 0, {}};
               }), seed);
        }
        break;
      }
      case EstimatorId::kSeu:
        if (opts.embedder == nullptr) {
          run.skipped.push_back("seu: no embedder configured");
          break;
        }
        emit(id, per_step([&](const StepCase&, const StepVerification& v) { return seu(v.diverse_samples, *opts.embedder); }), 0);
        break;
      case EstimatorId::kPTrue: {
        if (opts.p_true_client == nullptr) {
          run.skipped.push_back("p_true: no judge client configured");
          break;
        }
        std::vector<Estimate> ests(pairs.size());
        run_bounded(pairs.size(), opts.judge_cfg.max_concurrent_requests, [&](std::size_t i) {
          ests[i] = p_true(*pairs[i].c, *pairs[i].v, opts.judge_cfg, *opts.p_true_client);
        });
        emit(id, ests, 0);
        break;
      }
    }
  }
  return run;
}

}  // namespace stepuq::estimators
