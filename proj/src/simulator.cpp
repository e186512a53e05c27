#include "stepuq/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "stepuq/estimators.hpp"
#include "stepuq/io.hpp"
#include "stepuq/judge.hpp"
#include "stepuq/metrics.hpp"
#include "stepuq/rng.hpp"

namespace stepuq::sim {

namespace {

constexpr int kStyles = 4;
constexpr int kEmbeddingDim = 2 + kStyles;

double unit(std::mt19937_64& eng) { return rng::to_unit_interval(eng()); }

struct SampleDraw {
  double p_error = 0.5;
  Label decision = Label::kNoError;
};

// Token stream of a verification response with the has_error value as its
// own token carrying the class alternatives.
Completion render_completion(std::mt19937_64& eng, const SampleDraw& d, const std::string& rationale) {
  const double p_dec = d.decision == Label::kError ? d.p_error : 1.0 - d.p_error;
  const double h = -(d.p_error > 0 ? d.p_error * std::log(d.p_error) : 0.0) -
                   (d.p_error < 1 ? (1 - d.p_error) * std::log1p(-d.p_error) : 0.0);
  const std::string verdict = d.decision == Label::kError ? "yes" : "no";

  Completion c;
  c.tokens.push_back({"{\"reasoning\": \"", 0.0, {}});
  std::size_t start = 0;
  while (start < rationale.size()) {
    auto end = rationale.find(' ', start + 1);
    if (end == std::string::npos) end = rationale.size();
    const double scale = 0.5 + unit(eng);
    c.tokens.push_back({rationale.substr(start, end - start), -h * scale, {}});
    start = end;
  }
  c.tokens.push_back({"\", \"has_error\": \"", 0.0, {}});
  TokenLogprob dec{verdict, std::log(std::max(p_dec, 1e-300)), {}};
  if (d.p_error > 0.0) dec.top.push_back({"yes", std::log(d.p_error)});
  if (d.p_error < 1.0) dec.top.push_back({"no", std::log1p(-d.p_error)});
  std::sort(dec.top.begin(), dec.top.end(),
            [](const TopToken& a, const TopToken& b) { return a.logprob > b.logprob; });
  c.tokens.push_back(std::move(dec));
  c.tokens.push_back({"\"}", 0.0, {}});
  for (const auto& t : c.tokens) c.text += t.token;
  return c;
}

JudgeSample direct_sample(const Completion& c, const SampleDraw& d, double temperature,
                          double epsilon) {
  JudgeSample s = judge::make_sample(c, temperature, epsilon);
  // The synthetic judge exposes its exact belief rather than a floored
  // top-k reading.
  s.class_dist = PredictiveDistribution::from_error_prob(d.p_error);
  return s;
}

}  // namespace

void SimConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(fmt::format("{} must lie in [0,1]", name));
  };
  prob(step_error_rate, "step_error_rate");
  prob(judge_skill, "judge_skill");
  if (!(belief_concentration > 0.0)) throw std::invalid_argument("belief_concentration must be > 0");
  if (!(difficulty_concentration > 0.0)) throw std::invalid_argument("difficulty_concentration must be > 0");
  if (min_steps < 1 || max_steps < min_steps) throw std::invalid_argument("need 1 <= min_steps <= max_steps");
  if (n_diverse < 1) throw std::invalid_argument("n_diverse must be >= 1");
}

double sharpen(double u, double concentration) {
  if (std::isinf(concentration)) return 1.0;
  return std::pow(u, 1.0 / concentration);
}

double sample_beta(std::mt19937_64& eng, double mean, double concentration) {
  if (mean <= 0.0) return 0.0;
  if (mean >= 1.0) return 1.0;
  if (std::isinf(concentration)) return mean;
  std::gamma_distribution<double> ga(mean * concentration, 1.0);
  std::gamma_distribution<double> gb((1.0 - mean) * concentration, 1.0);
  const double a = ga(eng);
  const double b = gb(eng);
  if (a + b == 0.0) return unit(eng) < mean ? 1.0 : 0.0;
  return a / (a + b);
}

std::optional<int> draw_first_error(std::mt19937_64& eng, double rate, int length) {
  for (int t = 1; t <= length; ++t) {
    if (unit(eng) < rate) return t;
  }
  return std::nullopt;
}

std::string cluster_tag(Label decision, double p_decision) {
  const int style = std::clamp(static_cast<int>(std::floor(kStyles * p_decision)), 0, kStyles - 1);
  return fmt::format("c{}-k{}", to_int(decision), style);
}

std::vector<double> tag_vector(Label decision, int style) {
  std::vector<double> v(kEmbeddingDim, 0.0);
  v[static_cast<std::size_t>(to_int(decision))] = 1.0;
  v[2 + static_cast<std::size_t>(style)] = 0.6;
  return v;
}

SimCorpus generate_corpus(const SimConfig& cfg) {
  cfg.validate();
  const judge::JudgeConfig jcfg;
  SimCorpus corpus;

  for (std::size_t q = 0; q < cfg.n_questions; ++q) {
    std::mt19937_64 eng(rng::derive_seed(cfg.seed, q));
    ingest::RawAnnotation raw;
    raw.solution_id = fmt::format("q{:05d}", q);
    raw.question = fmt::format("Simulated question {}.", q);

    const int length = cfg.min_steps + static_cast<int>(rng::uniform_index(
                                           eng, static_cast<std::uint64_t>(cfg.max_steps - cfg.min_steps + 1)));
    const auto first_error = draw_first_error(eng, cfg.step_error_rate, length);
    const int n_steps = first_error.value_or(length);

    std::vector<std::string> preceding;
    for (int t = 1; t <= n_steps; ++t) {
      const Label truth = first_error && t == *first_error ? Label::kError : Label::kNoError;
      const std::string text = fmt::format("Step {} of simulated solution {}.", t, q);
      // Neutral ratings map to "no error" like positive ones.
      const int rating = truth == Label::kError ? -1 : (unit(eng) < 0.2 ? 0 : 1);
      raw.steps.push_back({text, rating});

      StepCase c;
      c.solution_id = raw.solution_id;
      c.step_index = t;
      c.case_id = make_case_id(c.solution_id, t);
      c.question = raw.question;
      c.preceding_steps = preceding;
      c.candidate_step = text;
      c.ground_truth = truth;
      preceding.push_back(text);
      if (truth == Label::kError) ++corpus.n_positive;

      // Latent probability that the judge leans toward the true label.
      const double skill = sample_beta(eng, cfg.judge_skill, cfg.difficulty_concentration);
      const double latent_error = truth == Label::kError ? skill : 1.0 - skill;

      // Each rationale leans toward one class with the latent probability and
      // holds that lean with confidence 0.5 + 0.5 * U^(1/concentration).
      auto draw = [&] {
        SampleDraw d;
        const bool leans_error = unit(eng) < latent_error;
        const double u = unit(eng);
        const double confidence =
            cfg.degenerate_beliefs ? 1.0 : 0.5 + 0.5 * sharpen(u, cfg.belief_concentration);
        d.p_error = leans_error ? confidence : 1.0 - confidence;
        d.decision = unit(eng) < d.p_error ? Label::kError : Label::kNoError;
        return d;
      };
      auto rationale_for = [&](const SampleDraw& d) {
        const double p_dec = d.decision == Label::kError ? d.p_error : 1.0 - d.p_error;
        return fmt::format("[{}] Simulated critique of step {}.", cluster_tag(d.decision, p_dec), t);
      };

      StepVerification v;
      v.case_id = c.case_id;

      // Low temperature: the greedy pass takes the argmax of its belief.
      SampleDraw g = draw();
      g.decision = g.p_error > 0.5 ? Label::kError : Label::kNoError;
      const Completion gc = render_completion(eng, g, rationale_for(g));
      corpus.script.push_back({c.case_id, RequestKind::kVerify, 0, gc, {}});
      v.greedy_sample = direct_sample(gc, g, jcfg.t_greedy, jcfg.epsilon_prob);
      v.predicted_label = g.decision;
      v.prediction_source = PredictionSource::kGreedyDecision;
      v.correct = correctness_of(v.predicted_label, truth);

      std::vector<double> agree;
      for (int k = 1; k <= cfg.n_diverse; ++k) {
        const SampleDraw d = draw();
        const Completion dc = render_completion(eng, d, rationale_for(d));
        corpus.script.push_back({c.case_id, RequestKind::kVerify, k, dc, {}});
        v.diverse_samples.push_back(direct_sample(dc, d, jcfg.t_diverse, jcfg.epsilon_prob));
        agree.push_back(g.decision == Label::kError ? d.p_error : 1.0 - d.p_error);
      }

      std::sort(agree.begin(), agree.end());
      const double p_true =
          std::clamp(std::accumulate(agree.begin(), agree.end(), 0.0) / static_cast<double>(agree.size()), 0.0, 1.0);
      Completion pc;
      TokenLogprob tok{p_true >= 0.5 ? "True" : "False", 0.0, {}};
      if (p_true > 0.0) tok.top.push_back({"True", std::log(p_true)});
      if (p_true < 1.0) tok.top.push_back({"False", std::log1p(-p_true)});
      tok.logprob = p_true >= 0.5 ? std::log(std::max(p_true, 1e-300)) : std::log1p(-p_true);
      pc.text = tok.token;
      pc.tokens.push_back(std::move(tok));
      corpus.script.push_back({c.case_id, RequestKind::kPTrue, 0, pc, {}});

      corpus.cases.push_back(std::move(c));
      corpus.verifications.push_back(std::move(v));
    }
    corpus.raw.push_back(std::move(raw));
  }

  for (const Label e : {Label::kNoError, Label::kError}) {
    for (int k = 0; k < kStyles; ++k) {
      corpus.embedder.add_tag(fmt::format("c{}-k{}", to_int(e), k), tag_vector(e, k));
    }
  }
  return corpus;
}

std::optional<double> oracle_separation_check(const SimCorpus& corpus, EstimatorId estimator) {
  MockJudgeClient client(corpus.script);
  MockEmbedder embedder = corpus.embedder;
  estimators::EstimateOptions opts;
  opts.estimators = {estimator};
  opts.random_seeds = {0};
  opts.p_true_client = &client;
  opts.embedder = &embedder;
  const auto run = estimators::estimate_all(corpus.cases, corpus.verifications, opts);
  const auto report = metrics::evaluate(corpus.cases, corpus.verifications, run.records);
  if (report.estimators.empty()) return std::nullopt;
  return report.estimators.front().auroc.mean;
}

void write_corpus_inputs(const SimCorpus& corpus, const std::filesystem::path& dir) {
  std::string raw;
  for (const auto& a : corpus.raw) raw += ingest::to_canonical_json(a).dump() + "\n";
  io::write_file(dir / "raw.jsonl", raw);

  std::string script;
  for (const auto& e : corpus.script) script += MockJudgeClient::entry_to_json(e).dump() + "\n";
  io::write_file(dir / "judge_script.jsonl", script);

  corpus.embedder.write(dir / "embeddings.jsonl");
}

}  // namespace stepuq::sim
