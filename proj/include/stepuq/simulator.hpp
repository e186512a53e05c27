#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "stepuq/client.hpp"
#include "stepuq/core.hpp"
#include "stepuq/ingest.hpp"

namespace stepuq::sim {

struct SimConfig {
  std::size_t n_questions = 300;
  double step_error_rate = 0.12;  // per-step error probability
  double judge_skill = 0.85;      // mean of the latent correct-judgment probability
  // Sharpness of per-rationale beliefs; +inf makes every belief 0 or 1.
  double belief_concentration = 8.0;
  double difficulty_concentration = 4.0;  // spread of the latent itself
  int min_steps = 3;
  int max_steps = 12;
  int n_diverse = 10;
  // Same as an infinite belief_concentration.
  bool degenerate_beliefs = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimCorpus {
  std::vector<StepCase> cases;
  std::vector<StepVerification> verifications;
  std::vector<ingest::RawAnnotation> raw;
  std::vector<MockJudgeClient::Entry> script;  // verify + p_true responses
  MockEmbedder embedder;
  std::size_t n_positive = 0;
};

/// Fully deterministic in cfg.seed; questions draw from independent
/// sub-seeded streams.
SimCorpus generate_corpus(const SimConfig& cfg);

/// u^(1/concentration): a Beta(concentration, 1) draw from the uniform u.
double sharpen(double u, double concentration);

/// Beta draw parameterized by mean and concentration. Means of exactly 0 or
/// 1, or an infinite concentration, return the mean.
double sample_beta(std::mt19937_64& eng, double mean, double concentration);

/// Index of the first error in a trace of `length` steps, or nullopt when
/// the trace has none.
std::optional<int> draw_first_error(std::mt19937_64& eng, double rate, int length);

/// Decision-cluster tag embedded in simulated rationales, e.g. "c1-k2".
std::string cluster_tag(Label decision, double p_decision);

/// Orthogonal decision axes plus a style offset per tag.
std::vector<double> tag_vector(Label decision, int style);

/// AUROC of `estimator` for correctness prediction on a simulated corpus,
/// run through the estimate and evaluate stages.
std::optional<double> oracle_separation_check(const SimCorpus& corpus, EstimatorId estimator);

/// Writes raw.jsonl, judge_script.jsonl and embeddings.jsonl into `dir`.
void write_corpus_inputs(const SimCorpus& corpus, const std::filesystem::path& dir);

}  // namespace stepuq::sim
