#pragma once

// Test-side reference computations. Each one is written from the definition,
// deliberately by a different route than the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "stepuq/core.hpp"
#include "stepuq/metrics.hpp"

namespace oracle {

/// Reduced fraction with 64-bit parts; ample for instances of a dozen steps.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Fraction& operator+=(const Fraction& o) {
    const std::int64_t n = num * o.den + o.num * den;
    const std::int64_t d = den * o.den;
    const std::int64_t g = std::gcd(n, d);
    num = n / g;
    den = d / g;
    return *this;
  }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

inline Fraction make_fraction(std::int64_t n, std::int64_t d) {
  const std::int64_t g = std::gcd(n, d);
  return {n / g, d / g};
}

/// Pairwise count over every (correct, incorrect) pair; ties score one half.
inline std::optional<double> auroc(const std::vector<double>& u, const std::vector<bool>& z) {
  std::int64_t half_points = 0, pairs = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!z[i]) continue;
    for (std::size_t j = 0; j < u.size(); ++j) {
      if (z[j]) continue;
      ++pairs;
      if (u[i] < u[j]) half_points += 2;
      if (u[i] == u[j]) half_points += 1;
    }
  }
  if (pairs == 0) return std::nullopt;
  return make_fraction(half_points, 2 * pairs).value();
}

/// Sweeps every distinct confidence threshold; at each one computes the
/// precision and recall of "confidence >= threshold" from scratch.
inline std::optional<double> auprc(const std::vector<double>& u, const std::vector<bool>& z) {
  const auto positives = std::count(z.begin(), z.end(), true);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(z.size())) return std::nullopt;
  std::vector<double> thresholds;
  for (const double x : u) thresholds.push_back(-x);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  Fraction ap;
  std::int64_t prev_tp = 0;
  for (const double t : thresholds) {
    std::int64_t tp = 0, predicted = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (-u[i] >= t) {
        ++predicted;
        if (z[i]) ++tp;
      }
    }
    // (recall gain) * precision = ((tp - prev)/P) * (tp/predicted)
    if (tp > prev_tp) ap += make_fraction((tp - prev_tp) * tp, positives * predicted);
    prev_tp = tp;
  }
  return ap.value();
}

inline double entropy(double p) {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
  return h;
}

/// 2PR/(P+R) from raw precision and recall.
inline double f1(const std::vector<stepuq::Label>& pred, const std::vector<stepuq::Label>& truth) {
  double tp = 0, pp = 0, ap = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == stepuq::Label::kError;
    const bool t = truth[i] == stepuq::Label::kError;
    tp += (p && t) ? 1 : 0;
    pp += p ? 1 : 0;
    ap += t ? 1 : 0;
  }
  if (tp == 0) return 0.0;
  const double precision = tp / pp;
  const double recall = tp / ap;
  return 2 * precision * recall / (precision + recall);
}

inline std::vector<stepuq::metrics::ScoredStep> scored(const std::vector<double>& u,
                                                       const std::vector<bool>& z) {
  std::vector<stepuq::metrics::ScoredStep> out;
  for (std::size_t i = 0; i < u.size(); ++i) {
    stepuq::metrics::ScoredStep s;
    s.case_id = "c" + std::to_string(100 + i);
    s.uncertainty = u[i];
    s.correct = z[i];
    out.push_back(s);
  }
  return out;
}

/// A parsed sample holding the given error probability.
inline stepuq::JudgeSample sample_with(double p_error, std::optional<stepuq::Label> decision = {}) {
  stepuq::JudgeSample s;
  s.parse_ok = true;
  s.probs_ok = true;
  s.class_dist = stepuq::PredictiveDistribution::from_error_prob(p_error);
  s.decision = decision.value_or(p_error > 0.5 ? stepuq::Label::kError : stepuq::Label::kNoError);
  s.rationale = "r";
  return s;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* root = std::getenv("STEPUQ_TEST_TMP");
  auto dir = std::filesystem::path(root ? root : std::filesystem::temp_directory_path().string()) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
