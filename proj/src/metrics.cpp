#include "stepuq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace stepuq::metrics {

using nlohmann::json;

namespace {

std::vector<std::pair<double, bool>> available_scores(std::span<const ScoredStep> scored) {
  std::vector<std::pair<double, bool>> out;
  out.reserve(scored.size());
  for (const auto& s : scored) {
    if (s.uncertainty) out.emplace_back(*s.uncertainty, s.correct);
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

struct Counts {
  std::uint64_t tp = 0, fp = 0, fn = 0;
};

Counts& operator+=(Counts& a, const ScoredStep& s) {
  const bool pred = s.predicted_label == Label::kError;
  const bool truth = s.ground_truth == Label::kError;
  if (pred && truth) ++a.tp;
  if (pred && !truth) ++a.fp;
  if (!pred && truth) ++a.fn;
  return a;
}

// Rational accumulator that stays exact while numerator and denominator fit
// in 53 bits, and degrades to long double otherwise.
class ExactSum {
 public:
  void add(std::uint64_t num, std::uint64_t den) {
    approx_ += static_cast<long double>(num) / static_cast<long double>(den);
    if (!exact_) return;
    const std::uint64_t g = std::gcd(den_, den);
    std::uint64_t new_den = 0, lhs = 0, rhs = 0, new_num = 0;
    if (__builtin_mul_overflow(den_ / g, den, &new_den) || __builtin_mul_overflow(num_, den / g, &lhs) ||
        __builtin_mul_overflow(num, den_ / g, &rhs) || __builtin_add_overflow(lhs, rhs, &new_num)) {
      exact_ = false;
      return;
    }
    const std::uint64_t r = std::gcd(new_num, new_den);
    num_ = new_num / r;
    den_ = new_den / r;
  }

  double divided_by(std::uint64_t k) const {
    constexpr std::uint64_t kMantissa = std::uint64_t{1} << 53;
    if (exact_) {
      const std::uint64_t g = std::gcd(num_, k);
      std::uint64_t den = 0;
      if (!__builtin_mul_overflow(den_, k / g, &den) && num_ / g < kMantissa && den < kMantissa) {
        return static_cast<double>(num_ / g) / static_cast<double>(den);
      }
    }
    return static_cast<double>(approx_ / static_cast<long double>(k));
  }

 private:
  std::uint64_t num_ = 0;
  std::uint64_t den_ = 1;
  bool exact_ = true;
  long double approx_ = 0.0L;
};

double f1_from(const Counts& c) {
  const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
  if (c.tp == 0 || denom == 0) return 0.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

}  // namespace

std::optional<double> auroc(std::span<const ScoredStep> scored) {
  const auto sorted = available_scores(scored);
  std::uint64_t n_correct = 0;
  for (const auto& [u, z] : sorted) n_correct += z ? 1 : 0;
  const std::uint64_t n_incorrect = sorted.size() - n_correct;
  if (n_correct == 0 || n_incorrect == 0) return std::nullopt;

  // Twice the Mann-Whitney statistic, kept in integers.
  std::uint64_t twice_wins = 0;
  std::uint64_t incorrect_above = n_incorrect;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::uint64_t c = 0, w = 0;
    for (; j < sorted.size() && sorted[j].first == sorted[i].first; ++j) {
      (sorted[j].second ? c : w) += 1;
    }
    incorrect_above -= w;
    twice_wins += 2 * c * incorrect_above + c * w;
    i = j;
  }
  return static_cast<double>(twice_wins) / static_cast<double>(2 * n_correct * n_incorrect);
}

std::optional<double> auprc(std::span<const ScoredStep> scored) {
  const auto sorted = available_scores(scored);
  std::uint64_t n_pos = 0;
  for (const auto& [u, z] : sorted) n_pos += z ? 1 : 0;
  if (n_pos == 0 || n_pos == sorted.size()) return std::nullopt;

  // sum of gained * tp / retained over tie groups; divided by n_pos at the end.
  ExactSum sum;
  std::uint64_t tp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::uint64_t gained = 0;
    for (; j < sorted.size() && sorted[j].first == sorted[i].first; ++j) {
      if (sorted[j].second) ++gained;
    }
    tp += gained;
    if (gained > 0) sum.add(gained * tp, j);
    i = j;
  }
  return sum.divided_by(n_pos);
}

double f1_error_class(std::span<const ScoredStep> scored) {
  Counts c;
  for (const auto& s : scored) c += s;
  return f1_from(c);
}

double accuracy(std::span<const ScoredStep> scored) {
  if (scored.empty()) return 0.0;
  const auto hits = std::count_if(scored.begin(), scored.end(),
                                  [](const ScoredStep& s) { return s.predicted_label == s.ground_truth; });
  return static_cast<double>(hits) / static_cast<double>(scored.size());
}

std::size_t retained_count(double coverage, std::size_t n) {
  const double raw = std::ceil(coverage * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 0.0)), n == 0 ? 0 : 1, n);
}

std::vector<std::size_t> retention_order(std::span<const ScoredStep> scored) {
  std::vector<std::size_t> idx(scored.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& sa = scored[a];
    const auto& sb = scored[b];
    if (sa.uncertainty.has_value() != sb.uncertainty.has_value()) return sa.uncertainty.has_value();
    if (sa.uncertainty && *sa.uncertainty != *sb.uncertainty) return *sa.uncertainty < *sb.uncertainty;
    if (sa.case_id != sb.case_id) return sa.case_id < sb.case_id;
    return a < b;
  });
  return idx;
}

std::vector<CurvePoint> rejection_curve(std::span<const ScoredStep> scored,
                                        std::span<const double> coverages) {
  for (std::size_t i = 0; i < coverages.size(); ++i) {
    if (!(coverages[i] > 0.0 && coverages[i] <= 1.0)) {
      throw std::invalid_argument(fmt::format("coverage {} outside (0, 1]", coverages[i]));
    }
    if (i > 0 && !(coverages[i] > coverages[i - 1])) {
      throw std::invalid_argument("coverages must be strictly increasing");
    }
  }
  const auto order = retention_order(scored);
  std::vector<Counts> prefix(order.size() + 1);
  for (std::size_t i = 0; i < order.size(); ++i) {
    prefix[i + 1] = prefix[i];
    prefix[i + 1] += scored[order[i]];
  }
  std::vector<CurvePoint> out;
  out.reserve(coverages.size());
  for (const double cov : coverages) {
    const auto k = retained_count(cov, scored.size());
    out.push_back({cov, f1_from(prefix[k]), k});
  }
  return out;
}

std::optional<double> au_f1c(std::span<const CurvePoint> curve) {
  constexpr double kTol = 1e-9;
  std::vector<CurvePoint> band;
  for (const auto& p : curve) {
    if (p.coverage >= kAuF1cLow - kTol && p.coverage <= kAuF1cHigh + kTol) band.push_back(p);
  }
  if (band.size() < 2 || std::abs(band.front().coverage - kAuF1cLow) > kTol ||
      std::abs(band.back().coverage - kAuF1cHigh) > kTol) {
    return std::nullopt;
  }
  double area = 0.0;
  for (std::size_t i = 1; i < band.size(); ++i) {
    area += 0.5 * (band[i].f1 + band[i - 1].f1) * (band[i].coverage - band[i - 1].coverage);
  }
  return area / (band.back().coverage - band.front().coverage);
}

std::vector<double> coverage_grid(int lo_pct, int hi_pct, int step_pct) {
  std::vector<double> out;
  for (int p = lo_pct; p <= hi_pct; p += step_pct) out.push_back(p / 100.0);
  return out;
}

const std::vector<double>& full_grid() {
  static const auto g = coverage_grid(30, 100, 1);
  return g;
}

const std::vector<double>& display_grid() {
  static const auto g = coverage_grid(60, 100, 4);
  return g;
}

Stat summarize(const std::vector<std::optional<double>>& values) {
  Stat s;
  if (values.empty()) return s;
  std::vector<double> xs;
  for (const auto& v : values) {
    if (!v) return s;
    xs.push_back(*v);
  }
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  if (*lo == *hi) {
    s.mean = *lo;
    return s;
  }
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (const double x : xs) ss += (x - mean) * (x - mean);
  s.mean = mean;
  s.stddev = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  return s;
}

EvalReport evaluate(const std::vector<StepCase>& cases,
                    const std::vector<StepVerification>& verifications,
                    const std::vector<UncertaintyRecord>& records) {
  std::map<std::string, const StepCase*> case_by_id;
  for (const auto& c : cases) case_by_id.emplace(c.case_id, &c);

  EvalReport report;
  std::vector<ScoredStep> base;
  std::size_t greedy_parsed = 0, diverse_total = 0, diverse_parsed = 0;
  for (const auto& v : verifications) {
    if (v.failed) {
      ++report.n_failed;
      continue;
    }
    const auto it = case_by_id.find(v.case_id);
    if (it == case_by_id.end()) {
      throw DataError(fmt::format("verification for unknown case '{}'", v.case_id));
    }
    if (v.correct != correctness_of(v.predicted_label, it->second->ground_truth)) {
      throw DataError(fmt::format("{}: stored correctness disagrees with labels", v.case_id));
    }
    base.push_back({v.case_id, std::nullopt, v.correct, v.predicted_label, it->second->ground_truth});
    greedy_parsed += v.greedy_sample.parse_ok ? 1 : 0;
    for (const auto& s : v.diverse_samples) {
      ++diverse_total;
      diverse_parsed += s.parse_ok ? 1 : 0;
    }
  }
  std::sort(base.begin(), base.end(),
            [](const ScoredStep& a, const ScoredStep& b) { return a.case_id < b.case_id; });

  report.n_steps = base.size();
  report.verification_accuracy = accuracy(base);
  report.verification_f1 = f1_error_class(base);
  std::size_t positives = 0;
  for (const auto& s : base) positives += s.ground_truth == Label::kError ? 1 : 0;
  if (!base.empty()) {
    report.positive_rate = static_cast<double>(positives) / static_cast<double>(base.size());
    report.greedy_parse_rate = static_cast<double>(greedy_parsed) / static_cast<double>(base.size());
  }
  if (diverse_total > 0) {
    report.diverse_parse_rate = static_cast<double>(diverse_parsed) / static_cast<double>(diverse_total);
  }
  for (const Label constant : {Label::kNoError, Label::kError}) {
    auto trivial = base;
    for (auto& s : trivial) s.predicted_label = constant;
    BaselineScore& b = constant == Label::kError ? report.all_ones : report.all_zeros;
    b.f1 = f1_error_class(trivial);
    b.accuracy = accuracy(trivial);
  }

  // (estimator, seed) -> case_id -> score
  std::map<EstimatorId, std::map<std::uint64_t, std::map<std::string, std::optional<double>>>> grouped;
  for (const auto& r : records) grouped[r.estimator][r.seed][r.case_id] = r.score;

  for (const EstimatorId id : all_estimators()) {
    const auto g = grouped.find(id);
    if (g == grouped.end()) continue;
    EstimatorMetrics em;
    em.estimator = id;
    em.n_seeds = g->second.size();

    std::vector<std::optional<double>> aurocs, auprcs, auf1cs;
    std::vector<std::vector<double>> curve_f1(full_grid().size());
    std::vector<CurvePoint> last_curve;
    for (const auto& [seed, scores] : g->second) {
      auto scored = base;
      std::size_t unavailable = 0;
      for (auto& s : scored) {
        const auto it = scores.find(s.case_id);
        if (it != scores.end()) s.uncertainty = it->second;
        if (!s.uncertainty) ++unavailable;
      }
      em.n_unavailable = std::max(em.n_unavailable, unavailable);
      em.n_scored = scored.size() - em.n_unavailable;
      aurocs.push_back(auroc(scored));
      auprcs.push_back(auprc(scored));
      last_curve = rejection_curve(scored, full_grid());
      auf1cs.push_back(au_f1c(last_curve));
      for (std::size_t k = 0; k < last_curve.size(); ++k) curve_f1[k].push_back(last_curve[k].f1);
    }
    em.auroc = summarize(aurocs);
    em.auprc = summarize(auprcs);
    em.au_f1c = summarize(auf1cs);
    for (std::size_t k = 0; k < last_curve.size(); ++k) {
      std::vector<std::optional<double>> vals(curve_f1[k].begin(), curve_f1[k].end());
      const Stat st = summarize(vals);
      em.curve.push_back({last_curve[k].coverage, st.mean.value_or(0.0), last_curve[k].n_retained});
      em.curve_std.push_back(st.stddev);
    }
    report.estimators.push_back(std::move(em));
  }
  return report;
}

namespace {

json stat_json(const Stat& s) {
  return json{{"mean", s.mean ? json(*s.mean) : json(nullptr)}, {"std", s.stddev}};
}

Stat stat_from_json(const json& j) {
  Stat s;
  if (!j.at("mean").is_null()) s.mean = j.at("mean").get<double>();
  s.stddev = j.at("std").get<double>();
  return s;
}

}  // namespace

json to_json(const EvalReport& r) {
  json ests = json::array();
  for (const auto& e : r.estimators) {
    json curve = json::array();
    for (std::size_t k = 0; k < e.curve.size(); ++k) {
      curve.push_back({{"coverage", e.curve[k].coverage},
                       {"f1", e.curve[k].f1},
                       {"f1_std", k < e.curve_std.size() ? e.curve_std[k] : 0.0},
                       {"n_retained", e.curve[k].n_retained}});
    }
    ests.push_back({{"estimator", std::string(to_string(e.estimator))},
                    {"n_seeds", e.n_seeds},
                    {"auroc", stat_json(e.auroc)},
                    {"auprc", stat_json(e.auprc)},
                    {"au_f1c", stat_json(e.au_f1c)},
                    {"n_scored", e.n_scored},
                    {"n_unavailable", e.n_unavailable},
                    {"rejection_curve", std::move(curve)}});
  }
  return json{{"n_steps", r.n_steps},
              {"n_failed", r.n_failed},
              {"verification_accuracy", r.verification_accuracy},
              {"verification_f1", r.verification_f1},
              {"positive_rate", r.positive_rate},
              {"greedy_parse_rate", r.greedy_parse_rate},
              {"diverse_parse_rate", r.diverse_parse_rate},
              {"baselines",
               {{"all_zeros", {{"f1", r.all_zeros.f1}, {"accuracy", r.all_zeros.accuracy}}},
                {"all_ones", {{"f1", r.all_ones.f1}, {"accuracy", r.all_ones.accuracy}}}}},
              {"estimators", std::move(ests)}};
}

EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  r.n_steps = j.at("n_steps").get<std::size_t>();
  r.n_failed = j.at("n_failed").get<std::size_t>();
  r.verification_accuracy = j.at("verification_accuracy").get<double>();
  r.verification_f1 = j.at("verification_f1").get<double>();
  r.positive_rate = j.at("positive_rate").get<double>();
  r.greedy_parse_rate = j.value("greedy_parse_rate", 0.0);
  r.diverse_parse_rate = j.value("diverse_parse_rate", 0.0);
  const auto& b = j.at("baselines");
  r.all_zeros = {b.at("all_zeros").at("f1").get<double>(), b.at("all_zeros").at("accuracy").get<double>()};
  r.all_ones = {b.at("all_ones").at("f1").get<double>(), b.at("all_ones").at("accuracy").get<double>()};
  for (const auto& e : j.at("estimators")) {
    EstimatorMetrics em;
    const auto name = e.at("estimator").get<std::string>();
    const auto id = estimator_from_string(name);
    if (!id) throw DataError(fmt::format("unknown estimator '{}' in report", name));
    em.estimator = *id;
    em.n_seeds = e.at("n_seeds").get<std::size_t>();
    em.auroc = stat_from_json(e.at("auroc"));
    em.auprc = stat_from_json(e.at("auprc"));
    em.au_f1c = stat_from_json(e.at("au_f1c"));
    em.n_scored = e.at("n_scored").get<std::size_t>();
    em.n_unavailable = e.at("n_unavailable").get<std::size_t>();
    for (const auto& p : e.at("rejection_curve")) {
      em.curve.push_back({p.at("coverage").get<double>(), p.at("f1").get<double>(),
                          p.at("n_retained").get<std::size_t>()});
      em.curve_std.push_back(p.value("f1_std", 0.0));
    }
    r.estimators.push_back(std::move(em));
  }
  return r;
}

}  // namespace stepuq::metrics
