#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "stepuq/metrics.hpp"

using namespace stepuq;
using namespace stepuq::metrics;

namespace {

struct Instance {
  std::vector<double> u;
  std::vector<bool> z;
};

// Scores drawn from a small grid so ties are common.
Instance random_instance(std::mt19937_64& eng) {
  std::uniform_int_distribution<int> len(2, 12), level(0, 5), bit(0, 1);
  Instance in;
  const int n = len(eng);
  for (int i = 0; i < n; ++i) {
    in.u.push_back(level(eng) / 5.0);
    in.z.push_back(bit(eng) == 1);
  }
  return in;
}

std::vector<ScoredStep> labeled(const std::vector<int>& pred, const std::vector<int>& truth) {
  std::vector<ScoredStep> out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ScoredStep s;
    s.case_id = "c" + std::to_string(100 + i);
    s.uncertainty = static_cast<double>(i);
    s.predicted_label = label_from_int(pred[i]);
    s.ground_truth = label_from_int(truth[i]);
    s.correct = pred[i] == truth[i];
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("AUROC fixtures") {
  CHECK(*auroc(oracle::scored({0.1, 0.4, 0.35, 0.8}, {true, true, false, false})) == 0.75);
  CHECK(*auroc(oracle::scored({0.1, 0.2, 0.7, 0.9}, {true, true, false, false})) == 1.0);
  CHECK(*auroc(oracle::scored({0.3, 0.3, 0.3}, {true, false, true})) == 0.5);
  CHECK_FALSE(auroc(oracle::scored({0.1, 0.2}, {true, true})));
}

TEST_CASE("AUPRC fixtures") {
  const auto s = oracle::scored({0.1, 0.4, 0.35, 0.8}, {true, true, false, false});
  CHECK(*auprc(s) == *oracle::auprc({0.1, 0.4, 0.35, 0.8}, {true, true, false, false}));
  CHECK(*auprc(s) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(*auprc(oracle::scored({0.1, 0.2, 0.7, 0.9}, {true, true, false, false})) == 1.0);
  CHECK(*auprc(oracle::scored({0.5, 0.5, 0.5, 0.5, 0.5}, {true, false, true, false, false})) == 0.4);
  CHECK_FALSE(auprc(oracle::scored({0.1}, {false})));
}

TEST_CASE("metrics match brute-force oracles") {
  std::mt19937_64 eng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto in = random_instance(eng);
    const auto s = oracle::scored(in.u, in.z);
    CHECK(auroc(s) == oracle::auroc(in.u, in.z));
    CHECK(auprc(s) == oracle::auprc(in.u, in.z));
  }
}

TEST_CASE("AUROC invariances") {
  std::mt19937_64 eng(99);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(eng);
    if (!oracle::auroc(in.u, in.z)) continue;
    const double base = *auroc(oracle::scored(in.u, in.z));

    std::vector<double> transformed, negated;
    for (const double x : in.u) {
      transformed.push_back(std::exp(3 * x) + 7);
      negated.push_back(-x);
    }
    CHECK(*auroc(oracle::scored(transformed, in.z)) == base);
    CHECK(*auroc(oracle::scored(negated, in.z)) == doctest::Approx(1.0 - base).epsilon(1e-15));

    std::vector<std::size_t> perm(in.u.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), eng);
    Instance p;
    for (const auto i : perm) {
      p.u.push_back(in.u[i]);
      p.z.push_back(in.z[i]);
    }
    CHECK(*auroc(oracle::scored(p.u, p.z)) == base);
    CHECK(*auprc(oracle::scored(p.u, p.z)) == *auprc(oracle::scored(in.u, in.z)));
  }
}

TEST_CASE("unavailable scores are excluded from ranking metrics") {
  auto s = oracle::scored({0.1, 0.4, 0.35, 0.8, 0.0}, {true, true, false, false, false});
  s[4].uncertainty.reset();
  CHECK(*auroc(s) == 0.75);
  const auto order = retention_order(s);
  CHECK(order.back() == 4);
}

TEST_CASE("F1 on the error class") {
  CHECK(f1_error_class(labeled({1, 1, 1, 1}, {1, 0, 0, 0})) == doctest::Approx(2.0 * 0.25 / 1.25));
  CHECK(f1_error_class(labeled({0, 0, 0}, {1, 0, 1})) == 0.0);
  CHECK(f1_error_class(labeled({1, 0, 1}, {1, 0, 1})) == 1.0);
  const auto mixed = labeled({1, 0, 1, 1, 0, 0}, {1, 1, 0, 1, 0, 1});
  std::vector<Label> pred, truth;
  for (const auto& m : mixed) {
    pred.push_back(m.predicted_label);
    truth.push_back(m.ground_truth);
  }
  CHECK(f1_error_class(mixed) == doctest::Approx(oracle::f1(pred, truth)).epsilon(1e-15));
}

TEST_CASE("rejection curve") {
  CHECK(retained_count(0.5, 4) == 2);
  CHECK(retained_count(0.3, 10) == 3);
  CHECK(retained_count(0.01, 10) == 1);
  CHECK(retained_count(1.0, 7) == 7);

  const auto s = labeled({0, 1, 1, 0, 1}, {0, 1, 0, 1, 1});
  const std::vector<double> cov{0.2, 0.4, 0.6, 1.0};
  const auto curve = rejection_curve(s, cov);
  REQUIRE(curve.size() == 4);
  CHECK(curve[0].n_retained == 1);
  CHECK(curve[0].f1 == 0.0);
  CHECK(curve[1].f1 == 1.0);
  CHECK(curve[3].f1 == f1_error_class(s));
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].n_retained >= curve[i - 1].n_retained);

  const std::vector<double> bad{0.5, 0.4};
  CHECK_THROWS(rejection_curve(s, bad));

  // Ties fall back to case_id order.
  auto tied = labeled({1, 0}, {1, 0});
  tied[0].case_id = "b";
  tied[1].case_id = "a";
  tied[0].uncertainty = tied[1].uncertainty = 0.5;
  CHECK(retention_order(tied).front() == 1);
}

TEST_CASE("AU-F1C") {
  auto line = [](double lo, double hi) {
    std::vector<CurvePoint> c;
    for (const double x : full_grid()) c.push_back({x, lo + (hi - lo) * (x - 0.3) / 0.7, 1});
    return c;
  };
  CHECK(*au_f1c(line(0.4, 0.4)) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(*au_f1c(line(0.6, 0.4)) == doctest::Approx(0.5).epsilon(1e-12));
  const std::vector<CurvePoint> two{{0.3, 0.5, 3}, {1.0, 0.3, 10}};
  CHECK(*au_f1c(two) == doctest::Approx(0.4).epsilon(1e-12));
  const std::vector<CurvePoint> short_span{{0.5, 0.5, 3}, {1.0, 0.3, 10}};
  CHECK_FALSE(au_f1c(short_span));
}

TEST_CASE("grids") {
  CHECK(full_grid().size() == 71);
  CHECK(full_grid().front() == doctest::Approx(0.30));
  CHECK(full_grid().back() == 1.0);
  CHECK(display_grid().size() == 11);
  CHECK(display_grid().front() == doctest::Approx(0.60));
  CHECK(display_grid().back() == 1.0);
}

TEST_CASE("summaries over seeds") {
  const auto same = summarize({0.3, 0.3, 0.3});
  CHECK(*same.mean == 0.3);
  CHECK(same.stddev == 0.0);
  const auto spread = summarize({1.0, 2.0, 3.0});
  CHECK(*spread.mean == 2.0);
  CHECK(spread.stddev == doctest::Approx(1.0));
  CHECK_FALSE(summarize({1.0, std::nullopt}).mean);
}

TEST_CASE("evaluate end to end on a small corpus") {
  std::vector<StepCase> cases;
  std::vector<StepVerification> vs;
  std::vector<UncertaintyRecord> recs;
  const std::vector<int> truth{0, 0, 1, 0, 1, 0};
  const std::vector<int> pred{0, 1, 1, 0, 0, 0};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    StepCase c;
    c.case_id = "q:" + std::to_string(i);
    c.ground_truth = label_from_int(truth[i]);
    cases.push_back(c);
    StepVerification v;
    v.case_id = c.case_id;
    v.predicted_label = label_from_int(pred[i]);
    v.correct = pred[i] == truth[i];
    vs.push_back(v);
    recs.push_back({c.case_id, EstimatorId::kCotEntropy, v.correct ? 0.1 : 0.6, 1, 0, {}});
    recs.push_back({c.case_id, EstimatorId::kRandom, 0.1 * static_cast<double>(i), 0, 0, {}});
    recs.push_back({c.case_id, EstimatorId::kRandom, i == 1 ? 0.9 : 0.1 * static_cast<double>(i), 0, 1, {}});
  }
  recs.push_back({"q:0", EstimatorId::kSeu, std::nullopt, 0, 0, "embedder failure"});

  const auto r = evaluate(cases, vs, recs);
  CHECK(r.n_steps == 6);
  CHECK(r.positive_rate == 2.0 / 6.0);
  CHECK(r.all_zeros.f1 == 0.0);
  CHECK(r.all_ones.f1 == doctest::Approx(2 * (1.0 / 3) / (1.0 / 3 + 1)).epsilon(1e-12));
  REQUIRE(r.estimators.size() == 3);
  for (const auto& e : r.estimators) {
    CHECK(e.curve.back().coverage == 1.0);
    CHECK(e.curve.back().f1 == r.verification_f1);
  }
  CHECK(*r.estimators[0].auroc.mean == 1.0);
  CHECK(r.estimators[2].n_seeds == 2);
  CHECK(r.estimators[2].auroc.stddev > 0.0);

  const auto back = eval_report_from_json(to_json(r));
  CHECK(to_json(back) == to_json(r));

  vs[0].correct = !vs[0].correct;
  CHECK_THROWS_AS(evaluate(cases, vs, recs), DataError);
}
