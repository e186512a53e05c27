#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "stepuq/judge.hpp"
#include "stepuq/io.hpp"

using namespace stepuq;
using namespace stepuq::judge;

namespace {

StepCase make_case(std::vector<std::string> preceding, Label truth = Label::kNoError) {
  StepCase c;
  c.solution_id = "sol";
  c.step_index = static_cast<int>(preceding.size()) + 1;
  c.case_id = make_case_id(c.solution_id, c.step_index);
  c.question = "Compute 2+2.";
  c.preceding_steps = std::move(preceding);
  c.candidate_step = "2+2=4";
  c.ground_truth = truth;
  return c;
}

// Response whose decision token carries the given alternatives.
Completion verdict(const std::string& word, std::vector<TopToken> top, const std::string& why = "fine") {
  Completion c;
  c.tokens = {{"{\"reasoning\": \"", -0.01, {}},
              {why, -0.3, {}},
              {"\", \"has_error\": \"", -0.01, {}},
              {word, top.empty() ? -0.05 : top.front().logprob, top},
              {"\"}", -0.01, {}}};
  for (const auto& t : c.tokens) c.text += t.token;
  return c;
}

}  // namespace

TEST_CASE("prompt rendering") {
  const auto first = render_prompt(make_case({}));
  CHECK(first.template_version == "v1");
  CHECK(first.text.find("Preceding Steps: (none)") != std::string::npos);
  CHECK(first.text.find("Accuracy") != std::string::npos);
  CHECK(first.text.find("Logical Progression") != std::string::npos);
  CHECK(first.text.find("Step-by-Step Focus") != std::string::npos);
  CHECK(first.text.find("Omit this criterion if the step being evaluated is the first step") != std::string::npos);
  CHECK(first.text.find("\"reasoning\"") < first.text.find("\"has_error\""));

  const auto third = render_prompt(make_case({"a", "b", "c"}));
  const auto p1 = third.text.find("Step 1: a");
  const auto p2 = third.text.find("Step 2: b");
  const auto p3 = third.text.find("Step 3: c");
  CHECK(p1 != std::string::npos);
  CHECK(p1 < p2);
  CHECK(p2 < p3);
  CHECK(render_prompt(make_case({"a", "b", "c"})).text == third.text);
}

TEST_CASE("response parsing") {
  const auto plain = parse_response(R"({"reasoning": "ok", "has_error": "no"})");
  CHECK(plain.parse_ok);
  CHECK(plain.rationale == "ok");
  CHECK(plain.decision == Label::kNoError);

  const auto fenced = parse_response("Sure! ```{\"reasoning\":\"bad algebra\",\"has_error\":\"yes\"}```");
  CHECK(fenced.parse_ok);
  CHECK(fenced.rationale == "bad algebra");
  CHECK(fenced.decision == Label::kError);

  CHECK_FALSE(parse_response("I think the step is fine.").parse_ok);
  CHECK_FALSE(parse_response(R"({"reasoning": "x", "has_error": "maybe"})").parse_ok);
  CHECK_FALSE(parse_response(R"({"reasoning": "unterminated)").parse_ok);
  CHECK(parse_response(R"(note {"a": 1} then {"reasoning": "r {x}", "has_error": "Yes."})").decision == Label::kError);
}

TEST_CASE("class probability extraction") {
  const auto a = extract_class_probs(std::vector<TopToken>{{"yes", std::log(0.2)}, {"no", std::log(0.6)}}, 1e-4);
  CHECK(a.p_error() == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(a.p_no_error() == doctest::Approx(0.75).epsilon(1e-12));

  const auto b = extract_class_probs(std::vector<TopToken>{{"yes", std::log(0.5)}, {"no", std::log(0.5)}}, 1e-4);
  CHECK(b.p_error() == doctest::Approx(0.5));

  const auto c = extract_class_probs(std::vector<TopToken>{{"yes", std::log(0.9)}}, 1e-4);
  CHECK(c.p_error() == doctest::Approx(0.9 / (0.9 + 1e-4)).epsilon(1e-12));
  CHECK(c.p_no_error() == doctest::Approx(1e-4 / (0.9 + 1e-4)).epsilon(1e-12));
  CHECK(c.p_error() + c.p_no_error() == doctest::Approx(1.0).epsilon(1e-12));

  // Surface variants are summed per class.
  const auto d = extract_class_probs(
      std::vector<TopToken>{{" Yes", std::log(0.3)}, {"yes", std::log(0.1)}, {"No", std::log(0.4)}, {"maybe", -1}}, 1e-4);
  CHECK(d.p_error() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("decision token location") {
  const auto c = verdict("yes", {{"yes", std::log(0.7)}, {"no", std::log(0.3)}});
  REQUIRE(locate_decision_token(c.tokens));
  CHECK(*locate_decision_token(c.tokens) == 3);

  const auto s = make_sample(c, 1.0, 1e-4);
  CHECK(s.parse_ok);
  CHECK(s.probs_ok);
  CHECK(s.class_dist.p_error() == doctest::Approx(0.7));
  REQUIRE(s.mean_token_logprob);

  Completion bare;
  bare.text = R"({"reasoning": "x", "has_error": "no"})";
  const auto no_lp = make_sample(bare, 1.0, 1e-4);
  CHECK(no_lp.parse_ok);
  CHECK_FALSE(no_lp.probs_ok);
  CHECK_FALSE(no_lp.mean_token_logprob);
}

TEST_CASE("solution reward") {
  using PD = PredictiveDistribution;
  CHECK(solution_reward(std::vector<PD>{PD::from_error_prob(0.1), PD::from_error_prob(0.2)}) == doctest::Approx(0.72));
  CHECK(solution_reward(std::vector<PD>{PD::from_error_prob(0.3), PD::from_error_prob(1.0)}) == 0.0);
  CHECK(solution_reward(std::vector<PD>{PD::from_error_prob(0.25)}) == doctest::Approx(0.75));
  CHECK_THROWS(solution_reward(std::vector<PD>{}));
}

TEST_CASE("config validation") {
  JudgeConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epsilon_prob = 0.5;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.n_diverse = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("fold_step fallbacks") {
  JudgeConfig cfg;
  const auto c = make_case({}, Label::kError);
  const Completion yes = verdict("yes", {{"yes", std::log(0.8)}, {"no", std::log(0.2)}});
  const Completion no = verdict("no", {{"no", std::log(0.9)}, {"yes", std::log(0.1)}});
  Completion garbage;
  garbage.text = "no idea";
  Completion unparsable_with_probs = yes;
  unparsable_with_probs.text = "{\"has_error\": \"y";

  SUBCASE("greedy decision") {
    const auto v = fold_step(c, cfg, {yes, no, no}, {"", "", ""});
    CHECK(v.prediction_source == PredictionSource::kGreedyDecision);
    CHECK(v.predicted_label == Label::kError);
    CHECK(v.correct);
    CHECK(v.diverse_samples.size() == 2);
  }
  SUBCASE("greedy probabilities") {
    const auto v = fold_step(c, cfg, {unparsable_with_probs, no}, {"", ""});
    CHECK(v.prediction_source == PredictionSource::kGreedyProbs);
    CHECK(v.predicted_label == Label::kError);
  }
  SUBCASE("diverse majority") {
    const auto v = fold_step(c, cfg, {garbage, no, no, yes}, {"", "", "", ""});
    CHECK(v.prediction_source == PredictionSource::kDiverseMajority);
    CHECK(v.predicted_label == Label::kNoError);
    CHECK_FALSE(v.correct);
  }
  SUBCASE("default") {
    const auto v = fold_step(c, cfg, {garbage, garbage}, {"", ""});
    CHECK(v.prediction_source == PredictionSource::kDefault);
    CHECK(v.predicted_label == Label::kNoError);
  }
  SUBCASE("failed greedy marks the step failed") {
    const auto v = fold_step(c, cfg, {std::nullopt, yes}, {"timeout", ""});
    CHECK(v.failed);
    CHECK(v.failure_cause == "timeout");
  }
  SUBCASE("shortfall is recorded") {
    const auto v = fold_step(c, cfg, {yes, std::nullopt, yes}, {"", "HTTP 500", ""});
    CHECK(v.diverse_samples.size() == 1);
    CHECK(v.shortfall_reason.find("HTTP 500") != std::string::npos);
  }
  SUBCASE("argmax anomaly") {
    const Completion odd = verdict("yes", {{"no", std::log(0.7)}, {"yes", std::log(0.3)}});
    CHECK(fold_step(c, cfg, {odd}, {""}).argmax_anomaly);
  }
}

TEST_CASE("sample_step with the mock client is reproducible") {
  JudgeConfig cfg;
  cfg.n_diverse = 4;
  cfg.max_concurrent_requests = 3;
  const auto c = make_case({"x"}, Label::kNoError);
  std::vector<MockJudgeClient::Entry> script;
  for (int k = 0; k <= cfg.n_diverse; ++k) {
    const double p = 0.1 + 0.2 * k;
    script.push_back({c.case_id, RequestKind::kVerify, k,
                      verdict(p > 0.5 ? "yes" : "no", {{"yes", std::log(p)}, {"no", std::log(1 - p)}}), {}});
  }
  MockJudgeClient client(script);
  const auto a = sample_step(c, cfg, client);
  const auto b = sample_step(c, cfg, client);
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(a.diverse_samples.size() == 4);
  CHECK(a.diverse_samples[3].class_dist.p_error() == doctest::Approx(0.9));
  CHECK(a.predicted_label == Label::kNoError);
  for (const auto& s : a.diverse_samples) {
    CHECK(s.class_dist.p_error() + s.class_dist.p_no_error() == doctest::Approx(1.0).epsilon(1e-12));
  }

  const auto seed_a = request_seed(1, c.case_id, RequestKind::kVerify, 2);
  CHECK(seed_a == request_seed(1, c.case_id, RequestKind::kVerify, 2));
  CHECK(seed_a != request_seed(1, c.case_id, RequestKind::kVerify, 3));
  CHECK(seed_a < (std::uint64_t{1} << 63));
}
