#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "stepuq/ingest.hpp"

using namespace stepuq;
using namespace stepuq::ingest;

namespace {

std::vector<LabeledStep> labeled(const std::vector<int>& labels) {
  std::vector<LabeledStep> out;
  for (const int l : labels) out.push_back({"t" + std::to_string(out.size()), label_from_int(l)});
  return out;
}

std::vector<int> labels_of(const std::vector<LabeledStep>& steps) {
  std::vector<int> out;
  for (const auto& s : steps) out.push_back(to_int(s.label));
  return out;
}

const char* kCanonical =
    R"({"id":"a","question":"Q1","steps":[{"text":"s1","rating":1},{"text":"s2","rating":0},{"text":"s3","rating":-1},{"text":"s4","rating":1}]})"
    "\n"
    R"({"id":"b","question":"Q2","steps":[{"text":"u1","rating":0},{"text":"u2","rating":-1}]})"
    "\n"
    R"({"id":"c","question":"Q3","steps":[{"text":"v1","rating":1}]})"
    "\n";

}  // namespace

TEST_CASE("label mapping") {
  CHECK(map_label(-1) == Label::kError);
  CHECK(map_label(0) == Label::kNoError);
  CHECK(map_label(1) == Label::kNoError);
  try {
    map_label(2, "sol-7 step 3");
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("sol-7 step 3") != std::string::npos);
  }
}

TEST_CASE("truncation at the first error") {
  CHECK(labels_of(truncate_at_first_error(labeled({0, 0, 1, 0, 0}))) == std::vector<int>{0, 0, 1});
  CHECK(labels_of(truncate_at_first_error(labeled({0, 0, 0}))) == std::vector<int>{0, 0, 0});
  CHECK(labels_of(truncate_at_first_error(labeled({1, 0}))) == std::vector<int>{1});
}

TEST_CASE("build_cases accumulates preceding steps") {
  std::istringstream in(kCanonical);
  const auto parsed = parse_annotations(in, {});
  REQUIRE(parsed.records.size() == 3);
  const auto r = build_cases(parsed.records, {}, 0);

  CHECK(r.summary.questions == 3);
  CHECK(r.summary.steps == 3 + 2 + 1);
  CHECK(r.summary.positives == 2);
  CHECK(r.summary.positive_rate == 2.0 / 6.0);
  REQUIRE(r.cases.size() == 6);
  CHECK(r.cases[2].case_id == make_case_id("a", 3));
  CHECK(r.cases[2].preceding_steps == std::vector<std::string>{"s1", "s2"});
  CHECK(r.cases[2].candidate_step == "s3");
  CHECK(r.cases[2].ground_truth == Label::kError);
  CHECK(r.cases[4].ground_truth == Label::kError);
  CHECK(r.cases[3].preceding_steps.empty());
}

TEST_CASE("single question with labels (0,1)") {
  RawAnnotation a{"x", "q", {{"first", 1}, {"second", -1}}};
  const auto r = build_cases({a}, {}, 0);
  REQUIRE(r.cases.size() == 2);
  CHECK(r.cases[1].ground_truth == Label::kError);
}

TEST_CASE("malformed records are skipped or abort in strict mode") {
  const std::string text = std::string(kCanonical) + "{broken\n" +
                           R"({"id":"d","question":"Q","steps":[{"text":"w","rating":5}]})" + "\n" +
                           R"({"id":"a","question":"dup","steps":[{"text":"w","rating":1}]})" + "\n";
  std::istringstream lenient(text);
  const auto parsed = parse_annotations(lenient, {});
  CHECK(parsed.records.size() == 3);
  CHECK(parsed.skipped == 3);

  std::istringstream strict(text);
  ParseOptions opts;
  opts.strict = true;
  CHECK_THROWS_AS(parse_annotations(strict, opts), DataError);
}

TEST_CASE("subsetting is deterministic and seed dependent") {
  std::vector<RawAnnotation> raw;
  for (int i = 0; i < 40; ++i) raw.push_back({"id" + std::to_string(i), "q", {{"s", 1}}});
  SubsetSpec subset;
  subset.count = 10;
  const auto a = build_cases(raw, subset, 1);
  const auto b = build_cases(raw, subset, 1);
  const auto c = build_cases(raw, subset, 2);
  CHECK(a.selected_ids.size() == 10);
  CHECK(a.selected_ids == b.selected_ids);
  CHECK(a.selected_ids != c.selected_ids);
  CHECK(std::is_sorted(a.selected_ids.begin(), a.selected_ids.end()));

  SubsetSpec explicit_ids;
  explicit_ids.ids = {"id3", "id1"};
  CHECK(build_cases(raw, explicit_ids, 0).selected_ids == std::vector<std::string>{"id1", "id3"});
  explicit_ids.ids = {"missing"};
  CHECK_THROWS_AS(build_cases(raw, explicit_ids, 0), DataError);
}

TEST_CASE("every emitted trace validates") {
  std::istringstream in(kCanonical);
  const auto r = build_cases(parse_annotations(in, {}).records, {}, 0);
  for (const auto& id : r.selected_ids) {
    std::vector<StepCase> t;
    for (const auto& c : r.cases) {
      if (c.solution_id == id) t.push_back(c);
    }
    CHECK(validate_trace(t).empty());
  }
}

TEST_CASE("PRM800K adapter") {
  const auto rec = nlohmann::json::parse(R"({
    "question": {"problem": "What is 1+1?"},
    "label": {"steps": [
      {"completions": [{"text": "a", "rating": 1}, {"text": "a'", "rating": 0}], "chosen_completion": 0},
      {"completions": [{"text": "b", "rating": 0}], "chosen_completion": 0},
      {"completions": [{"text": "c1", "rating": 1}, {"text": "c2", "rating": -1}], "chosen_completion": null},
      {"completions": [{"text": "never", "rating": 1}], "chosen_completion": 0}
    ]}
  })");
  const auto a = prm800k_from_json(rec);
  REQUIRE(a);
  REQUIRE(a->steps.size() == 3);
  CHECK(a->steps[2].text == "c2");
  CHECK(a->steps[2].rating == -1);
  CHECK(a->solution_id.rfind("prm-", 0) == 0);
  CHECK(prm800k_from_json(rec)->solution_id == a->solution_id);

  auto qc = rec;
  qc["is_quality_control_question"] = true;
  CHECK_FALSE(prm800k_from_json(qc));
}

TEST_CASE("canonical round trip") {
  RawAnnotation a{"z", "q", {{"one", 0}, {"two", -1}}};
  const auto back = canonical_from_json(to_canonical_json(a), 1);
  CHECK(back.solution_id == "z");
  CHECK(back.steps.size() == 2);
  CHECK(back.steps[1].rating == -1);
  const auto unnamed = canonical_from_json(nlohmann::json::parse(R"({"question":"q","steps":[{"text":"s","rating":1}]})"), 12);
  CHECK_FALSE(unnamed.solution_id.empty());
}
