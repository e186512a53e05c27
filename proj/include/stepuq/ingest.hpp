#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "stepuq/core.hpp"

namespace stepuq::ingest {

struct RawStep {
  std::string text;
  int rating = 0;  // rater label in {-1, 0, +1}
};

struct RawAnnotation {
  std::string solution_id;
  std::string question;
  std::vector<RawStep> steps;
};

struct LabeledStep {
  std::string text;
  Label label = Label::kNoError;
};

/// -1 -> error; 0 and +1 -> no error. Throws DataError naming `locator`
/// for anything else.
Label map_label(int rating, const std::string& locator = {});

/// Keeps steps up to and including the first error.
std::vector<LabeledStep> truncate_at_first_error(std::vector<LabeledStep> steps);

enum class InputFormat { kCanonical, kPrm800k };

struct ParseOptions {
  InputFormat format = InputFormat::kCanonical;
  bool strict = false;
};

struct ParsedInput {
  std::vector<RawAnnotation> records;
  std::size_t skipped = 0;
  std::vector<std::string> problems;  // one message per skipped line
};

/// Reads line-delimited records. Malformed lines are skipped and counted,
/// or raise DataError with the line number when `strict` is set.
ParsedInput parse_annotations(std::istream& in, const ParseOptions& opts);

/// Canonical record: {"id"?, "question", "steps": [{"text", "rating"}]}.
/// `line_no` names the solution when "id" is absent.
RawAnnotation canonical_from_json(const nlohmann::json& j, std::size_t line_no);

/// Adapter for PRM800K phase-2 records (question.problem, label.steps[],
/// chosen_completion). Returns nullopt for screening / quality-control rows.
std::optional<RawAnnotation> prm800k_from_json(const nlohmann::json& j);

nlohmann::json to_canonical_json(const RawAnnotation& a);

/// Selects solutions by explicit id list, or samples `count` of them
/// uniformly without replacement. Neither set means "all".
struct SubsetSpec {
  std::optional<std::size_t> count;
  std::vector<std::string> ids;
};

struct IngestSummary {
  std::size_t questions = 0;
  std::size_t steps = 0;
  std::size_t positives = 0;
  double positive_rate = 0.0;
  double mean_steps_per_solution = 0.0;
};

struct IngestResult {
  std::vector<StepCase> cases;  // sorted by (solution_id, step_index)
  IngestSummary summary;
  std::vector<std::string> selected_ids;  // sorted
};

IngestResult build_cases(const std::vector<RawAnnotation>& raw, const SubsetSpec& subset,
                         std::uint64_t seed);

IngestSummary summarize(const std::vector<StepCase>& cases);

std::string format_summary(const IngestSummary& s);

}  // namespace stepuq::ingest
