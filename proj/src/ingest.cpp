#include "stepuq/ingest.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "stepuq/io.hpp"
#include "stepuq/rng.hpp"

namespace stepuq::ingest {

using nlohmann::json;

Label map_label(int rating, const std::string& locator) {
  switch (rating) {
    case -1: return Label::kError;
    case 0:
    case 1: return Label::kNoError;
    default:
      throw DataError(fmt::format("{}rater label {} not in {{-1, 0, +1}}",
                                  locator.empty() ? "" : locator + ": ", rating));
  }
}

std::vector<LabeledStep> truncate_at_first_error(std::vector<LabeledStep> steps) {
  const auto first = std::find_if(steps.begin(), steps.end(),
                                  [](const LabeledStep& s) { return s.label == Label::kError; });
  if (first != steps.end()) steps.erase(first + 1, steps.end());
  return steps;
}

RawAnnotation canonical_from_json(const json& j, std::size_t line_no) {
  RawAnnotation a;
  if (const auto it = j.find("id"); it != j.end() && !it->is_null()) {
    a.solution_id = it->is_string() ? it->get<std::string>() : it->dump();
  } else {
    a.solution_id = fmt::format("sol-{:06d}", line_no);
  }
  a.question = j.at("question").get<std::string>();
  for (const auto& step : j.at("steps")) {
    a.steps.push_back({step.at("text").get<std::string>(), step.at("rating").get<int>()});
  }
  if (a.steps.empty()) throw DataError("record has no steps");
  return a;
}

json to_canonical_json(const RawAnnotation& a) {
  json steps = json::array();
  for (const auto& s : a.steps) steps.push_back({{"text", s.text}, {"rating", s.rating}});
  return json{{"id", a.solution_id}, {"question", a.question}, {"steps", std::move(steps)}};
}

std::optional<RawAnnotation> prm800k_from_json(const json& j) {
  if (j.value("is_quality_control_question", false) ||
      j.value("is_initial_screening_question", false)) {
    return std::nullopt;
  }
  RawAnnotation a;
  a.question = j.at("question").at("problem").get<std::string>();
  std::string fingerprint = a.question;

  for (const auto& step : j.at("label").at("steps")) {
    const auto& completions = step.at("completions");
    if (!completions.is_array() || completions.empty()) throw DataError("step has no completions");

    const json* picked = nullptr;
    const auto chosen = step.find("chosen_completion");
    if (chosen != step.end() && chosen->is_number_integer()) {
      picked = &completions.at(chosen->get<std::size_t>());
    } else {
      // No chosen completion: the rater stopped here, normally because
      // every alternative was rated negative.
      for (const auto& c : completions) {
        if (c.at("rating").is_number_integer() && c.at("rating").get<int>() == -1) {
          picked = &c;
          break;
        }
      }
      if (picked == nullptr) picked = &completions.front();
    }
    const auto& rating = picked->at("rating");
    if (!rating.is_number_integer()) throw DataError("chosen completion is unrated");
    a.steps.push_back({picked->at("text").get<std::string>(), rating.get<int>()});
    fingerprint += '\x1f';
    fingerprint += a.steps.back().text;
    if (chosen == step.end() || !chosen->is_number_integer()) break;
  }
  if (a.steps.empty()) throw DataError("record has no steps");
  a.solution_id = fmt::format("prm-{:016x}", rng::fnv1a64(fingerprint));
  return a;
}

ParsedInput parse_annotations(std::istream& in, const ParseOptions& opts) {
  ParsedInput out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      std::optional<RawAnnotation> rec;
      if (opts.format == InputFormat::kCanonical) {
        rec = canonical_from_json(j, line_no);
      } else {
        rec = prm800k_from_json(j);
        if (!rec) continue;
      }
      for (std::size_t i = 0; i < rec->steps.size(); ++i) {
        map_label(rec->steps[i].rating, fmt::format("step {}", i + 1));
      }
      if (!seen.insert(rec->solution_id).second) {
        throw DataError(fmt::format("duplicate solution id '{}'", rec->solution_id));
      }
      out.records.push_back(std::move(*rec));
    } catch (const std::exception& e) {
      auto msg = fmt::format("line {}: {}", line_no, e.what());
      if (opts.strict) throw DataError(msg);
      spdlog::warn("skipping malformed record: {}", msg);
      out.problems.push_back(std::move(msg));
      ++out.skipped;
    }
  }
  return out;
}

namespace {

std::vector<std::string> select_ids(const std::vector<RawAnnotation>& raw,
                                    const SubsetSpec& subset, std::uint64_t seed) {
  std::vector<std::string> all;
  all.reserve(raw.size());
  for (const auto& r : raw) all.push_back(r.solution_id);
  std::sort(all.begin(), all.end());

  if (!subset.ids.empty()) {
    std::vector<std::string> picked = subset.ids;
    std::sort(picked.begin(), picked.end());
    picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
    for (const auto& id : picked) {
      if (!std::binary_search(all.begin(), all.end(), id)) {
        throw DataError(fmt::format("subset id '{}' not present in input", id));
      }
    }
    return picked;
  }
  if (!subset.count || *subset.count >= all.size()) {
    if (subset.count && *subset.count > all.size()) {
      throw DataError(fmt::format("subset of {} requested but only {} solutions available",
                                  *subset.count, all.size()));
    }
    return all;
  }

  // Partial Fisher-Yates over the sorted id list.
  std::uint64_t state = rng::derive_seed(seed, 0x5EB5E7);
  auto next = [&state] { return rng::splitmix64(state++); };
  const std::size_t k = *subset.count;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + rng::uniform_index(next, all.size() - i);
    std::swap(all[i], all[j]);
  }
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

IngestResult build_cases(const std::vector<RawAnnotation>& raw, const SubsetSpec& subset,
                         std::uint64_t seed) {
  IngestResult result;
  result.selected_ids = select_ids(raw, subset, seed);

  std::map<std::string, const RawAnnotation*> by_id;
  for (const auto& r : raw) by_id.emplace(r.solution_id, &r);

  for (const auto& id : result.selected_ids) {
    const RawAnnotation& rec = *by_id.at(id);
    std::vector<LabeledStep> labeled;
    labeled.reserve(rec.steps.size());
    for (std::size_t i = 0; i < rec.steps.size(); ++i) {
      labeled.push_back({rec.steps[i].text,
                         map_label(rec.steps[i].rating, fmt::format("{} step {}", id, i + 1))});
    }
    labeled = truncate_at_first_error(std::move(labeled));

    std::vector<std::string> preceding;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      StepCase c;
      c.solution_id = id;
      c.step_index = static_cast<int>(i) + 1;
      c.case_id = make_case_id(id, c.step_index);
      c.question = rec.question;
      c.preceding_steps = preceding;
      c.candidate_step = labeled[i].text;
      c.ground_truth = labeled[i].label;
      preceding.push_back(labeled[i].text);
      result.cases.push_back(std::move(c));
    }
  }
  result.summary = summarize(result.cases);
  return result;
}

IngestSummary summarize(const std::vector<StepCase>& cases) {
  IngestSummary s;
  std::set<std::string> solutions;
  for (const auto& c : cases) {
    solutions.insert(c.solution_id);
    if (c.ground_truth == Label::kError) ++s.positives;
  }
  s.questions = solutions.size();
  s.steps = cases.size();
  if (s.steps > 0) {
    s.positive_rate = static_cast<double>(s.positives) / static_cast<double>(s.steps);
  }
  if (s.questions > 0) {
    s.mean_steps_per_solution = static_cast<double>(s.steps) / static_cast<double>(s.questions);
  }
  return s;
}

std::string format_summary(const IngestSummary& s) {
  return fmt::format(
      "questions:            {}\n"
      "steps:                {}\n"
      "positives (y=1):      {}\n"
      "positive rate:        {:.1f}%\n"
      "mean steps/solution:  {:.1f}\n",
      s.questions, s.steps, s.positives, 100.0 * s.positive_rate, s.mean_steps_per_solution);
}

}  // namespace stepuq::ingest
