#include "stepuq/io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace stepuq {

using nlohmann::json;

namespace {

Label label_field(const json& j, const char* key) { return label_from_int(j.at(key).get<int>()); }

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}' for reading", path.string()));
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  return out;
}

template <typename T, typename Decode>
std::vector<T> read_lines(const std::filesystem::path& path, Decode decode) {
  auto in = open_in(path);
  std::vector<T> out;
  io::for_each_json_line(in, [&](const json& j, std::size_t line) {
    try {
      out.push_back(decode(j));
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), line, e.what()));
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), line, e.what()));
    }
  });
  return out;
}

template <typename T>
void write_lines(const std::filesystem::path& path, const std::vector<T>& items) {
  auto out = open_out(path);
  for (const auto& item : items) io::write_json_line(out, to_json(item));
}

}  // namespace

json to_json(const StepCase& c) {
  return json{{"case_id", c.case_id},
              {"solution_id", c.solution_id},
              {"step_index", c.step_index},
              {"question", c.question},
              {"preceding_steps", c.preceding_steps},
              {"candidate_step", c.candidate_step},
              {"ground_truth", to_int(c.ground_truth)}};
}

StepCase step_case_from_json(const json& j) {
  StepCase c;
  c.case_id = j.at("case_id").get<std::string>();
  c.solution_id = j.at("solution_id").get<std::string>();
  c.step_index = j.at("step_index").get<int>();
  c.question = j.at("question").get<std::string>();
  c.preceding_steps = j.at("preceding_steps").get<std::vector<std::string>>();
  c.candidate_step = j.at("candidate_step").get<std::string>();
  c.ground_truth = label_field(j, "ground_truth");
  return c;
}

json to_json(const JudgeSample& s) {
  json j{{"rationale", s.rationale},
         {"response_text", s.response_text},
         {"decision", to_int(s.decision)},
         {"parse_ok", s.parse_ok},
         {"probs_ok", s.probs_ok},
         {"raw_token_prob_yes", s.raw_token_prob_yes},
         {"raw_token_prob_no", s.raw_token_prob_no},
         {"p_error", s.class_dist.p_error()},
         {"temperature", s.temperature}};
  j["mean_token_logprob"] = s.mean_token_logprob ? json(*s.mean_token_logprob) : json(nullptr);
  return j;
}

JudgeSample judge_sample_from_json(const json& j) {
  JudgeSample s;
  s.rationale = j.at("rationale").get<std::string>();
  s.response_text = j.value("response_text", std::string{});
  s.decision = label_field(j, "decision");
  s.parse_ok = j.at("parse_ok").get<bool>();
  s.probs_ok = j.at("probs_ok").get<bool>();
  s.raw_token_prob_yes = j.at("raw_token_prob_yes").get<double>();
  s.raw_token_prob_no = j.at("raw_token_prob_no").get<double>();
  try {
    s.class_dist = PredictiveDistribution::from_error_prob(j.at("p_error").get<double>());
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  s.temperature = j.at("temperature").get<double>();
  if (const auto it = j.find("mean_token_logprob"); it != j.end() && !it->is_null()) {
    s.mean_token_logprob = it->get<double>();
  }
  return s;
}

json to_json(const StepVerification& v) {
  json diverse = json::array();
  for (const auto& s : v.diverse_samples) diverse.push_back(to_json(s));
  return json{{"case_id", v.case_id},
              {"greedy_sample", to_json(v.greedy_sample)},
              {"predicted_label", to_int(v.predicted_label)},
              {"prediction_source", std::string(to_string(v.prediction_source))},
              {"correctness", v.correct ? 1 : 0},
              {"diverse_samples", std::move(diverse)},
              {"failed", v.failed},
              {"failure_cause", v.failure_cause},
              {"shortfall_reason", v.shortfall_reason},
              {"argmax_anomaly", v.argmax_anomaly}};
}

StepVerification step_verification_from_json(const json& j) {
  StepVerification v;
  v.case_id = j.at("case_id").get<std::string>();
  v.greedy_sample = judge_sample_from_json(j.at("greedy_sample"));
  v.predicted_label = label_field(j, "predicted_label");
  v.prediction_source =
      prediction_source_from_string(j.at("prediction_source").get<std::string>());
  v.correct = j.at("correctness").get<int>() == 1;
  for (const auto& s : j.at("diverse_samples")) {
    v.diverse_samples.push_back(judge_sample_from_json(s));
  }
  v.failed = j.value("failed", false);
  v.failure_cause = j.value("failure_cause", std::string{});
  v.shortfall_reason = j.value("shortfall_reason", std::string{});
  v.argmax_anomaly = j.value("argmax_anomaly", false);
  return v;
}

json to_json(const UncertaintyRecord& r) {
  json j{{"case_id", r.case_id},
         {"estimator", std::string(to_string(r.estimator))},
         {"n_samples_used", r.n_samples_used},
         {"seed", r.seed},
         {"note", r.note}};
  j["score"] = r.score ? json(*r.score) : json(nullptr);
  return j;
}

UncertaintyRecord uncertainty_record_from_json(const json& j) {
  UncertaintyRecord r;
  r.case_id = j.at("case_id").get<std::string>();
  const auto name = j.at("estimator").get<std::string>();
  const auto id = estimator_from_string(name);
  if (!id) throw DataError(fmt::format("unknown estimator '{}'", name));
  r.estimator = *id;
  if (const auto it = j.find("score"); it != j.end() && !it->is_null()) {
    r.score = it->get<double>();
  }
  r.n_samples_used = j.value("n_samples_used", 0);
  r.seed = j.value("seed", std::uint64_t{0});
  r.note = j.value("note", std::string{});
  return r;
}

namespace io {

void for_each_json_line(std::istream& in,
                        const std::function<void(const json&, std::size_t)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(fmt::format("line {}: {}", line_no, e.what()));
    }
    fn(j, line_no);
  }
}

void write_json_line(std::ostream& out, const json& j) { out << j.dump() << '\n'; }

std::vector<StepCase> read_cases(const std::filesystem::path& path) {
  return read_lines<StepCase>(path, step_case_from_json);
}

void write_cases(const std::filesystem::path& path, const std::vector<StepCase>& cases) {
  write_lines(path, cases);
}

std::vector<StepVerification> read_verifications(const std::filesystem::path& path) {
  return read_lines<StepVerification>(path, step_verification_from_json);
}

void write_verifications(const std::filesystem::path& path,
                         const std::vector<StepVerification>& vs) {
  write_lines(path, vs);
}

std::vector<UncertaintyRecord> read_records(const std::filesystem::path& path) {
  return read_lines<UncertaintyRecord>(path, uncertainty_record_from_json);
}

void write_records(const std::filesystem::path& path, const std::vector<UncertaintyRecord>& rs) {
  write_lines(path, rs);
}

std::string read_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  auto out = open_out(path);
  out << contents;
}

}  // namespace io
}  // namespace stepuq
