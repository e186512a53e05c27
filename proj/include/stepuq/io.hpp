#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "stepuq/core.hpp"

// Line-delimited JSON encodings of the core records. Every record file in
// the pipeline is one JSON object per line.
namespace stepuq {

nlohmann::json to_json(const StepCase& c);
StepCase step_case_from_json(const nlohmann::json& j);

nlohmann::json to_json(const JudgeSample& s);
JudgeSample judge_sample_from_json(const nlohmann::json& j);

nlohmann::json to_json(const StepVerification& v);
StepVerification step_verification_from_json(const nlohmann::json& j);

nlohmann::json to_json(const UncertaintyRecord& r);
UncertaintyRecord uncertainty_record_from_json(const nlohmann::json& j);

namespace io {

/// Calls `fn(json, line_number)` for each non-blank line. Parse errors are
/// reported as DataError with the 1-based line number.
void for_each_json_line(std::istream& in,
                        const std::function<void(const nlohmann::json&, std::size_t)>& fn);

void write_json_line(std::ostream& out, const nlohmann::json& j);

std::vector<StepCase> read_cases(const std::filesystem::path& path);
void write_cases(const std::filesystem::path& path, const std::vector<StepCase>& cases);

std::vector<StepVerification> read_verifications(const std::filesystem::path& path);
void write_verifications(const std::filesystem::path& path,
                         const std::vector<StepVerification>& vs);

std::vector<UncertaintyRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, const std::vector<UncertaintyRecord>& rs);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace io
}  // namespace stepuq
