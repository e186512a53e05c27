#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace stepuq {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

struct FileDigest {
  std::string path;
  std::string sha256;
};

/// Provenance record written next to every stage output.
struct RunManifest {
  std::string run_id;
  std::string command;
  std::vector<std::string> argv;  // enough to replay the stage
  std::string tool_version;
  std::string config;  // resolved configuration, flags > config file > defaults
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json summary = nlohmann::json::object();
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  std::string started_at;
  std::string finished_at;

  void add_input(const std::filesystem::path& p);
  void add_output(const std::filesystem::path& p);
  /// Run id: digest of command, config and input digests.
  void seal();
};

nlohmann::json to_json(const RunManifest& m);
RunManifest run_manifest_from_json(const nlohmann::json& j);

std::string utc_timestamp();

}  // namespace stepuq
