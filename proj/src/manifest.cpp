#include "stepuq/manifest.hpp"

#include <chrono>
#include <ctime>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "stepuq/core.hpp"
#include "stepuq/io.hpp"

namespace stepuq {

using nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(io::read_file(path)); }

void RunManifest::add_input(const std::filesystem::path& p) {
  inputs.push_back({p.string(), sha256_file(p)});
}

void RunManifest::add_output(const std::filesystem::path& p) {
  outputs.push_back({p.string(), sha256_file(p)});
}

void RunManifest::seal() {
  std::string material = command + "\n" + config + "\n" + seeds.dump();
  for (const auto& in : inputs) material += "\n" + in.sha256;
  run_id = sha256_hex(material).substr(0, 16);
}

json to_json(const RunManifest& m) {
  auto digests = [](const std::vector<FileDigest>& ds) {
    json arr = json::array();
    for (const auto& d : ds) arr.push_back({{"path", d.path}, {"sha256", d.sha256}});
    return arr;
  };
  return json{{"run_id", m.run_id},
              {"command", m.command},
              {"argv", m.argv},
              {"tool_version", m.tool_version},
              {"config", m.config},
              {"seeds", m.seeds},
              {"summary", m.summary},
              {"inputs", digests(m.inputs)},
              {"outputs", digests(m.outputs)},
              {"started_at", m.started_at},
              {"finished_at", m.finished_at}};
}

RunManifest run_manifest_from_json(const json& j) {
  auto digests = [](const json& arr) {
    std::vector<FileDigest> out;
    for (const auto& d : arr) out.push_back({d.at("path").get<std::string>(), d.at("sha256").get<std::string>()});
    return out;
  };
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.argv = j.at("argv").get<std::vector<std::string>>();
  m.tool_version = j.value("tool_version", std::string{});
  m.config = j.value("config", std::string{});
  m.seeds = j.value("seeds", json::object());
  m.summary = j.value("summary", json::object());
  m.inputs = digests(j.at("inputs"));
  m.outputs = digests(j.at("outputs"));
  m.started_at = j.value("started_at", std::string{});
  m.finished_at = j.value("finished_at", std::string{});
  return m;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace stepuq
