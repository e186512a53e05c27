#include <set>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "stepuq/cli.hpp"
#include "stepuq/io.hpp"
#include "stepuq/manifest.hpp"

using namespace stepuq;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "stepuq");
  return cli::run(args);
}

std::string s(const fs::path& p) { return p.string(); }

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run({}) == cli::kUsageError);
  CHECK(run({"bogus"}) == cli::kUsageError);
  CHECK(run({"ingest", "--input", "x"}) == cli::kUsageError);
  CHECK(run({"ingest", "--input", "x", "--output", "y", "--format", "xml"}) == cli::kUsageError);
  CHECK(run({"--version"}) == cli::kOk);
}

TEST_CASE("strict ingest aborts on malformed input") {
  const auto dir = oracle::scratch_dir("cli_strict");
  io::write_file(dir / "raw.jsonl",
                 "{\"id\":\"a\",\"question\":\"q\",\"steps\":[{\"text\":\"s\",\"rating\":1}]}\n"
                 "{\"id\":\"b\",\"question\":\"q\",\"steps\":[{\"text\":\"s\",\"rating\":7}]}\n");
  CHECK(run({"ingest", "--input", s(dir / "raw.jsonl"), "--output", s(dir / "cases.jsonl"), "--strict"}) ==
        cli::kDataError);
  CHECK_FALSE(fs::exists(dir / "cases.jsonl"));
  CHECK(run({"ingest", "--input", s(dir / "raw.jsonl"), "--output", s(dir / "cases.jsonl")}) == cli::kOk);
  CHECK(io::read_cases(dir / "cases.jsonl").size() == 1);
  CHECK(io::read_file(dir / "cases.jsonl.ids.txt") == "a\n");
  CHECK(fs::exists(dir / "cases.jsonl.manifest.json"));
  CHECK(run({"ingest", "--input", s(dir / "missing.jsonl"), "--output", s(dir / "c2.jsonl")}) == cli::kDataError);
}

TEST_CASE("sampling resumes without duplicates") {
  const auto dir = oracle::scratch_dir("cli_resume");
  REQUIRE(run({"simulate", "--out-dir", s(dir / "sim"), "--questions", "12", "--seed", "4"}) == cli::kOk);
  REQUIRE(run({"ingest", "--input", s(dir / "sim/raw.jsonl"), "--output", s(dir / "cases.jsonl")}) == cli::kOk);
  const auto cases = io::read_cases(dir / "cases.jsonl");

  const std::vector<std::string> sample{"sample", "--cases", s(dir / "cases.jsonl"), "--store", s(dir / "store.jsonl"),
                                        "--mock", s(dir / "sim/judge_script.jsonl"), "--batch", "5"};
  REQUIRE(run(sample) == cli::kOk);
  const auto full = io::read_file(dir / "store.jsonl");

  // Keep a prefix as if the first run had been interrupted.
  std::string prefix;
  std::size_t pos = 0;
  for (int i = 0; i < 7; ++i) pos = full.find('\n', pos) + 1;
  io::write_file(dir / "store.jsonl", full.substr(0, pos));
  REQUIRE(run(sample) == cli::kOk);
  CHECK(io::read_file(dir / "store.jsonl") == full);
  REQUIRE(run(sample) == cli::kOk);

  std::set<std::string> ids;
  for (const auto& v : io::read_verifications(dir / "store.jsonl")) CHECK(ids.insert(v.case_id).second);
  CHECK(ids.size() == cases.size());
}

TEST_CASE("transport failures exit with 3 and leave the step unsampled") {
  const auto dir = oracle::scratch_dir("cli_transport");
  REQUIRE(run({"simulate", "--out-dir", s(dir / "sim"), "--questions", "3", "--seed", "2"}) == cli::kOk);
  REQUIRE(run({"ingest", "--input", s(dir / "sim/raw.jsonl"), "--output", s(dir / "cases.jsonl")}) == cli::kOk);
  const auto first = io::read_cases(dir / "cases.jsonl").front().case_id;

  std::string script;
  std::istringstream in(io::read_file(dir / "sim/judge_script.jsonl"));
  io::for_each_json_line(in, [&](const nlohmann::json& j, std::size_t) {
    auto e = j;
    if (e["case_id"] == first && e["sample_index"] == 0) e["error"] = "HTTP 503 after retries";
    script += e.dump() + "\n";
  });
  io::write_file(dir / "broken.jsonl", script);

  CHECK(run({"sample", "--cases", s(dir / "cases.jsonl"), "--store", s(dir / "store.jsonl"), "--mock",
             s(dir / "broken.jsonl")}) == cli::kTransportError);
  for (const auto& v : io::read_verifications(dir / "store.jsonl")) CHECK(v.case_id != first);

  CHECK(run({"sample", "--cases", s(dir / "cases.jsonl"), "--store", s(dir / "store.jsonl"), "--endpoint",
             "http://127.0.0.1:1/v1", "--timeout-ms", "200", "--max-retries", "0"}) == cli::kTransportError);
}

TEST_CASE("config file values yield to flags") {
  const auto dir = oracle::scratch_dir("cli_config");
  io::write_file(dir / "cfg.toml", "[simulate]\nquestions = 5\nseed = 1\n");
  REQUIRE(run({"--config", s(dir / "cfg.toml"), "simulate", "--out-dir", s(dir / "a")}) == cli::kOk);
  REQUIRE(run({"--config", s(dir / "cfg.toml"), "simulate", "--out-dir", s(dir / "b"), "--questions", "7"}) == cli::kOk);
  const auto count = [](const fs::path& p) {
    std::set<std::string> ids;
    for (const auto& c : io::read_cases(p)) ids.insert(c.solution_id);
    return ids.size();
  };
  CHECK(count(dir / "a/cases.jsonl") == 5);
  CHECK(count(dir / "b/cases.jsonl") == 7);
  const auto m = run_manifest_from_json(nlohmann::json::parse(io::read_file(dir / "b/simulate.manifest.json")));
  CHECK(m.config.find("questions=7") != std::string::npos);
  CHECK(m.seeds["simulator"] == 1);
}

TEST_CASE("replay reproduces recorded outputs") {
  const auto dir = oracle::scratch_dir("cli_replay");
  REQUIRE(run({"simulate", "--out-dir", s(dir / "sim"), "--questions", "6", "--seed", "3"}) == cli::kOk);
  REQUIRE(run({"ingest", "--input", s(dir / "sim/raw.jsonl"), "--output", s(dir / "cases.jsonl")}) == cli::kOk);
  const auto digest = sha256_file(dir / "cases.jsonl");
  CHECK(run({"replay", "--manifest", s(dir / "cases.jsonl.manifest.json")}) == cli::kOk);
  CHECK(sha256_file(dir / "cases.jsonl") == digest);
}
