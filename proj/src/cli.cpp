#include "stepuq/cli.hpp"

#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "stepuq/client.hpp"
#include "stepuq/estimators.hpp"
#include "stepuq/ingest.hpp"
#include "stepuq/io.hpp"
#include "stepuq/judge.hpp"
#include "stepuq/manifest.hpp"
#include "stepuq/metrics.hpp"
#include "stepuq/report.hpp"
#include "stepuq/simulator.hpp"

namespace stepuq::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  bool verbose = false;
  bool quiet = false;
};

struct JudgeArgs {
  std::string mock;
  std::string endpoint;
  std::string model = "judge";
  std::string api_key_env = "STEPUQ_API_KEY";
  int timeout_ms = 120000;
  int max_retries = 4;
  judge::JudgeConfig cfg;
};

struct SimulateArgs {
  std::string out_dir;
  sim::SimConfig cfg;
};

struct IngestArgs {
  std::string input;
  std::string output;
  std::string format = "canonical";
  std::size_t subset_count = 0;
  std::string subset_ids;
  std::string ids_out;
  std::uint64_t seed = 0;
  bool strict = false;
};

struct SampleArgs {
  std::string cases;
  std::string store;
  int batch = 16;
  JudgeArgs judge;
};

struct EstimateArgs {
  std::string cases;
  std::string store;
  std::string output;
  std::vector<std::string> estimators;
  std::uint64_t seed = 0;
  int random_runs = 5;
  std::string embed_mock;
  std::string embed_endpoint;
  std::string embed_model = "embedder";
  JudgeArgs judge;
};

struct EvaluateArgs {
  std::string cases;
  std::string store;
  std::string records;
  std::string output;
};

struct ReportArgs {
  std::string report;
  std::string csv;
  std::string svg;
};

struct ReplayArgs {
  std::string manifest;
};

void add_judge_options(CLI::App* sub, JudgeArgs& a, bool sampling) {
  sub->add_option("--mock", a.mock, "Scripted judge responses (JSONL) instead of an endpoint");
  sub->add_option("--endpoint", a.endpoint, "Chat-completions base URL, e.g. http://localhost:8000/v1");
  sub->add_option("--model", a.model, "Judge model name")->capture_default_str();
  sub->add_option("--api-key-env", a.api_key_env, "Environment variable holding the bearer token")
      ->capture_default_str();
  sub->add_option("--timeout-ms", a.timeout_ms, "Per-request timeout")->capture_default_str();
  sub->add_option("--max-retries", a.max_retries, "Retries per request")->capture_default_str();
  sub->add_option("--t-greedy", a.cfg.t_greedy, "Greedy-pass temperature")->capture_default_str();
  sub->add_option("--epsilon", a.cfg.epsilon_prob, "Probability floor for absent class tokens")
      ->capture_default_str();
  sub->add_option("--top-logprobs", a.cfg.top_logprobs_requested, "Alternatives requested per token")
      ->capture_default_str();
  sub->add_option("--concurrency", a.cfg.max_concurrent_requests, "Maximum concurrent requests")
      ->capture_default_str();
  sub->add_option("--judge-seed", a.cfg.seed, "Seed forwarded with each request")->capture_default_str();
  if (sampling) {
    sub->add_option("--t-diverse", a.cfg.t_diverse, "Diverse-pass temperature")->capture_default_str();
    sub->add_option("--n-diverse", a.cfg.n_diverse, "Diverse samples per step")->capture_default_str();
    sub->add_option("--max-tokens", a.cfg.max_tokens, "Completion token limit")->capture_default_str();
  }
}

std::unique_ptr<JudgeClient> make_judge_client(const JudgeArgs& a) {
  if (!a.mock.empty()) return std::make_unique<MockJudgeClient>(MockJudgeClient::from_file(a.mock));
  if (a.endpoint.empty()) return nullptr;
  HttpConfig h;
  h.endpoint = a.endpoint;
  h.model = a.model;
  h.api_key_env = a.api_key_env;
  h.request_timeout = std::chrono::milliseconds(a.timeout_ms);
  h.max_retries = a.max_retries;
  return std::make_unique<HttpJudgeClient>(h);
}

std::vector<std::string> read_id_list(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError(fmt::format("cannot open id list '{}'", p.string()));
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line.front() != '#') ids.push_back(line);
  }
  return ids;
}

class Stage {
 public:
  Stage(std::string command, const CLI::App& app, std::vector<std::string> argv)
  {
    m_.command = std::move(command);
    m_.argv = std::move(argv);
    m_.tool_version = kToolVersion;
    m_.config = app.config_to_str(true, false);
    m_.started_at = utc_timestamp();
  }

  RunManifest& manifest() { return m_; }

  void finish(const fs::path& manifest_path) {
    m_.seal();
    m_.finished_at = utc_timestamp();
    io::write_file(manifest_path, to_json(m_).dump(2) + "\n");
    spdlog::info("run {} manifest: {}", m_.run_id, manifest_path.string());
  }

 private:
  RunManifest m_;
};

fs::path manifest_for(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

int cmd_simulate(const SimulateArgs& a, Stage& stage) {
  const auto corpus = sim::generate_corpus(a.cfg);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  sim::write_corpus_inputs(corpus, dir);
  io::write_cases(dir / "cases.jsonl", corpus.cases);
  io::write_verifications(dir / "verifications.jsonl", corpus.verifications);

  auto& m = stage.manifest();
  m.seeds["simulator"] = a.cfg.seed;
  const auto summary = ingest::summarize(corpus.cases);
  m.summary = {{"questions", summary.questions},
               {"steps", summary.steps},
               {"positives", summary.positives},
               {"positive_rate", summary.positive_rate}};
  for (const char* f : {"raw.jsonl", "judge_script.jsonl", "embeddings.jsonl", "cases.jsonl", "verifications.jsonl"}) {
    m.add_output(dir / f);
  }
  std::cout << ingest::format_summary(summary);
  stage.finish(dir / "simulate.manifest.json");
  return kOk;
}

int cmd_ingest(const IngestArgs& a, Stage& stage) {
  ingest::ParseOptions opts;
  if (a.format == "canonical") {
    opts.format = ingest::InputFormat::kCanonical;
  } else if (a.format == "prm800k") {
    opts.format = ingest::InputFormat::kPrm800k;
  } else {
    throw CLI::ValidationError("--format", "expected canonical or prm800k");
  }
  opts.strict = a.strict;

  std::ifstream in(a.input, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", a.input));
  const auto parsed = ingest::parse_annotations(in, opts);
  if (parsed.skipped > 0) spdlog::warn("skipped {} malformed records", parsed.skipped);

  ingest::SubsetSpec subset;
  if (a.subset_count > 0) subset.count = a.subset_count;
  if (!a.subset_ids.empty()) subset.ids = read_id_list(a.subset_ids);
  const auto result = ingest::build_cases(parsed.records, subset, a.seed);

  for (std::size_t i = 0; i < result.cases.size();) {
    std::size_t j = i;
    while (j < result.cases.size() && result.cases[j].solution_id == result.cases[i].solution_id) ++j;
    const std::vector<StepCase> trace(result.cases.begin() + static_cast<std::ptrdiff_t>(i),
                                      result.cases.begin() + static_cast<std::ptrdiff_t>(j));
    for (const auto& v : validate_trace(trace)) {
      throw DataError(fmt::format("{}: {} ({})", v.case_id, to_string(v.kind), v.message));
    }
    i = j;
  }

  io::write_cases(a.output, result.cases);
  const fs::path ids_out = a.ids_out.empty() ? fs::path(a.output + ".ids.txt") : fs::path(a.ids_out);
  std::string ids;
  for (const auto& id : result.selected_ids) ids += id + "\n";
  io::write_file(ids_out, ids);

  auto& m = stage.manifest();
  m.seeds["subset"] = a.seed;
  m.add_input(a.input);
  if (!a.subset_ids.empty()) m.add_input(a.subset_ids);
  m.add_output(a.output);
  m.add_output(ids_out);
  const auto& s = result.summary;
  m.summary = {{"questions", s.questions},         {"steps", s.steps},
               {"positives", s.positives},         {"positive_rate", s.positive_rate},
               {"mean_steps_per_solution", s.mean_steps_per_solution},
               {"skipped_records", parsed.skipped}};
  std::cout << ingest::format_summary(s);
  stage.finish(manifest_for(a.output));
  return kOk;
}

int cmd_sample(const SampleArgs& a, Stage& stage) {
  a.judge.cfg.validate();
  const auto cases = io::read_cases(a.cases);
  auto client = make_judge_client(a.judge);
  if (!client) throw CLI::ValidationError("sample", "either --mock or --endpoint is required");
  client->probe();

  std::set<std::string> done;
  if (fs::exists(a.store)) {
    for (const auto& v : io::read_verifications(a.store)) done.insert(v.case_id);
  }
  std::vector<StepCase> pending;
  for (const auto& c : cases) {
    if (!done.count(c.case_id)) pending.push_back(c);
  }
  spdlog::info("{} cases, {} already sampled, {} pending", cases.size(), done.size(), pending.size());

  if (fs::path(a.store).has_parent_path()) fs::create_directories(fs::path(a.store).parent_path());
  std::ofstream out(a.store, std::ios::binary | std::ios::app);
  if (!out) throw DataError(fmt::format("cannot open store '{}'", a.store));

  std::size_t failed = 0, written = 0, shortfalls = 0;
  std::size_t greedy_ok = 0, diverse_ok = 0, diverse_n = 0;
  const auto batch = static_cast<std::size_t>(std::max(1, a.batch));
  for (std::size_t i = 0; i < pending.size(); i += batch) {
    const std::vector<StepCase> chunk(pending.begin() + static_cast<std::ptrdiff_t>(i),
                                      pending.begin() + static_cast<std::ptrdiff_t>(std::min(pending.size(), i + batch)));
    for (const auto& v : judge::sample_steps(chunk, a.judge.cfg, *client)) {
      if (v.failed) {
        ++failed;
        spdlog::error("{}: {}", v.case_id, v.failure_cause);
        continue;
      }
      if (!v.shortfall_reason.empty()) {
        ++shortfalls;
        spdlog::warn("{}: {}", v.case_id, v.shortfall_reason);
      }
      std::size_t ok = 0;
      for (const auto& s : v.diverse_samples) ok += s.parse_ok ? 1 : 0;
      spdlog::debug("{}: greedy parse {}, diverse parse rate {}/{}", v.case_id, v.greedy_sample.parse_ok, ok,
                    v.diverse_samples.size());
      greedy_ok += v.greedy_sample.parse_ok ? 1 : 0;
      diverse_ok += ok;
      diverse_n += v.diverse_samples.size();
      io::write_json_line(out, to_json(v));
      ++written;
    }
    out.flush();
  }
  out.close();

  auto& m = stage.manifest();
  m.seeds["judge"] = a.judge.cfg.seed;
  m.add_input(a.cases);
  if (!a.judge.mock.empty()) m.add_input(a.judge.mock);
  m.add_output(a.store);
  m.summary = {{"written", written},
               {"already_present", done.size()},
               {"failed", failed},
               {"shortfalls", shortfalls},
               {"greedy_parse_rate", written ? static_cast<double>(greedy_ok) / written : 0.0},
               {"diverse_parse_rate", diverse_n ? static_cast<double>(diverse_ok) / diverse_n : 0.0}};
  std::cout << fmt::format("sampled {} steps ({} skipped as present, {} failed)\n", written, done.size(), failed);
  stage.finish(manifest_for(a.store));
  return failed > 0 ? kTransportError : kOk;
}

int cmd_estimate(const EstimateArgs& a, Stage& stage) {
  const auto cases = io::read_cases(a.cases);
  const auto verifications = io::read_verifications(a.store);

  estimators::EstimateOptions opts;
  for (const auto& name : a.estimators) {
    const auto id = estimator_from_string(name);
    if (!id) throw CLI::ValidationError("--estimators", fmt::format("unknown estimator '{}'", name));
    opts.estimators.push_back(*id);
  }
  for (int k = 0; k < a.random_runs; ++k) opts.random_seeds.push_back(a.seed + static_cast<std::uint64_t>(k));
  opts.judge_cfg = a.judge.cfg;

  auto client = make_judge_client(a.judge);
  if (client) client->probe();
  opts.p_true_client = client.get();

  std::unique_ptr<Embedder> embedder;
  if (!a.embed_mock.empty()) {
    embedder = std::make_unique<MockEmbedder>(MockEmbedder::from_file(a.embed_mock));
  } else if (!a.embed_endpoint.empty()) {
    HttpConfig h;
    h.endpoint = a.embed_endpoint;
    h.model = a.embed_model;
    h.api_key_env = a.judge.api_key_env;
    h.request_timeout = std::chrono::milliseconds(a.judge.timeout_ms);
    h.max_retries = a.judge.max_retries;
    embedder = std::make_unique<HttpEmbedder>(h);
  }
  opts.embedder = embedder.get();

  const auto run = estimators::estimate_all(cases, verifications, opts);
  for (const auto& s : run.skipped) spdlog::warn("skipped {}", s);
  io::write_records(a.output, run.records);

  auto& m = stage.manifest();
  m.seeds["random"] = opts.random_seeds;
  m.add_input(a.cases);
  m.add_input(a.store);
  if (!a.judge.mock.empty()) m.add_input(a.judge.mock);
  if (!a.embed_mock.empty()) m.add_input(a.embed_mock);
  m.add_output(a.output);
  std::size_t unavailable = 0;
  for (const auto& r : run.records) unavailable += r.score ? 0 : 1;
  m.summary = {{"records", run.records.size()}, {"unavailable", unavailable}, {"skipped", run.skipped}};
  std::cout << fmt::format("wrote {} uncertainty records ({} unavailable)\n", run.records.size(), unavailable);
  stage.finish(manifest_for(a.output));
  return kOk;
}

int cmd_evaluate(const EvaluateArgs& a, Stage& stage) {
  const auto report = metrics::evaluate(io::read_cases(a.cases), io::read_verifications(a.store),
                                        io::read_records(a.records));
  io::write_file(a.output, metrics::to_json(report).dump(2) + "\n");
  auto& m = stage.manifest();
  m.add_input(a.cases);
  m.add_input(a.store);
  m.add_input(a.records);
  m.add_output(a.output);
  m.summary = {{"steps", report.n_steps},
               {"verification_accuracy", report.verification_accuracy},
               {"verification_f1", report.verification_f1}};
  std::cout << report::render_text(report);
  stage.finish(manifest_for(a.output));
  return kOk;
}

int cmd_report(const ReportArgs& a, Stage& stage) {
  json j;
  try {
    j = json::parse(io::read_file(a.report));
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: {}", a.report, e.what()));
  }
  const auto report = metrics::eval_report_from_json(j);
  io::write_file(a.csv, report::render_csv(report));
  auto& m = stage.manifest();
  m.add_input(a.report);
  m.add_output(a.csv);
  if (!a.svg.empty()) {
    io::write_file(a.svg, report::render_svg(report));
    m.add_output(a.svg);
  }
  std::cout << report::render_text(report);
  stage.finish(manifest_for(a.csv));
  return kOk;
}

int cmd_replay(const ReplayArgs& a) {
  const auto recorded = run_manifest_from_json(json::parse(io::read_file(a.manifest)));
  std::vector<std::string> args{"stepuq"};
  args.insert(args.end(), recorded.argv.begin(), recorded.argv.end());
  const int rc = run(args);
  if (rc != kOk) return rc;
  int mismatches = 0;
  for (const auto& out : recorded.outputs) {
    const auto now = fs::exists(out.path) ? sha256_file(out.path) : std::string("<missing>");
    const bool same = now == out.sha256;
    std::cout << fmt::format("{} {}\n", same ? "match   " : "MISMATCH", out.path);
    if (!same) ++mismatches;
  }
  return mismatches == 0 ? kOk : kDataError;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Step-wise verification uncertainty toolkit", "stepuq"};
  app.set_version_flag("--version", kToolVersion);
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  app.require_subcommand(1);
  Common common;
  app.add_flag("-v,--verbose", common.verbose, "Debug logging");
  app.add_flag("-q,--quiet", common.quiet, "Warnings and errors only");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic corpus with a simulated judge");
  simulate->add_option("--out-dir", sim_args.out_dir, "Output directory")->required();
  simulate->add_option("--questions", sim_args.cfg.n_questions, "Number of solutions")->capture_default_str();
  simulate->add_option("--error-rate", sim_args.cfg.step_error_rate, "Per-step error probability")->capture_default_str();
  simulate->add_option("--skill", sim_args.cfg.judge_skill, "Mean latent judge skill")->capture_default_str();
  simulate->add_option("--concentration", sim_args.cfg.belief_concentration, "Per-rationale belief concentration")
      ->capture_default_str();
  simulate->add_option("--difficulty-concentration", sim_args.cfg.difficulty_concentration,
                       "Concentration of the latent skill")->capture_default_str();
  simulate->add_option("--min-steps", sim_args.cfg.min_steps, "Shortest trace")->capture_default_str();
  simulate->add_option("--max-steps", sim_args.cfg.max_steps, "Longest trace")->capture_default_str();
  simulate->add_option("--n-diverse", sim_args.cfg.n_diverse, "Diverse samples per step")->capture_default_str();
  simulate->add_flag("--degenerate", sim_args.cfg.degenerate_beliefs, "0/1 beliefs per rationale");
  simulate->add_option("--seed", sim_args.cfg.seed, "Simulator seed")->capture_default_str();

  IngestArgs ingest_args;
  auto* ingest = app.add_subcommand("ingest", "Build the canonical step-case file");
  ingest->add_option("--input", ingest_args.input, "Line-delimited annotations")->required();
  ingest->add_option("--output", ingest_args.output, "Case file to write")->required();
  ingest->add_option("--format", ingest_args.format, "canonical | prm800k")->capture_default_str();
  ingest->add_option("--subset-count", ingest_args.subset_count, "Sample this many solutions (0 = all)");
  ingest->add_option("--subset-ids", ingest_args.subset_ids, "File with one solution id per line");
  ingest->add_option("--ids-out", ingest_args.ids_out, "Where to write the selected ids");
  ingest->add_option("--seed", ingest_args.seed, "Subset sampling seed")->capture_default_str();
  ingest->add_flag("--strict", ingest_args.strict, "Abort on the first malformed record");

  SampleArgs sample_args;
  auto* sample = app.add_subcommand("sample", "Query the judge for greedy and diverse verifications");
  sample->add_option("--cases", sample_args.cases, "Case file")->required();
  sample->add_option("--store", sample_args.store, "Sample store (appended, resumable)")->required();
  sample->add_option("--batch", sample_args.batch, "Cases per flushed batch")->capture_default_str();
  add_judge_options(sample, sample_args.judge, true);

  EstimateArgs est_args;
  auto* estimate = app.add_subcommand("estimate", "Compute uncertainty scores");
  estimate->add_option("--cases", est_args.cases, "Case file")->required();
  estimate->add_option("--store", est_args.store, "Sample store")->required();
  estimate->add_option("--output", est_args.output, "Uncertainty record file")->required();
  estimate->add_option("--estimators", est_args.estimators, "Subset of estimators (default: all)")->delimiter(',');
  estimate->add_option("--seed", est_args.seed, "First seed of the random baseline")->capture_default_str();
  estimate->add_option("--random-runs", est_args.random_runs, "Seeds for stochastic estimators")->capture_default_str();
  estimate->add_option("--embed-mock", est_args.embed_mock, "Scripted embeddings for SEU");
  estimate->add_option("--embed-endpoint", est_args.embed_endpoint, "Embeddings base URL for SEU");
  estimate->add_option("--embed-model", est_args.embed_model, "Embedding model")->capture_default_str();
  add_judge_options(estimate, est_args.judge, false);

  EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Score uncertainty against verification correctness");
  evaluate->add_option("--cases", eval_args.cases, "Case file")->required();
  evaluate->add_option("--store", eval_args.store, "Sample store")->required();
  evaluate->add_option("--records", eval_args.records, "Uncertainty records")->required();
  evaluate->add_option("--output", eval_args.output, "Report JSON")->required();

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Render the metric table and rejection curves");
  report->add_option("--report", report_args.report, "Report JSON from evaluate")->required();
  report->add_option("--csv", report_args.csv, "CSV output")->required();
  report->add_option("--svg", report_args.svg, "Rejection-curve plot");

  ReplayArgs replay_args;
  auto* replay = app.add_subcommand("replay", "Re-run a stage from its manifest and compare digests");
  replay->add_option("--manifest", replay_args.manifest, "Manifest file")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsageError;
  }
  spdlog::set_level(common.verbose ? spdlog::level::debug
                    : common.quiet ? spdlog::level::warn
                                   : spdlog::level::info);

  std::vector<std::string> stage_argv(args.begin() + 1, args.end());
  try {
    if (*simulate) {
      Stage st("simulate", *simulate, stage_argv);
      return cmd_simulate(sim_args, st);
    }
    if (*ingest) {
      Stage st("ingest", *ingest, stage_argv);
      return cmd_ingest(ingest_args, st);
    }
    if (*sample) {
      Stage st("sample", *sample, stage_argv);
      return cmd_sample(sample_args, st);
    }
    if (*estimate) {
      Stage st("estimate", *estimate, stage_argv);
      return cmd_estimate(est_args, st);
    }
    if (*evaluate) {
      Stage st("evaluate", *evaluate, stage_argv);
      return cmd_evaluate(eval_args, st);
    }
    if (*report) {
      Stage st("report", *report, stage_argv);
      return cmd_report(report_args, st);
    }
    if (*replay) return cmd_replay(replay_args);
  } catch (const CLI::Error& e) {
    spdlog::error("{}", e.what());
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return kUsageError;
  } catch (const TransportError& e) {
    spdlog::error("transport error: {}", e.what());
    return kTransportError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kDataError;
  }
  return kUsageError;
}

}  // namespace stepuq::cli
