#include "stepuq/client.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "httplib.h"
#include "stepuq/io.hpp"

namespace stepuq {

using nlohmann::json;

std::string_view to_string(RequestKind k) {
  return k == RequestKind::kPTrue ? "p_true" : "verify";
}

namespace {

RequestKind request_kind_from_string(std::string_view s) {
  if (s == "verify") return RequestKind::kVerify;
  if (s == "p_true") return RequestKind::kPTrue;
  throw DataError(fmt::format("unknown request kind '{}'", s));
}

std::string read_api_key(const std::string& env) {
  if (env.empty()) return {};
  const char* v = std::getenv(env.c_str());
  return v ? std::string(v) : std::string{};
}

httplib::Client make_client(const EndpointUrl& url, const HttpConfig& cfg) {
  httplib::Client cli(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.request_timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.request_timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  return cli;
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

std::chrono::milliseconds backoff_delay(const HttpConfig& cfg, int attempt) {
  thread_local std::mt19937_64 jitter{std::random_device{}()};
  const auto cap = std::min<long long>(cfg.backoff_max.count(),
                                       cfg.backoff_initial.count() * (1LL << std::min(attempt, 20)));
  std::uniform_int_distribution<long long> dist(cap / 2, std::max<long long>(cap, 1));
  return std::chrono::milliseconds(dist(jitter));
}

json post_json(const HttpConfig& cfg, const EndpointUrl& url, const std::string& api_key,
               const std::string& path, const json& body) {
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  const std::string payload = body.dump();
  std::string last_error;

  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff_delay(cfg, attempt - 1));
    }
    auto cli = make_client(url, cfg);
    auto res = cli.Post(url.base_path + path, headers, payload, "application/json");
    if (!res) {
      last_error = fmt::format("{} {}: {}", url.origin, url.base_path + path,
                               httplib::to_string(res.error()));
      spdlog::debug("request failed (attempt {}): {}", attempt + 1, last_error);
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      try {
        return json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw TransportError(fmt::format("malformed response body: {}", e.what()));
      }
    }
    last_error = fmt::format("HTTP {}: {}", res->status, res->body.substr(0, 200));
    if (!retryable_status(res->status)) break;
    if (res->has_header("Retry-After") && attempt < cfg.max_retries) {
      const auto wait = std::atoi(res->get_header_value("Retry-After").c_str());
      if (wait > 0) std::this_thread::sleep_for(std::chrono::seconds(std::min(wait, 60)));
    }
    spdlog::debug("retryable response (attempt {}): {}", attempt + 1, last_error);
  }
  throw TransportError(fmt::format("request to {}{} failed: {}", url.origin,
                                   url.base_path + path, last_error));
}

std::vector<TopToken> top_from_json(const json& arr) {
  std::vector<TopToken> out;
  if (!arr.is_array()) return out;
  for (const auto& t : arr) out.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
  return out;
}

json tokens_to_json(const std::vector<TokenLogprob>& tokens) {
  json arr = json::array();
  for (const auto& t : tokens) {
    json top = json::array();
    for (const auto& alt : t.top) top.push_back({{"token", alt.token}, {"logprob", alt.logprob}});
    arr.push_back({{"token", t.token}, {"logprob", t.logprob}, {"top_logprobs", std::move(top)}});
  }
  return arr;
}

std::vector<TokenLogprob> tokens_from_json(const json& arr) {
  std::vector<TokenLogprob> out;
  if (!arr.is_array()) return out;
  for (const auto& t : arr) {
    TokenLogprob tok;
    tok.token = t.at("token").get<std::string>();
    tok.logprob = t.at("logprob").get<double>();
    if (const auto it = t.find("top_logprobs"); it != t.end()) tok.top = top_from_json(*it);
    out.push_back(std::move(tok));
  }
  return out;
}

}  // namespace

EndpointUrl parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument(fmt::format("endpoint '{}' lacks a scheme", url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  EndpointUrl out;
  out.origin = url.substr(0, path_start);
  out.base_path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
  return out;
}

HttpJudgeClient::HttpJudgeClient(HttpConfig cfg)
    : cfg_(std::move(cfg)), url_(parse_endpoint(cfg_.endpoint)), api_key_(read_api_key(cfg_.api_key_env)) {}

json HttpJudgeClient::build_request_body(const std::string& model, const CompletionRequest& req) {
  json body{{"model", model},
            {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})},
            {"temperature", req.temperature},
            {"max_tokens", req.max_tokens},
            {"logprobs", true},
            {"top_logprobs", req.top_logprobs}};
  if (req.seed) body["seed"] = *req.seed;
  return body;
}

Completion HttpJudgeClient::parse_response_body(const json& body) {
  try {
    const auto& choice = body.at("choices").at(0);
    Completion c;
    const auto& content = choice.at("message").at("content");
    c.text = content.is_string() ? content.get<std::string>() : std::string{};
    if (const auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object()) {
      if (const auto toks = lp->find("content"); toks != lp->end()) c.tokens = tokens_from_json(*toks);
    }
    return c;
  } catch (const json::exception& e) {
    throw TransportError(fmt::format("unexpected completion payload: {}", e.what()));
  }
}

Completion HttpJudgeClient::complete(const CompletionRequest& req) {
  return parse_response_body(
      post_json(cfg_, url_, api_key_, "/chat/completions", build_request_body(cfg_.model, req)));
}

void HttpJudgeClient::probe() {
  auto cli = make_client(url_, cfg_);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = cli.Get(url_.base_path + "/models", headers);
  if (!res) {
    throw TransportError(fmt::format("endpoint {} unreachable: {}", cfg_.endpoint,
                                     httplib::to_string(res.error())));
  }
}

MockJudgeClient::MockJudgeClient(std::vector<Entry> entries) {
  for (auto& e : entries) {
    auto key = std::make_tuple(e.case_id, e.kind, e.sample_index);
    entries_.insert_or_assign(std::move(key), std::move(e));
  }
}

MockJudgeClient MockJudgeClient::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open mock script '{}'", path.string()));
  std::vector<Entry> entries;
  io::for_each_json_line(in, [&](const json& j, std::size_t line) {
    try {
      entries.push_back(entry_from_json(j));
    } catch (const std::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), line, e.what()));
    }
  });
  return MockJudgeClient(std::move(entries));
}

json MockJudgeClient::entry_to_json(const Entry& e) {
  json j{{"case_id", e.case_id},
         {"kind", std::string(to_string(e.kind))},
         {"sample_index", e.sample_index},
         {"text", e.completion.text},
         {"tokens", tokens_to_json(e.completion.tokens)}};
  if (!e.error.empty()) j["error"] = e.error;
  return j;
}

MockJudgeClient::Entry MockJudgeClient::entry_from_json(const json& j) {
  Entry e;
  e.case_id = j.at("case_id").get<std::string>();
  e.kind = request_kind_from_string(j.value("kind", std::string("verify")));
  e.sample_index = j.at("sample_index").get<int>();
  e.completion.text = j.value("text", std::string{});
  if (const auto it = j.find("tokens"); it != j.end()) e.completion.tokens = tokens_from_json(*it);
  e.error = j.value("error", std::string{});
  return e;
}

Completion MockJudgeClient::complete(const CompletionRequest& req) {
  const auto it = entries_.find(std::make_tuple(req.case_id, req.kind, req.sample_index));
  if (it == entries_.end()) {
    throw TransportError(fmt::format("no scripted response for ({}, {}, {})", req.case_id,
                                     to_string(req.kind), req.sample_index));
  }
  if (!it->second.error.empty()) throw TransportError(it->second.error);
  return it->second.completion;
}

HttpEmbedder::HttpEmbedder(HttpConfig cfg)
    : cfg_(std::move(cfg)), url_(parse_endpoint(cfg_.endpoint)), api_key_(read_api_key(cfg_.api_key_env)) {}

std::vector<std::vector<double>> HttpEmbedder::embed(const std::vector<std::string>& texts) {
  const json body = post_json(cfg_, url_, api_key_, "/embeddings",
                              json{{"model", cfg_.model}, {"input", texts}});
  std::vector<std::vector<double>> out(texts.size());
  try {
    const auto& data = body.at("data");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto idx = data[i].value("index", i);
      if (idx >= out.size()) throw TransportError("embedding index out of range");
      out[idx] = data[i].at("embedding").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw TransportError(fmt::format("unexpected embeddings payload: {}", e.what()));
  }
  for (const auto& v : out) {
    if (v.empty()) throw TransportError("embeddings response is missing vectors");
  }
  return out;
}

void MockEmbedder::add_text(std::string text, std::vector<double> v) {
  by_text_.insert_or_assign(std::move(text), std::move(v));
}

void MockEmbedder::add_tag(std::string tag, std::vector<double> v) {
  by_tag_.emplace_back(std::move(tag), std::move(v));
}

MockEmbedder MockEmbedder::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open embedding script '{}'", path.string()));
  MockEmbedder m;
  io::for_each_json_line(in, [&](const json& j, std::size_t line) {
    auto vec = j.at("vector").get<std::vector<double>>();
    if (j.contains("text")) {
      m.add_text(j.at("text").get<std::string>(), std::move(vec));
    } else if (j.contains("tag")) {
      m.add_tag(j.at("tag").get<std::string>(), std::move(vec));
    } else {
      throw DataError(fmt::format("{}:{}: record needs 'text' or 'tag'", path.string(), line));
    }
  });
  return m;
}

void MockEmbedder::write(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& [text, v] : by_text_) out += json{{"text", text}, {"vector", v}}.dump() + "\n";
  for (const auto& [tag, v] : by_tag_) out += json{{"tag", tag}, {"vector", v}}.dump() + "\n";
  io::write_file(path, out);
}

std::vector<std::vector<double>> MockEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    if (const auto it = by_text_.find(t); it != by_text_.end()) {
      out.push_back(it->second);
      continue;
    }
    const auto tagged = std::find_if(by_tag_.begin(), by_tag_.end(), [&](const auto& entry) {
      return t.find("[" + entry.first + "]") != std::string::npos;
    });
    if (tagged == by_tag_.end()) {
      throw Error(fmt::format("no scripted embedding for text '{}'", t.substr(0, 60)));
    }
    out.push_back(tagged->second);
  }
  return out;
}

}  // namespace stepuq
