#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "stepuq/core.hpp"

namespace stepuq {

struct TopToken {
  std::string token;
  double logprob = 0.0;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
  std::vector<TopToken> top;
};

struct Completion {
  std::string text;
  std::vector<TokenLogprob> tokens;  // empty when the server returned no logprobs
};

enum class RequestKind { kVerify, kPTrue };

std::string_view to_string(RequestKind k);

struct CompletionRequest {
  std::string case_id;
  RequestKind kind = RequestKind::kVerify;
  int sample_index = 0;  // 0 is the greedy pass, 1..N the diverse ones
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 512;
  int top_logprobs = 5;
  std::optional<std::uint64_t> seed;
};

/// A judge reachable over a chat-completions style API. Implementations
/// must be safe to call from several threads at once.
class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual Completion complete(const CompletionRequest& req) = 0;
  /// Throws TransportError when the endpoint cannot be reached.
  virtual void probe() {}
};

struct HttpConfig {
  std::string endpoint;  // e.g. http://localhost:8000/v1
  std::string model;
  std::string api_key_env = "STEPUQ_API_KEY";
  std::chrono::milliseconds request_timeout{120000};
  int max_retries = 4;
  std::chrono::milliseconds backoff_initial{500};
  std::chrono::milliseconds backoff_max{8000};
};

/// Parsed form of an endpoint URL: "http://host:port" plus a path prefix.
struct EndpointUrl {
  std::string origin;
  std::string base_path;
};

EndpointUrl parse_endpoint(const std::string& url);

/// Retries connection failures, 408, 429 and 5xx responses with capped
/// exponential backoff. A Retry-After header overrides the computed delay.
class HttpJudgeClient final : public JudgeClient {
 public:
  explicit HttpJudgeClient(HttpConfig cfg);

  Completion complete(const CompletionRequest& req) override;
  void probe() override;

  static nlohmann::json build_request_body(const std::string& model, const CompletionRequest& req);
  static Completion parse_response_body(const nlohmann::json& body);

 private:
  HttpConfig cfg_;
  EndpointUrl url_;
  std::string api_key_;
};

/// Scripted judge keyed by (case_id, kind, sample_index). One JSON record per
/// line: {"case_id", "kind", "sample_index", "text", "tokens"?, "error"?}.
/// An "error" field scripts a transport failure for that request.
class MockJudgeClient final : public JudgeClient {
 public:
  struct Entry {
    std::string case_id;
    RequestKind kind = RequestKind::kVerify;
    int sample_index = 0;
    Completion completion;
    std::string error;
  };

  MockJudgeClient() = default;
  explicit MockJudgeClient(std::vector<Entry> entries);
  static MockJudgeClient from_file(const std::filesystem::path& path);

  Completion complete(const CompletionRequest& req) override;

  static nlohmann::json entry_to_json(const Entry& e);
  static Entry entry_from_json(const nlohmann::json& j);

 private:
  std::map<std::tuple<std::string, RequestKind, int>, Entry> entries_;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// One vector per input text, in input order.
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(HttpConfig cfg);
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

 private:
  HttpConfig cfg_;
  EndpointUrl url_;
  std::string api_key_;
};

/// Scripted vectors. Lines are {"text", "vector"} for exact matches or
/// {"tag", "vector"} matching any text containing "[<tag>]".
class MockEmbedder final : public Embedder {
 public:
  void add_text(std::string text, std::vector<double> v);
  void add_tag(std::string tag, std::vector<double> v);
  static MockEmbedder from_file(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

 private:
  std::map<std::string, std::vector<double>> by_text_;
  std::vector<std::pair<std::string, std::vector<double>>> by_tag_;
};

}  // namespace stepuq
