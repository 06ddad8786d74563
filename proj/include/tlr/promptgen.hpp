#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tlr/corpus.hpp"
#include "tlr/error.hpp"
#include "tlr/strategies.hpp"

namespace tlr::prompt {

inline constexpr std::string_view kSystemInstruction = "You are a judge in the field of software traceability.";
inline constexpr std::string_view kQuestion =
    "Determine if the following Requirements and Code are related. Answer only ``Yes'' or ``No''.";
inline constexpr std::string_view kNoFeedback = "No user feedback information.";
inline constexpr std::string_view kTruncationMarker = "[... code truncated ...]";

struct PromptBundle {
  Link pair;
  std::string system_instruction;
  std::string user_prompt;
  double temperature = 1.0;

  bool operator==(const PromptBundle&) const = default;
};

struct PromptOptions {
  /// Whitespace-separated tokens of code text kept before truncation; 0 keeps all.
  std::size_t max_code_tokens = 6000;
  double temperature = 1.0;
};

/// Explicit user feedback: pair -> 0 or 1.
using FeedbackLabels = std::map<Link, int>;

/// Label 1 for every Feedback edge of the graph.
FeedbackLabels feedback_from_graph(const strategies::StrategyGraph& graph);

/// Reads `req_id<TAB>code_id<TAB>label` lines (label 0 or 1).
FeedbackLabels parse_feedback_labels(std::string_view content, const Project& project);

/// "{a} and {b} have a {relation} relationship." for every dependency edge
/// touching `code_id`, sorted by (other artifact id, relation kind).
std::vector<std::string> relation_lines(const std::string& code_id, const strategies::StrategyGraph& graph);

/// Keeps the first `max_tokens` whitespace-separated tokens of `text` and
/// appends the marker on its own line when anything was cut.
std::string truncate_code(const std::string& text, std::size_t max_tokens);

PromptBundle build_prompt(const Link& pair, const Project& project, const strategies::StrategyGraph& graph,
                          const FeedbackLabels& feedback, const PromptOptions& options = {});

enum class Label { Yes, No, Unparseable };
std::string_view to_string(Label l);

struct LlmVerdict {
  Link pair;
  std::string raw_response;
  Label label = Label::Unparseable;
};

/// Yes/No when the leading letters of the first whitespace token of the
/// trimmed response spell "yes"/"no" (any case); Unparseable otherwise.
LlmVerdict parse_verdict(std::string raw, const Link& pair);

struct LlmRequest {
  std::string system_instruction;
  std::string user_prompt;
  double temperature = 1.0;
};

/// Failure worth retrying (timeouts, 429, 5xx).
class TransientError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

/// Endpoint adapter. complete() returns the response text or throws
/// TransientError (retried) or any other exception (not retried).
/// Implementations must be safe to call from several threads.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const LlmRequest& request) = 0;
};

/// Stable key of a request: FNV-1a 64 of system, a 0x1f separator, and the
/// user prompt, as 16 hex digits.
std::string request_key(const LlmRequest& request);

/// Answers from recorded responses; a missing key is a RuntimeError.
class ReplayClient : public LlmClient {
 public:
  explicit ReplayClient(std::map<std::string, std::string> responses) : responses_(std::move(responses)) {}
  /// JSON lines with "key" and "response".
  static ReplayClient from_jsonl(std::string_view content);
  static ReplayClient load(const std::filesystem::path& file);
  std::string complete(const LlmRequest& request) override;

 private:
  std::map<std::string, std::string> responses_;
};

/// Forwards to another client and keeps every successful exchange.
class RecordingClient : public LlmClient {
 public:
  explicit RecordingClient(LlmClient& inner) : inner_(inner) {}
  std::string complete(const LlmRequest& request) override;
  /// JSON lines readable by ReplayClient, sorted by key.
  std::string to_jsonl() const;

 private:
  LlmClient& inner_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> records_;
};

struct HttpClientConfig {
  /// e.g. "http://127.0.0.1:8080" or "https://api.example.com"
  std::string base_url;
  /// Request path of the chat endpoint.
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string token;  // sent as "Authorization: Bearer <token>" when nonempty
  int timeout_seconds = 60;
};

/// OpenAI-compatible chat completions over HTTP(S). Request body:
/// {"model", "temperature", "messages": [{"role":"system",...},{"role":"user",...}]};
/// the answer is choices[0].message.content. Connection errors, 429 and 5xx
/// raise TransientError; other non-200 statuses raise RuntimeError.
class HttpLlmClient : public LlmClient {
 public:
  explicit HttpLlmClient(HttpClientConfig config);
  std::string complete(const LlmRequest& request) override;

  static nlohmann::json request_body(const LlmRequest& request, const std::string& model);
  static std::string parse_response(const std::string& body);

 private:
  HttpClientConfig config_;
};

struct BatchOptions {
  /// Maximum number of requests sent, retries included; 0 means unlimited.
  std::size_t budget = 0;
  std::size_t max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double backoff_factor = 2.0;
  std::size_t max_in_flight = 1;
  /// Injected so tests do not sleep.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct PairFailure {
  Link pair;
  std::string error;
};

struct BatchResult {
  std::vector<LlmVerdict> verdicts;  // input order, answered bundles only
  std::size_t requests = 0;
  std::size_t retries = 0;
  std::size_t unparseable = 0;
  bool budget_exhausted = false;
  std::vector<Link> remaining;        // never sent because the budget ran out
  std::vector<PairFailure> failures;  // gave up after retries or a permanent error

  bool complete() const { return !budget_exhausted && failures.empty(); }
};

BatchResult run_batch(const std::vector<PromptBundle>& bundles, LlmClient& client, const BatchOptions& options = {});

nlohmann::json to_json(const PromptBundle& b);
nlohmann::json to_json(const LlmVerdict& v);
/// Manifest of a batch: counts, retries, failures and remaining pairs.
nlohmann::json to_json(const BatchResult& r);

/// One JSON object per line.
std::string dump_jsonl(const std::vector<PromptBundle>& bundles);

}  // namespace tlr::prompt
