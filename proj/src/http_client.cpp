#include <httplib.h>

#include "tlr/promptgen.hpp"

namespace tlr::prompt {

HttpLlmClient::HttpLlmClient(HttpClientConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw ValidationError("LLM endpoint URL is empty");
  if (config_.base_url.rfind("http://", 0) != 0 && config_.base_url.rfind("https://", 0) != 0) {
    throw ValidationError("LLM endpoint URL must start with http:// or https://");
  }
}

nlohmann::json HttpLlmClient::request_body(const LlmRequest& request, const std::string& model) {
  return {{"model", model},
          {"temperature", request.temperature},
          {"messages",
           {{{"role", "system"}, {"content", request.system_instruction}},
            {{"role", "user"}, {"content", request.user_prompt}}}}};
}

std::string HttpLlmClient::parse_response(const std::string& body) {
  try {
    const auto j = nlohmann::json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw RuntimeError(std::string("unexpected LLM response body: ") + ex.what());
  }
}

std::string HttpLlmClient::complete(const LlmRequest& request) {
  // A client per call keeps the adapter safe to share between threads.
  httplib::Client cli(config_.base_url);
  cli.set_connection_timeout(config_.timeout_seconds, 0);
  cli.set_read_timeout(config_.timeout_seconds, 0);
  cli.set_write_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);
  auto res = cli.Post(config_.path, headers, request_body(request, config_.model).dump(), "application/json");
  if (!res) throw TransientError("LLM endpoint unreachable: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw TransientError("LLM endpoint returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) throw RuntimeError("LLM endpoint returned HTTP " + std::to_string(res->status));
  return parse_response(res->body);
}

}  // namespace tlr::prompt
