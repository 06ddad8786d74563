#include "tlr/promptgen.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <sstream>
#include <thread>
#include <tuple>

namespace tlr::prompt {

using strategies::EdgeType;

namespace {

std::string trim(std::string_view s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string_view relation_word(EdgeType t) {
  switch (t) {
    case EdgeType::Import: return "import";
    case EdgeType::Extend: return "extend";
    case EdgeType::Call: return "method call";
    default: return "";
  }
}

}  // namespace

FeedbackLabels feedback_from_graph(const strategies::StrategyGraph& graph) {
  FeedbackLabels out;
  for (const auto& e : graph.edges()) {
    if (e.type == EdgeType::Feedback) out[{e.from, e.to}] = 1;
  }
  return out;
}

FeedbackLabels parse_feedback_labels(std::string_view content, const Project& project) {
  FeedbackLabels out;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(t);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(trim(col));
    if (cols.size() != 3 || (cols[2] != "0" && cols[2] != "1")) {
      throw ValidationError("feedback line " + std::to_string(line_no) + ": expected req_id<TAB>code_id<TAB>0|1");
    }
    const Artifact* r = project.find(cols[0]);
    const Artifact* c = project.find(cols[1]);
    if (r == nullptr || r->kind != ArtifactKind::Requirement) throw ValidationError("feedback names unknown requirement " + cols[0]);
    if (c == nullptr || c->kind != ArtifactKind::Code) throw ValidationError("feedback names unknown code artifact " + cols[1]);
    out[{cols[0], cols[1]}] = cols[2] == "1" ? 1 : 0;
  }
  return out;
}

std::vector<std::string> relation_lines(const std::string& code_id, const strategies::StrategyGraph& graph) {
  // (other id, kind, from, to)
  std::vector<std::tuple<std::string, EdgeType, std::string, std::string>> rows;
  for (EdgeType t : {EdgeType::Import, EdgeType::Extend, EdgeType::Call}) {
    for (const auto& to : graph.out_neighbors(code_id, t)) rows.emplace_back(to, t, code_id, to);
    for (const auto& from : graph.in_neighbors(code_id, t)) rows.emplace_back(from, t, from, code_id);
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  std::vector<std::string> out;
  for (const auto& [other, t, from, to] : rows) {
    out.push_back(from + " and " + to + " have a " + std::string(relation_word(t)) + " relationship.");
  }
  return out;
}

std::string truncate_code(const std::string& text, std::size_t max_tokens) {
  if (max_tokens == 0) return text;
  std::size_t i = 0;
  std::size_t seen = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= n) break;
    if (seen == max_tokens) {
      // Cut right after the last kept token.
      std::string kept = text.substr(0, i);
      while (!kept.empty() && std::isspace(static_cast<unsigned char>(kept.back()))) kept.pop_back();
      return kept + "\n" + std::string(kTruncationMarker);
    }
    while (i < n && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    ++seen;
  }
  return text;
}

PromptBundle build_prompt(const Link& pair, const Project& project, const strategies::StrategyGraph& graph,
                          const FeedbackLabels& feedback, const PromptOptions& options) {
  const Artifact* req = project.find(pair.req_id);
  const Artifact* code = project.find(pair.code_id);
  if (req == nullptr || req->kind != ArtifactKind::Requirement) {
    throw ValidationError("unknown requirement " + pair.req_id);
  }
  if (code == nullptr || code->kind != ArtifactKind::Code) throw ValidationError("unknown code artifact " + pair.code_id);

  std::vector<std::string> info = relation_lines(pair.code_id, graph);
  if (auto it = feedback.find(pair); it != feedback.end()) {
    info.push_back("User feedback indicates label is " + std::to_string(it->second) + ".");
  } else {
    info.emplace_back(kNoFeedback);
  }
  if (graph.has_edge(pair.req_id, pair.code_id, EdgeType::FineGrained)) {
    info.push_back("Fine-grained relationship exists between " + pair.req_id + " and " + pair.code_id + ".");
  } else {
    info.push_back("No fine-grained relationship between " + pair.req_id + " and " + pair.code_id + ".");
  }
  std::string additional;
  for (std::size_t i = 0; i < info.size(); ++i) additional += (i ? "\n" : "") + info[i];

  PromptBundle b;
  b.pair = pair;
  b.system_instruction = std::string(kSystemInstruction);
  b.temperature = options.temperature;
  b.user_prompt = std::string(kQuestion) + "\n\nRequirements: " + trim(req->text) +
                  "\n\nCode: " + truncate_code(trim(code->text), options.max_code_tokens) +
                  "\n\nAdditional Information: " + additional;
  return b;
}

std::string_view to_string(Label l) {
  switch (l) {
    case Label::Yes: return "Yes";
    case Label::No: return "No";
    case Label::Unparseable: return "Unparseable";
  }
  return "Unparseable";
}

LlmVerdict parse_verdict(std::string raw, const Link& pair) {
  LlmVerdict v;
  v.pair = pair;
  const std::string t = trim(raw);
  std::string word;
  for (char c : t) {
    if (!std::isalpha(static_cast<unsigned char>(c))) break;
    word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  // The first token must be the word itself followed by punctuation at most.
  const std::size_t token_end = std::min(t.find_first_of(" \t\r\n"), t.size());
  bool clean = true;
  for (std::size_t i = word.size(); i < token_end; ++i) {
    if (std::isalnum(static_cast<unsigned char>(t[i]))) clean = false;
  }
  if (clean && word == "yes") {
    v.label = Label::Yes;
  } else if (clean && word == "no") {
    v.label = Label::No;
  }
  v.raw_response = std::move(raw);
  return v;
}

std::string request_key(const LlmRequest& request) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  feed(request.system_instruction);
  feed("\x1f");
  feed(request.user_prompt);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ReplayClient ReplayClient::from_jsonl(std::string_view content) {
  std::map<std::string, std::string> responses;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      responses[j.at("key").get<std::string>()] = j.at("response").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError("replay line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return ReplayClient(std::move(responses));
}

ReplayClient ReplayClient::load(const std::filesystem::path& file) { return from_jsonl(read_file(file)); }

std::string ReplayClient::complete(const LlmRequest& request) {
  const auto key = request_key(request);
  auto it = responses_.find(key);
  if (it == responses_.end()) throw RuntimeError("no recorded response for request " + key);
  return it->second;
}

std::string RecordingClient::complete(const LlmRequest& request) {
  std::string response = inner_.complete(request);
  std::lock_guard<std::mutex> lock(mutex_);
  records_[request_key(request)] = response;
  return response;
}

std::string RecordingClient::to_jsonl() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::string out;
  for (const auto& [key, response] : records_) {
    out += nlohmann::json{{"key", key}, {"response", response}}.dump() + "\n";
  }
  return out;
}

BatchResult run_batch(const std::vector<PromptBundle>& bundles, LlmClient& client, const BatchOptions& options) {
  const auto sleep = options.sleep ? options.sleep : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  enum class State { Pending, Answered, Failed, Unsent };
  std::vector<State> state(bundles.size(), State::Pending);
  std::vector<std::string> answers(bundles.size());
  std::vector<std::string> errors(bundles.size());

  std::mutex mutex;
  std::size_t requests = 0;
  std::size_t retries = 0;
  bool exhausted = false;
  std::atomic<std::size_t> next{0};

  // Reserves one request slot; false once the budget is spent.
  auto reserve = [&]() {
    std::lock_guard<std::mutex> lock(mutex);
    if (options.budget != 0 && requests >= options.budget) {
      exhausted = true;
      return false;
    }
    ++requests;
    return true;
  };

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= bundles.size()) return;
      const LlmRequest req{bundles[i].system_instruction, bundles[i].user_prompt, bundles[i].temperature};
      auto backoff = options.initial_backoff;
      for (std::size_t attempt = 0;; ++attempt) {
        if (!reserve()) {
          state[i] = State::Unsent;
          break;
        }
        try {
          answers[i] = client.complete(req);
          state[i] = State::Answered;
          break;
        } catch (const TransientError& ex) {
          if (attempt >= options.max_retries) {
            errors[i] = ex.what();
            state[i] = State::Failed;
            break;
          }
          {
            std::lock_guard<std::mutex> lock(mutex);
            ++retries;
          }
          sleep(backoff);
          backoff = std::chrono::milliseconds(
              static_cast<std::chrono::milliseconds::rep>(static_cast<double>(backoff.count()) * options.backoff_factor));
        } catch (const std::exception& ex) {
          errors[i] = ex.what();
          state[i] = State::Failed;
          break;
        }
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(1, std::min(options.max_in_flight, bundles.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  BatchResult r;
  r.requests = requests;
  r.retries = retries;
  r.budget_exhausted = exhausted;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    switch (state[i]) {
      case State::Answered: {
        auto v = parse_verdict(answers[i], bundles[i].pair);
        if (v.label == Label::Unparseable) ++r.unparseable;
        r.verdicts.push_back(std::move(v));
        break;
      }
      case State::Failed: r.failures.push_back({bundles[i].pair, errors[i]}); break;
      case State::Unsent:
      case State::Pending: r.remaining.push_back(bundles[i].pair); break;
    }
  }
  return r;
}

nlohmann::json to_json(const PromptBundle& b) {
  return {{"req_id", b.pair.req_id},
          {"code_id", b.pair.code_id},
          {"system_instruction", b.system_instruction},
          {"user_prompt", b.user_prompt},
          {"temperature", b.temperature}};
}

nlohmann::json to_json(const LlmVerdict& v) {
  return {{"req_id", v.pair.req_id},
          {"code_id", v.pair.code_id},
          {"label", std::string(to_string(v.label))},
          {"raw_response", v.raw_response}};
}

nlohmann::json to_json(const BatchResult& r) {
  nlohmann::json remaining = nlohmann::json::array();
  for (const auto& l : r.remaining) remaining.push_back({l.req_id, l.code_id});
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : r.failures) failures.push_back({{"req_id", f.pair.req_id}, {"code_id", f.pair.code_id}, {"error", f.error}});
  return {{"verdicts", r.verdicts.size()},
          {"requests", r.requests},
          {"retries", r.retries},
          {"unparseable", r.unparseable},
          {"budget_exhausted", r.budget_exhausted},
          {"remaining", remaining},
          {"failures", failures},
          {"complete", r.complete()}};
}

std::string dump_jsonl(const std::vector<PromptBundle>& bundles) {
  std::string out;
  for (const auto& b : bundles) out += to_json(b).dump() + "\n";
  return out;
}

}  // namespace tlr::prompt
