// Copyright 2026 The Pilot Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// LLM conversation layer: the three-mode action protocol, prompt
// composition, token budgeting, usage accounting and the client interface.

#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "pilot/callgraph.hpp"
#include "pilot/paths.hpp"
#include "pilot/error.hpp"

namespace pilot {

// ---------------------------------------------------------------------------
// Messages and actions.

enum class Role { kSystem, kUser, kAssistant };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "?";
}

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

// Inclusive, 1-based.
struct LineRange {
  int start = 1;
  int end = 1;

  friend bool operator==(const LineRange&, const LineRange&) = default;
};

struct ReadData {
  std::vector<std::string> target_files;
  std::optional<LineRange> file_slice;
  std::string reason;

  friend bool operator==(const ReadData&, const ReadData&) = default;
};

struct ModifyData {
  std::string file;
  std::optional<LineRange> line_range;
  std::string replacement;

  friend bool operator==(const ModifyData&, const ModifyData&) = default;
};

struct ExecuteCommand {
  std::string script;

  friend bool operator==(const ExecuteCommand&, const ExecuteCommand&) = default;
};

using LlmAction = std::variant<ReadData, ModifyData, ExecuteCommand>;

// A response that does not follow the action protocol. The message is meant
// to be shown back to the model.
class ProtocolError : public InputError {
 public:
  using InputError::InputError;
};

namespace detail {

// Offsets of balanced {...} spans, skipping braces inside JSON strings.
inline std::optional<std::size_t> MatchBrace(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::nullopt;
}

inline std::optional<LineRange> ParseRange(const nlohmann::json& obj, const char* key) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  const auto& v = obj.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
    throw ProtocolError(std::string(key) + " must be a [start, end] pair of integers");
  }
  LineRange r{v[0].get<int>(), v[1].get<int>()};
  if (r.start < 1 || r.end < r.start) {
    throw ProtocolError(std::string(key) + " must satisfy 1 <= start <= end");
  }
  return r;
}

inline std::string RequireString(const nlohmann::json& obj, const char* key) {
  if (!obj.contains(key)) throw ProtocolError(std::string("missing required field ") + key);
  if (!obj.at(key).is_string()) throw ProtocolError(std::string(key) + " must be a string");
  return obj.at(key).get<std::string>();
}

}  // namespace detail

// First well-formed JSON object in the response, or nullopt.
inline std::optional<nlohmann::json> first_json_object(std::string_view text) {
  for (std::size_t pos = text.find('{'); pos != std::string_view::npos;
       pos = text.find('{', pos + 1)) {
    auto close = detail::MatchBrace(text, pos);
    if (!close) continue;
    auto doc = nlohmann::json::parse(text.substr(pos, *close - pos + 1), nullptr, false);
    if (!doc.is_discarded() && doc.is_object()) return doc;
  }
  return std::nullopt;
}

inline LlmAction parse_action(std::string_view response) {
  auto doc = first_json_object(response);
  if (!doc) throw ProtocolError("no JSON object found in response");
  if (!doc->contains("mode") || !doc->at("mode").is_string()) {
    throw ProtocolError("missing required field mode");
  }
  const std::string mode = doc->at("mode").get<std::string>();
  if (mode == "read_data") {
    ReadData r;
    if (!doc->contains("target_files")) throw ProtocolError("missing required field target_files");
    const auto& files = doc->at("target_files");
    if (files.is_string()) {
      r.target_files.push_back(files.get<std::string>());
    } else if (files.is_array() && !files.empty()) {
      for (const auto& f : files) {
        if (!f.is_string()) throw ProtocolError("target_files must hold strings");
        r.target_files.push_back(f.get<std::string>());
      }
    } else {
      throw ProtocolError("target_files must be a nonempty list of paths");
    }
    r.file_slice = detail::ParseRange(*doc, "file_slice");
    if (doc->contains("reason") && doc->at("reason").is_string()) {
      r.reason = doc->at("reason").get<std::string>();
    }
    return r;
  }
  if (mode == "modify_data") {
    ModifyData m;
    m.file = detail::RequireString(*doc, "file");
    m.line_range = detail::ParseRange(*doc, "line_range");
    m.replacement = detail::RequireString(*doc, "replacement");
    return m;
  }
  if (mode == "execute_command") {
    return ExecuteCommand{detail::RequireString(*doc, "script")};
  }
  throw ProtocolError("unknown mode " + mode);
}

inline nlohmann::json action_to_json(const LlmAction& action) {
  nlohmann::json doc;
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ReadData>) {
          doc["mode"] = "read_data";
          doc["target_files"] = a.target_files;
          if (a.file_slice) doc["file_slice"] = {a.file_slice->start, a.file_slice->end};
          doc["reason"] = a.reason;
        } else if constexpr (std::is_same_v<T, ModifyData>) {
          doc["mode"] = "modify_data";
          doc["file"] = a.file;
          if (a.line_range) doc["line_range"] = {a.line_range->start, a.line_range->end};
          doc["replacement"] = a.replacement;
        } else {
          doc["mode"] = "execute_command";
          doc["script"] = a.script;
        }
      },
      action);
  return doc;
}

inline std::string serialize_action(const LlmAction& action) { return action_to_json(action).dump(); }

// ---------------------------------------------------------------------------
// Tokens and cost.

using TokenEstimator = std::function<std::size_t(std::string_view)>;

// ceil(bytes / 4).
inline std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

inline const TokenEstimator& default_estimator() {
  static const TokenEstimator est = [](std::string_view t) { return estimate_tokens(t); };
  return est;
}

inline std::string truncation_notice(std::string_view file_path) {
  return "[truncated: token limit reached] Only the beginning of " + std::string(file_path) +
         " is shown. Request the remaining lines with read_data and a file_slice [start, end], "
         "one section at a time.";
}

// Returns content unchanged when it fits the budget. Otherwise the longest
// prefix that fits (cut back to a line boundary when one exists), followed by
// a notice pointing the model at file_slice reads.
inline std::string truncate_with_guidance(std::string_view content, std::size_t budget,
                                          std::string_view file_path,
                                          const TokenEstimator& estimate = default_estimator()) {
  if (budget == 0) throw InputError("token budget must be positive");
  if (estimate(content) <= budget) return std::string(content);
  std::size_t lo = 0, hi = content.size();
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo + 1) / 2;
    if (estimate(content.substr(0, mid)) <= budget) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  std::size_t cut = lo;
  while (cut > 0 && cut < content.size() &&
         (static_cast<unsigned char>(content[cut]) & 0xC0) == 0x80) {
    --cut;
  }
  auto nl = content.substr(0, cut).rfind('\n');
  if (nl != std::string_view::npos) cut = nl + 1;
  std::string out(content.substr(0, cut));
  if (!out.empty() && out.back() != '\n') out += '\n';
  out += truncation_notice(file_path);
  return out;
}

struct TokenUsage {
  std::uint64_t input_tokens = 0;
  std::uint64_t output_tokens = 0;
  std::uint64_t chat_count = 0;

  TokenUsage& operator+=(const TokenUsage& o) {
    input_tokens += o.input_tokens;
    output_tokens += o.output_tokens;
    chat_count += o.chat_count;
    return *this;
  }
  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

struct PriceTable {
  double usd_per_million_input = 3.0;
  double usd_per_million_output = 15.0;
};

inline double cost(const TokenUsage& usage, const PriceTable& prices) {
  if (prices.usd_per_million_input < 0 || prices.usd_per_million_output < 0) {
    throw InputError("prices must be nonnegative");
  }
  return static_cast<double>(usage.input_tokens) / 1e6 * prices.usd_per_million_input +
         static_cast<double>(usage.output_tokens) / 1e6 * prices.usd_per_million_output;
}

// ---------------------------------------------------------------------------
// Prompts.

enum class PromptPhase { kInitial, kRefinement, kBranch };

struct PromptContext {
  std::string program;
  std::optional<FunctionRef> target;
  std::string entry = "main";
  std::string definition;
  std::vector<std::string> rendered_paths;
  std::vector<std::string> tools;
  std::string directory_tree;
  // Refinement.
  std::string prior_command;
  std::vector<std::string> covered_functions;
  std::string path_feedback;
  // Branch refinement.
  std::vector<std::string> uncovered_branches;

  std::size_t path_token_budget = 2000;
  std::string overflow_file = "path_candidates.txt";
};

struct ComposedPrompt {
  std::string text;
  // Relative workspace path and content of the exported path list.
  std::optional<std::pair<std::string, std::string>> attachment;
};

inline constexpr std::string_view kResponseFormat =
    "Response Format: Reply with exactly one JSON object whose \"mode\" is one of:\n"
    "1. read_data: {\"mode\": \"read_data\", \"target_files\": [\"src/file.c\"], "
    "\"file_slice\": [start, end], \"reason\": \"...\"} (file_slice is optional)\n"
    "2. modify_data: {\"mode\": \"modify_data\", \"file\": \"run_test.sh\", "
    "\"line_range\": [start, end], \"replacement\": \"...\"} (omit line_range to write the "
    "whole file)\n"
    "3. execute_command: {\"mode\": \"execute_command\", \"script\": \"...\"} (runs as "
    "execute.sh in the workspace)\n"
    "Writing run_test.sh with modify_data submits it as the test; it is executed and its "
    "coverage measured.\n";

namespace detail {

inline std::string TargetLabel(const FunctionRef& f) { return render_function(f); }

inline std::string PathBlock(std::size_t index, const std::string& rendered) {
  return "- Path candidate " + std::to_string(index + 1) + "\n" + rendered + "\n\n";
}

}  // namespace detail

inline ComposedPrompt compose_prompt(PromptPhase phase, const PromptContext& ctx,
                                     const TokenEstimator& estimate = default_estimator()) {
  if (ctx.program.empty()) throw InputError("prompt context: missing program");
  if (!ctx.target) throw InputError("prompt context: missing target");
  if (ctx.directory_tree.empty()) throw InputError("prompt context: missing directory_tree");
  if (phase == PromptPhase::kRefinement && ctx.prior_command.empty()) {
    throw InputError("prompt context: missing prior_command");
  }
  if (phase == PromptPhase::kBranch && ctx.uncovered_branches.empty()) {
    throw InputError("nothing to refine");
  }
  const std::string target = detail::TargetLabel(*ctx.target);
  const std::string definition =
      ctx.definition.empty() ? "(definition not available)" : ctx.definition;
  ComposedPrompt out;
  std::string& p = out.text;

  if (phase == PromptPhase::kBranch) {
    p += "Task: The target function [" + target + "] is now reached by the " + ctx.program +
         " tests. Extend the tests in run_test.sh so that they also take the branches below.\n\n";
    p += "Uncovered Branches:\n";
    for (const auto& b : ctx.uncovered_branches) p += "- " + b + "\n";
    p += "\nTarget Function Definition:\n" + definition + "\n\n";
  } else {
    p += "Task: Produce shell commands running " + ctx.program +
         " whose execution reaches the target function [" + target + "].\n";
    if (!ctx.tools.empty()) {
      p += "Create any input files with these installed tools: ";
      for (std::size_t i = 0; i < ctx.tools.size(); ++i) {
        p += (i ? ", " : "") + ctx.tools[i];
      }
      p += ". Generate real, well-formed files; handcrafted headers or placeholder bytes are "
           "rejected early by the parser.\n";
    }
    p += "\nTarget Function Definition:\n" + definition + "\n\n";
    if (phase == PromptPhase::kInitial) {
      p += "Function Call Relationship from " + ctx.entry + "() to the target function:\n";
      std::string all;
      for (std::size_t i = 0; i < ctx.rendered_paths.size(); ++i) {
        all += detail::PathBlock(i, ctx.rendered_paths[i]);
      }
      if (ctx.rendered_paths.empty()) {
        p += "(no static call path from " + ctx.entry + "() was found)\n\n";
      } else if (estimate(all) <= ctx.path_token_budget) {
        p += all;
      } else {
        std::string inline_part;
        std::size_t shown = 0;
        for (; shown < ctx.rendered_paths.size(); ++shown) {
          auto block = detail::PathBlock(shown, ctx.rendered_paths[shown]);
          if (estimate(inline_part + block) > ctx.path_token_budget) break;
          inline_part += block;
        }
        p += inline_part;
        p += "All " + std::to_string(ctx.rendered_paths.size()) +
             " path candidates are listed in workspace/" + ctx.overflow_file +
             ". Use read_data to view them.\n\n";
        out.attachment = std::make_pair(ctx.overflow_file, all);
      }
    } else {
      p += "Previous Command:\n" + ctx.prior_command + "\n\n";
      p += "Execution Feedback: the target function was not reached.\n";
      p += "Covered functions:";
      if (ctx.covered_functions.empty()) {
        p += " (none)\n";
      } else {
        p += "\n";
        for (const auto& f : ctx.covered_functions) p += "- " + f + "\n";
      }
      if (!ctx.path_feedback.empty()) p += "\nCovered path feedback:\n" + ctx.path_feedback + "\n";
      p += "\n";
    }
  }
  p += kResponseFormat;
  p += "\nDirectory Structure:\n" + ctx.directory_tree;
  if (p.back() != '\n') p += '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Clients.

struct ClientParams {
  double temperature = 0.0;
  int max_tokens = 4096;
};

struct LlmReply {
  std::string text;
  std::uint64_t input_tokens = 0;
  std::uint64_t output_tokens = 0;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual LlmReply send(const std::vector<ChatMessage>& messages, const ClientParams& params) = 0;
};

// Replays a recorded transcript: reply i is the i-th entry, regardless of the
// request.
class ScriptedClient : public LlmClient {
 public:
  explicit ScriptedClient(std::vector<LlmReply> replies) : replies_(std::move(replies)) {}

  // {"responses": [{"text": ..., "input_tokens": n, "output_tokens": m}, ...]}
  static ScriptedClient FromJson(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("responses") || !doc.at("responses").is_array()) {
      throw InputError("transcript: expected an object with a responses array");
    }
    std::vector<LlmReply> replies;
    std::size_t i = 0;
    for (const auto& r : doc.at("responses")) {
      try {
        LlmReply reply;
        reply.text = r.at("text").get<std::string>();
        reply.input_tokens = r.value("input_tokens", std::uint64_t{0});
        reply.output_tokens = r.value("output_tokens", std::uint64_t{0});
        replies.push_back(std::move(reply));
      } catch (const nlohmann::json::exception& e) {
        throw InputError("transcript response " + std::to_string(i) + ": " + e.what());
      }
      ++i;
    }
    return ScriptedClient(std::move(replies));
  }

  static ScriptedClient FromFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read transcript " + path);
    auto doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw InputError("transcript " + path + " is not valid JSON");
    return FromJson(doc);
  }

  LlmReply send(const std::vector<ChatMessage>& messages, const ClientParams&) override {
    requests_.push_back(messages);
    if (next_ >= replies_.size()) throw RuntimeFailure("transcript exhausted");
    return replies_[next_++];
  }

  std::size_t calls() const { return next_; }
  std::size_t remaining() const { return replies_.size() - next_; }
  const std::vector<std::vector<ChatMessage>>& requests() const { return requests_; }

 private:
  std::vector<LlmReply> replies_;
  std::size_t next_ = 0;
  std::vector<std::vector<ChatMessage>> requests_;
};

// Wire format of a live endpoint.
enum class ApiFlavor { kMessages, kChatCompletions };

struct HttpClientOptions {
  std::string endpoint;  // full URL, e.g. https://host/v1/messages
  std::string model;
  std::string api_key;
  ApiFlavor flavor = ApiFlavor::kMessages;
  int timeout_s = 300;
};

class HttpClient : public LlmClient {
 public:
  explicit HttpClient(HttpClientOptions opts) : opts_(std::move(opts)) {
    if (opts_.api_key.empty()) {
      if (const char* key = std::getenv("PILOT_LLM_API_KEY")) opts_.api_key = key;
    }
    if (opts_.api_key.empty()) throw InputError("PILOT_LLM_API_KEY is not set");
    if (opts_.model.empty()) throw InputError("llm_model is not set");
    auto scheme = opts_.endpoint.find("://");
    if (scheme == std::string::npos) throw InputError("llm_endpoint must be a URL");
    auto slash = opts_.endpoint.find('/', scheme + 3);
    base_ = opts_.endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : opts_.endpoint.substr(slash);
  }

  LlmReply send(const std::vector<ChatMessage>& messages, const ClientParams& params) override {
    nlohmann::json body{{"model", opts_.model},
                        {"max_tokens", params.max_tokens},
                        {"temperature", params.temperature}};
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) {
      if (m.role == Role::kSystem && opts_.flavor == ApiFlavor::kMessages) {
        body["system"] = m.content;
        continue;
      }
      msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    }
    body["messages"] = msgs;

    httplib::Headers headers;
    if (opts_.flavor == ApiFlavor::kMessages) {
      headers.emplace("x-api-key", opts_.api_key);
      headers.emplace("anthropic-version", "2023-06-01");
    } else {
      headers.emplace("Authorization", "Bearer " + opts_.api_key);
    }
    httplib::Client cli(base_);
    cli.set_read_timeout(opts_.timeout_s, 0);
    cli.set_connection_timeout(30, 0);
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw RuntimeFailure("LLM request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) {
      throw RuntimeFailure("LLM endpoint returned HTTP " + std::to_string(res->status) + ": " +
                           res->body.substr(0, 500));
    }
    auto doc = nlohmann::json::parse(res->body, nullptr, false);
    if (doc.is_discarded()) throw RuntimeFailure("LLM endpoint returned invalid JSON");
    LlmReply reply;
    try {
      if (opts_.flavor == ApiFlavor::kMessages) {
        for (const auto& block : doc.at("content")) {
          if (block.value("type", "") == "text") reply.text += block.at("text").get<std::string>();
        }
        reply.input_tokens = doc.at("usage").at("input_tokens").get<std::uint64_t>();
        reply.output_tokens = doc.at("usage").at("output_tokens").get<std::uint64_t>();
      } else {
        reply.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
        reply.input_tokens = doc.at("usage").at("prompt_tokens").get<std::uint64_t>();
        reply.output_tokens = doc.at("usage").at("completion_tokens").get<std::uint64_t>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw RuntimeFailure(std::string("unexpected LLM response shape: ") + e.what());
    }
    return reply;
  }

 private:
  HttpClientOptions opts_;
  std::string base_;
  std::string path_;
};

// ---------------------------------------------------------------------------
// Conversation with usage ledger.

struct UsageRecord {
  std::string label;  // free-form tag set by the caller, e.g. the target name
  std::uint64_t input_tokens = 0;
  std::uint64_t output_tokens = 0;
};

struct ConversationOptions {
  ClientParams params;
  std::size_t context_token_budget = 150000;
  std::size_t keep_exchanges = 10;
};

class Conversation {
 public:
  Conversation(LlmClient& client, std::string system_prompt, ConversationOptions opts = {},
               TokenEstimator estimate = default_estimator())
      : client_(&client), opts_(opts), estimate_(std::move(estimate)) {
    if (system_prompt.empty()) throw InputError("system prompt must be nonempty");
    history_.push_back({Role::kSystem, std::move(system_prompt)});
  }

  // Sends a user turn and records the reply.
  std::string ask(std::string content) {
    if (content.empty()) throw InputError("chat message must be nonempty");
    history_.push_back({Role::kUser, std::move(content)});
    auto reply = client_->send(window(), opts_.params);
    std::string text = reply.text.empty() ? std::string("(empty response)") : reply.text;
    history_.push_back({Role::kAssistant, text});
    usage_.input_tokens += reply.input_tokens;
    usage_.output_tokens += reply.output_tokens;
    usage_.chat_count += 1;
    ledger_.push_back({label_, reply.input_tokens, reply.output_tokens});
    return text;
  }

  // Messages actually sent: the system message plus the most recent
  // exchanges. Oldest exchanges are dropped while over budget, never below
  // keep_exchanges completed exchanges.
  std::vector<ChatMessage> window() const {
    std::size_t first = 1;
    auto total = [&](std::size_t from) {
      std::size_t t = estimate_(history_[0].content);
      for (std::size_t i = from; i < history_.size(); ++i) t += estimate_(history_[i].content);
      return t;
    };
    // Completed exchanges occupy pairs after the system message; a pending
    // user turn, if any, is last.
    std::size_t exchanges = (history_.size() - 1) / 2;
    while (exchanges > opts_.keep_exchanges && total(first) > opts_.context_token_budget) {
      first += 2;
      --exchanges;
    }
    std::vector<ChatMessage> out{history_[0]};
    out.insert(out.end(), history_.begin() + static_cast<std::ptrdiff_t>(first), history_.end());
    return out;
  }

  void set_label(std::string label) { label_ = std::move(label); }
  const std::vector<ChatMessage>& history() const { return history_; }
  const TokenUsage& usage() const { return usage_; }
  const std::vector<UsageRecord>& ledger() const { return ledger_; }

 private:
  LlmClient* client_;
  ConversationOptions opts_;
  TokenEstimator estimate_;
  std::vector<ChatMessage> history_;
  TokenUsage usage_;
  std::vector<UsageRecord> ledger_;
  std::string label_;
};

}  // namespace pilot
