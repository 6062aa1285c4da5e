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

// The campaign loop.
//
//   U <- all functions
//   while U is nonempty and fewer than n_target targets were processed:
//     score the subgraph induced by U, take the argmax f
//     up to n_trial + 1 attempts: prompt, run the submitted test, collect
//       coverage; stop once f is covered
//     if f was covered, refine for uncovered branches (bounded cycles)
//     remove f and everything covered so far from U
//
// An attempt is a sequence of model turns. Reads, edits and commands are
// serviced by the workspace until the model writes run_test.sh, which is
// snapshotted as run_test<k>.sh and executed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pilot/callgraph.hpp"
#include "pilot/centrality.hpp"
#include "pilot/coverage.hpp"
#include "pilot/error.hpp"
#include "pilot/features.hpp"
#include "pilot/llm.hpp"
#include "pilot/paths.hpp"
#include "pilot/sandbox.hpp"
#include "pilot/strategy.hpp"

namespace pilot {

struct CampaignConfig {
  int n_trial = 2;
  int n_target = 10;
  std::size_t k_paths = kDefaultMaxPaths;
  double confidence_floor = kDefaultConfidenceFloor;
  int branch_refine_max = 2;
  int script_timeout_s = kDefaultScriptTimeout;
  std::optional<Strategy> strategy_override;
  std::uint64_t rng_seed = 0;
  int action_cap = 25;
  int malformed_cap = 3;
  std::size_t path_token_budget = 2000;
  std::size_t read_token_budget = 8000;
  std::vector<ToolSpec> tools;
  int install_retries = kDefaultInstallRetries;
  bool allow_privileged_install = false;
  CentralityOptions centrality;
  ConversationOptions conversation;

  void validate() const {
    if (n_trial < 0) throw InputError("n_trial must be nonnegative");
    if (n_target < 1) throw InputError("n_target must be positive");
    if (k_paths < 1) throw InputError("k_paths must be positive");
    if (confidence_floor < 0 || confidence_floor >= 1) throw InputError("confidence_floor must lie in [0, 1)");
    if (branch_refine_max < 1) throw InputError("branch_refine_max must be positive");
    if (script_timeout_s < 1) throw InputError("script_timeout_s must be positive");
    if (action_cap < 1) throw InputError("action_cap must be positive");
    if (malformed_cap < 1) throw InputError("malformed_cap must be positive");
    if (install_retries < 1) throw InputError("install_retries must be positive");
  }
};

enum class Outcome { kReached, kExhausted, kUnreachable };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kReached: return "reached";
    case Outcome::kExhausted: return "exhausted";
    case Outcome::kUnreachable: return "unreachable";
  }
  return "?";
}

inline const char* phase_name(PromptPhase p) {
  switch (p) {
    case PromptPhase::kInitial: return "initial";
    case PromptPhase::kRefinement: return "refinement";
    case PromptPhase::kBranch: return "branch";
  }
  return "?";
}

struct AttemptRecord {
  PromptPhase phase = PromptPhase::kInitial;
  std::optional<std::string> script;  // relative path of the executed snapshot
  std::optional<ExecutionResult> execution;
  CoverageReport coverage;
  bool reached = false;
  std::size_t turns = 0;
  std::string failure;  // empty when a script ran
  std::size_t cumulative_functions = 0;
  std::size_t cumulative_branches = 0;
};

struct TargetState {
  FunctionRef function;
  int trial = 0;
  bool covered = false;
  std::size_t path_count = 0;
  std::vector<AttemptRecord> attempts;
  std::vector<AttemptRecord> branch_cycles;
  Outcome outcome = Outcome::kExhausted;
};

struct CampaignResult {
  Strategy strategy = Strategy::kRandom;
  std::optional<StrategyRecommendation> recommendation;
  std::vector<ToolReport> tools;
  std::vector<TargetState> processed;
  CoverageReport cumulative;
  std::vector<std::string> scripts;
  TokenUsage usage;
  std::vector<UsageRecord> calls;
  bool aborted = false;
  std::string abort_reason;
};

struct CampaignHooks {
  // Called before each selection with the candidate set and the choice.
  std::function<void(const std::set<std::string>&, const std::string&)> on_select;
};

// Highest score wins; ties go to the lexicographically smallest name.
inline std::string select_target(const std::set<std::string>& candidates, const CentralityVector& scores) {
  if (candidates.empty()) throw InputError("no candidate functions");
  const std::string* best = nullptr;
  double best_score = 0;
  for (const auto& name : candidates) {
    auto it = scores.scores.find(name);
    if (it == scores.scores.end()) throw InputError("no score for " + name);
    if (!best || it->second > best_score) {
      best = &name;
      best_score = it->second;
    }
  }
  return *best;
}

// Source text of a function: from its definition line through the brace
// that closes its body, at most max_lines lines.
inline std::string definition_snippet(const Workspace& ws, const FunctionRef& f, std::size_t max_lines = 80) {
  auto p = ws.resolve("src/" + f.file);
  if (!p || !fs::is_regular_file(*p)) return "";
  auto lines = detail::SplitLines(detail::ReadFile(*p));
  if (f.line < 1 || static_cast<std::size_t>(f.line) > lines.size()) return "";
  std::string out;
  int depth = 0;
  bool opened = false;
  for (std::size_t i = static_cast<std::size_t>(f.line) - 1, n = 0; i < lines.size() && n < max_lines; ++i, ++n) {
    out += lines[i] + "\n";
    for (char c : lines[i]) {
      if (c == '{') {
        ++depth;
        opened = true;
      } else if (c == '}') {
        --depth;
      }
    }
    if (opened && depth <= 0) return out;
  }
  return out + "...\n";
}

class Campaign {
 public:
  Campaign(const CallGraph& g, CampaignConfig config, std::vector<DecisionRule> rules, LlmClient& client,
           const Workspace& ws, CoverageCollector& collector, CampaignHooks hooks = {})
      : g_(g),
        config_(std::move(config)),
        rules_(std::move(rules)),
        ws_(ws),
        collector_(collector),
        hooks_(std::move(hooks)),
        conv_(client, SystemPrompt(ws.program()), config_.conversation) {
    config_.validate();
  }

  CampaignResult run() {
    result_ = CampaignResult{};
    result_.tools = ws_.provision_tools(config_.tools, config_.install_retries, config_.allow_privileged_install);
    for (const auto& t : result_.tools) {
      if (t.verified) tool_names_.push_back(t.name);
    }
    if (config_.strategy_override) {
      result_.strategy = *config_.strategy_override;
    } else {
      result_.recommendation = recommend(structural_features(g_), rules_, config_.confidence_floor);
      result_.strategy = result_.recommendation->strategy;
    }

    std::set<std::string> unvisited;
    for (const auto& f : g_.functions()) unvisited.insert(f.name);
    int n_processed = 0;
    try {
      while (!unvisited.empty() && n_processed < config_.n_target) {
        CallGraphView view(g_);
        for (const auto& f : g_.functions()) {
          if (!unvisited.count(f.name)) view.hide(f.name);
        }
        auto scores = centrality_scores(view.digraph(), result_.strategy,
                                        config_.rng_seed + static_cast<std::uint64_t>(n_processed),
                                        config_.centrality);
        auto chosen = select_target(unvisited, scores);
        if (hooks_.on_select) hooks_.on_select(unvisited, chosen);
        result_.processed.push_back(TargetState{g_.function(g_.require(chosen))});
        process(result_.processed.back());
        unvisited.erase(chosen);
        ++n_processed;
        for (const auto& f : g_.functions()) {
          if (covers_function(result_.cumulative, f)) unvisited.erase(f.name);
        }
      }
    } catch (const RuntimeFailure& e) {
      result_.aborted = true;
      result_.abort_reason = e.what();
    }
    result_.usage = conv_.usage();
    result_.calls = conv_.ledger();
    return result_;
  }

  const Conversation& conversation() const { return conv_; }

 private:
  static std::string SystemPrompt(const std::string& program) {
    return "You write shell tests for the command-line program " + program +
           " inside a sandboxed workspace. Every reply must contain exactly one JSON action "
           "as described under Response Format. The test is submitted by writing run_test.sh.";
  }

  PromptContext BaseContext(const TargetState& st, const std::vector<CallPath>& paths) const {
    PromptContext ctx;
    ctx.program = ws_.program();
    ctx.target = st.function;
    ctx.entry = g_.entry_function().name;
    ctx.definition = definition_snippet(ws_, st.function);
    for (const auto& p : paths) ctx.rendered_paths.push_back(render_path(p));
    ctx.tools = tool_names_;
    ctx.path_token_budget = config_.path_token_budget;
    return ctx;
  }

  void process(TargetState& st) {
    conv_.set_label(st.function.name);
    auto paths = enumerate_paths(g_, st.function.name, config_.k_paths);
    st.path_count = paths.size();
    std::string last_script;
    std::optional<CoverageReport> last_report;
    while (st.trial <= config_.n_trial && !st.covered) {
      auto ctx = BaseContext(st, paths);
      ctx.directory_tree = ws_.directory_tree();
      PromptPhase phase = st.trial == 0 ? PromptPhase::kInitial : PromptPhase::kRefinement;
      if (phase == PromptPhase::kRefinement) {
        const auto& prev = st.attempts.back();
        ctx.prior_command = last_script.empty() ? "(no test script was produced: " + prev.failure + ")" : last_script;
        if (last_report) {
          std::size_t listed = 0;
          for (const auto& f : last_report->covered_functions()) {
            if (++listed > 200) {
              ctx.covered_functions.push_back("... (" + std::to_string(last_report->covered_functions().size() - 200) + " more)");
              break;
            }
            ctx.covered_functions.push_back(f);
          }
          if (!paths.empty()) ctx.path_feedback = covered_path_feedback(*last_report, paths);
        }
      }
      auto composed = compose_prompt(phase, ctx);
      if (composed.attachment) {
        ws_.apply_modify(ModifyData{composed.attachment->first, std::nullopt, composed.attachment->second});
      }
      auto rec = attempt(phase, composed.text);
      if (rec.script) {
        last_script = detail::ReadFile(ws_.root() / *rec.script);
        last_report = rec.coverage;
      }
      if (covers_function(rec.coverage, st.function)) {
        rec.reached = true;
        st.covered = true;
      } else {
        ++st.trial;
      }
      st.attempts.push_back(std::move(rec));
    }
    if (st.covered) {
      st.outcome = Outcome::kReached;
      branch_refinement(st);
    } else {
      st.outcome = paths.empty() ? Outcome::kUnreachable : Outcome::kExhausted;
    }
  }

  void branch_refinement(TargetState& st) {
    for (int cycle = 0; cycle < config_.branch_refine_max; ++cycle) {
      auto table = build_branch_table(g_, branch_sites(result_.cumulative));
      auto open = uncovered_branches(result_.cumulative, st.function, table);
      if (open.empty()) return;
      auto ctx = BaseContext(st, {});
      ctx.directory_tree = ws_.directory_tree();
      for (const auto& b : open) ctx.uncovered_branches.push_back(render_branch(b));
      auto before = result_.cumulative;
      auto rec = attempt(PromptPhase::kBranch, compose_prompt(PromptPhase::kBranch, ctx).text);
      bool found = !diff(rec.coverage, before).new_branches.empty();
      st.branch_cycles.push_back(std::move(rec));
      if (found) return;
    }
  }

  // One generation attempt: model turns until run_test.sh is written, then
  // execute it and collect coverage.
  AttemptRecord attempt(PromptPhase phase, std::string message) {
    AttemptRecord rec;
    rec.phase = phase;
    int malformed = 0;
    const auto run_test = ws_.root() / "run_test.sh";
    for (int turn = 0; turn < config_.action_cap; ++turn) {
      auto reply = conv_.ask(std::move(message));
      ++rec.turns;
      LlmAction action;
      try {
        action = parse_action(reply);
      } catch (const ProtocolError& e) {
        if (++malformed >= config_.malformed_cap) {
          rec.failure = "malformed responses";
          finish(rec);
          return rec;
        }
        message = std::string("The reply could not be used: ") + e.what() +
                  ". Answer with exactly one JSON object in one of the three modes.";
        continue;
      }
      malformed = 0;
      if (auto* m = std::get_if<ModifyData>(&action)) {
        auto target = ws_.resolve(m->file);
        if (target && *target == run_test) {
          try {
            ws_.apply_modify(*m);
          } catch (const InputError& e) {
            message = std::string(e.what()) + "\n";
            continue;
          }
          execute(rec);
          finish(rec);
          return rec;
        }
      }
      message = ws_.service_action(action, config_.read_token_budget, config_.script_timeout_s);
      if (message.empty()) message = "(no output)";
    }
    rec.failure = "action cap reached";
    finish(rec);
    return rec;
  }

  void execute(AttemptRecord& rec) {
    const std::string name = "run_test" + std::to_string(result_.scripts.size() + 1) + ".sh";
    fs::copy_file(ws_.root() / "run_test.sh", ws_.root() / name, fs::copy_options::overwrite_existing);
    result_.scripts.push_back(name);
    rec.script = name;
    collector_.reset(ws_);
    rec.execution = ws_.run_script(ws_.root() / name, config_.script_timeout_s);
    rec.coverage = collector_.collect(ws_);
    result_.cumulative.merge(rec.coverage);
  }

  void finish(AttemptRecord& rec) const {
    rec.cumulative_functions = result_.cumulative.covered_functions().size();
    rec.cumulative_branches = result_.cumulative.taken_branches().size();
  }

  const CallGraph& g_;
  CampaignConfig config_;
  std::vector<DecisionRule> rules_;
  const Workspace& ws_;
  CoverageCollector& collector_;
  CampaignHooks hooks_;
  Conversation conv_;
  std::vector<std::string> tool_names_;
  CampaignResult result_;
};

inline CampaignResult run_campaign(const CallGraph& g, const CampaignConfig& config,
                                   const std::vector<DecisionRule>& rules, LlmClient& client,
                                   const Workspace& ws, CoverageCollector& collector,
                                   CampaignHooks hooks = {}) {
  Campaign c(g, config, rules, client, ws, collector, std::move(hooks));
  return c.run();
}

// ---------------------------------------------------------------------------
// Run ledger.

inline nlohmann::json attempt_to_json(const AttemptRecord& a) {
  nlohmann::json j{{"phase", phase_name(a.phase)},
                   {"turns", a.turns},
                   {"reached", a.reached},
                   {"covered_functions", a.coverage.covered_functions().size()},
                   {"taken_branches", a.coverage.taken_branches().size()},
                   {"cumulative_functions", a.cumulative_functions},
                   {"cumulative_branches", a.cumulative_branches}};
  j["script"] = a.script ? nlohmann::json(*a.script) : nlohmann::json(nullptr);
  if (a.execution) {
    j["exit_code"] = a.execution->exit_code;
    j["timed_out"] = a.execution->timed_out;
  }
  if (!a.failure.empty()) j["failure"] = a.failure;
  return j;
}

inline nlohmann::json campaign_ledger(const CampaignResult& r, const std::string& program,
                                      const std::string& now, const PriceTable& prices) {
  nlohmann::json j;
  j["program"] = program;
  j["generated_at"] = now;
  j["strategy"] = std::string(strategy_name(r.strategy));
  if (r.recommendation) {
    nlohmann::json conf;
    for (const auto& [s, c] : r.recommendation->per_strategy_confidence) conf[std::string(strategy_name(s))] = c;
    j["recommendation"] = {{"strategy", std::string(strategy_name(r.recommendation->strategy))},
                           {"confidence", r.recommendation->confidence},
                           {"matched", r.recommendation->matched},
                           {"per_strategy", conf}};
  }
  j["tools"] = nlohmann::json::array();
  for (const auto& t : r.tools) {
    j["tools"].push_back({{"name", t.name}, {"verified", t.verified}, {"attempts", t.attempts}});
  }
  j["targets"] = nlohmann::json::array();
  for (const auto& t : r.processed) {
    nlohmann::json tj{{"function", render_function(t.function)},
                      {"outcome", outcome_name(t.outcome)},
                      {"path_candidates", t.path_count}};
    tj["attempts"] = nlohmann::json::array();
    for (const auto& a : t.attempts) tj["attempts"].push_back(attempt_to_json(a));
    tj["branch_cycles"] = nlohmann::json::array();
    for (const auto& a : t.branch_cycles) tj["branch_cycles"].push_back(attempt_to_json(a));
    j["targets"].push_back(tj);
  }
  j["scripts"] = r.scripts;
  j["coverage"] = {{"covered_functions", r.cumulative.covered_functions().size()},
                   {"taken_branches", r.cumulative.taken_branches().size()}};
  j["usage"] = {{"input_tokens", r.usage.input_tokens},
                {"output_tokens", r.usage.output_tokens},
                {"chat_count", r.usage.chat_count}};
  j["calls"] = nlohmann::json::array();
  for (const auto& c : r.calls) {
    j["calls"].push_back({{"label", c.label}, {"input_tokens", c.input_tokens}, {"output_tokens", c.output_tokens}});
  }
  j["prices"] = {{"usd_per_million_input", prices.usd_per_million_input},
                 {"usd_per_million_output", prices.usd_per_million_output}};
  j["cost_usd"] = cost(r.usage, prices);
  j["aborted"] = r.aborted;
  if (r.aborted) j["abort_reason"] = r.abort_reason;
  return j;
}

// Usage totals from a ledger; verifies they equal the per-call sums.
inline TokenUsage ledger_usage(const nlohmann::json& ledger) {
  try {
    TokenUsage total;
    total.input_tokens = ledger.at("usage").at("input_tokens").get<std::uint64_t>();
    total.output_tokens = ledger.at("usage").at("output_tokens").get<std::uint64_t>();
    total.chat_count = ledger.at("usage").at("chat_count").get<std::uint64_t>();
    if (ledger.contains("calls")) {
      TokenUsage sum;
      for (const auto& c : ledger.at("calls")) {
        sum.input_tokens += c.at("input_tokens").get<std::uint64_t>();
        sum.output_tokens += c.at("output_tokens").get<std::uint64_t>();
        sum.chat_count += 1;
      }
      if (!(sum == total)) throw InputError("ledger usage totals disagree with the per-call records");
    }
    return total;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed ledger: ") + e.what());
  }
}

// One row per attempt: cumulative coverage after it.
inline std::string coverage_csv(const CampaignResult& r) {
  std::string out = "attempt,target,phase,cumulative_functions,cumulative_branches\n";
  std::size_t k = 0;
  for (const auto& t : r.processed) {
    auto row = [&](const AttemptRecord& a) {
      out += std::to_string(++k) + "," + t.function.name + "," + phase_name(a.phase) + "," +
             std::to_string(a.cumulative_functions) + "," + std::to_string(a.cumulative_branches) + "\n";
    };
    for (const auto& a : t.attempts) row(a);
    for (const auto& a : t.branch_cycles) row(a);
  }
  return out;
}

}  // namespace pilot
