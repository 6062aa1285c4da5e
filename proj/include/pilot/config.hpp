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

// Tool configuration: flat `key = value` files, command-line flags named
// after the keys (`n_trial` is `--n-trial`), and defaults. A flag beats the
// file, the file beats the default.
//
// Tools to provision are listed in the file as `install.<name> = <command>`
// (an empty command only verifies that <name> is on PATH).

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pilot/error.hpp"
#include "pilot/llm.hpp"
#include "pilot/orchestrator.hpp"
#include "pilot/seeds.hpp"

namespace pilot {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"n_trial", "2", "extra attempts per target after the first"},
      {"n_target", "10", "number of targets to process"},
      {"k_paths", "100", "path candidates per target"},
      {"confidence_floor", "0.30", "below this confidence the strategy is RANDOM"},
      {"branch_refine_max", "2", "branch refinement cycles per covered target"},
      {"script_timeout_s", "30", "wall-clock limit for one test script"},
      {"strategy", "auto", "auto, CLOSE, BET, DEG, PAGE or RANDOM"},
      {"rng_seed", "0", "seed for RANDOM scoring"},
      {"action_cap", "25", "model turns per attempt"},
      {"malformed_cap", "3", "consecutive unparsable replies that fail an attempt"},
      {"path_token_budget", "2000", "tokens of path candidates kept inline"},
      {"read_token_budget", "8000", "tokens returned for one read"},
      {"install_retries", "3", "install attempts per tool"},
      {"allow_privileged_install", "false", "permit sudo in install commands"},
      {"temperature", "0", "sampling temperature"},
      {"max_tokens", "4096", "reply token limit"},
      {"context_token_budget", "150000", "conversation window in tokens"},
      {"price_in", "3.0", "USD per million input tokens"},
      {"price_out", "15.0", "USD per million output tokens"},
      {"program", "", "program name as invoked in tests"},
      {"entry", "main", "entry function"},
      {"extractor", "", "call graph extractor command; empty uses clang"},
      {"coverage_command", "", "prints a coverage report after a test run"},
      {"coverage_reset_command", "", "clears coverage counters before a run"},
      {"coverage_file", "coverage.cov", "report file read when no coverage command is set"},
      {"rules", "", "decision rules file; empty uses the built-in table"},
      {"transcript", "", "mock transcript (JSON) replayed instead of a live model"},
      {"endpoint", "", "chat endpoint URL"},
      {"model", "", "model name sent to the endpoint"},
      {"api_flavor", "messages", "messages or chat_completions"},
      {"workdir", "", "parent directory for workspaces; empty uses <out>/work"},
      {"seed_format", "single_line", "single_line or argv_dictionary"},
  };
  return keys;
}

using ConfigMap = std::map<std::string, std::string>;

inline bool is_config_key(std::string_view key) {
  if (key.rfind("install.", 0) == 0) return key.size() > 8;
  for (const auto& k : config_keys()) {
    if (k.name == key) return true;
  }
  return false;
}

inline std::string kebab_case(std::string s) {
  for (auto& c : s) {
    if (c == '_') c = '-';
  }
  return s;
}

namespace detail {

inline std::string Trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

inline ConfigMap parse_config_text(std::string_view text) {
  ConfigMap out;
  std::size_t line_no = 0;
  for (const auto& raw : detail::SplitLines(std::string(text))) {
    ++line_no;
    auto line = detail::Trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = detail::Trim(std::string_view(line).substr(0, eq));
    if (key.rfind("install.", 0) != 0) {
      for (auto& c : key) {
        if (c == '-') c = '_';
      }
    }
    if (!is_config_key(key)) throw InputError("config line " + std::to_string(line_no) + ": unknown key " + key);
    auto value = detail::Trim(std::string_view(line).substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    out[key] = value;
  }
  return out;
}

inline ConfigMap load_config_file(const fs::path& p) {
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) throw InputError("config file not found: " + p.string());
  return parse_config_text(detail::ReadFile(p));
}

// Later layers win.
inline ConfigMap merge_config(const std::vector<ConfigMap>& layers) {
  ConfigMap out;
  for (const auto& k : config_keys()) out[k.name] = k.default_value;
  for (const auto& layer : layers) {
    for (const auto& [k, v] : layer) {
      if (!is_config_key(k)) throw InputError("unknown config key " + k);
      out[k] = v;
    }
  }
  return out;
}

struct ToolConfig {
  CampaignConfig campaign;
  PriceTable prices;
  std::string program;
  std::string entry = "main";
  std::string extractor;
  std::string coverage_command;
  std::string coverage_reset_command;
  std::string coverage_file = "coverage.cov";
  std::string rules;
  std::string transcript;
  std::string endpoint;
  std::string model;
  ApiFlavor api_flavor = ApiFlavor::kMessages;
  std::string workdir;
  SeedFormat seed_format = SeedFormat::kSingleLine;
};

namespace detail {

class Reader {
 public:
  explicit Reader(const ConfigMap& m) : m_(m) {}

  const std::string& text(const std::string& key) const {
    auto it = m_.find(key);
    if (it == m_.end()) throw InputError("config key " + key + ": missing");
    return it->second;
  }

  template <typename Int>
  Int integer(const std::string& key, Int lo, Int hi) const {
    const auto& v = text(key);
    Int out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || out < lo || out > hi) {
      throw InputError("config key " + key + ": expected an integer in [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "], got '" + v + "'");
    }
    return out;
  }

  double real(const std::string& key, double lo, double hi, bool hi_open = false) const {
    const auto& v = text(key);
    std::size_t used = 0;
    double out = 0;
    try {
      out = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.size() || !std::isfinite(out) || out < lo || out > hi || (hi_open && out == hi)) {
      throw InputError("config key " + key + ": expected a number in [" + format_number(lo) + ", " +
                       format_number(hi) + (hi_open ? ")" : "]") + ", got '" + v + "'");
    }
    return out;
  }

  bool boolean(const std::string& key) const {
    const auto& v = text(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw InputError("config key " + key + ": expected true or false, got '" + v + "'");
  }

 private:
  const ConfigMap& m_;
};

}  // namespace detail

inline ToolConfig resolve_config(const ConfigMap& m) {
  detail::Reader r(m);
  ToolConfig c;
  constexpr int kMaxInt = 1 << 30;
  auto& k = c.campaign;
  k.n_trial = r.integer<int>("n_trial", 0, kMaxInt);
  k.n_target = r.integer<int>("n_target", 1, kMaxInt);
  k.k_paths = r.integer<std::size_t>("k_paths", 1, 100000);
  k.confidence_floor = r.real("confidence_floor", 0, 1, true);
  k.branch_refine_max = r.integer<int>("branch_refine_max", 1, kMaxInt);
  k.script_timeout_s = r.integer<int>("script_timeout_s", 1, 86400);
  const auto& strategy = r.text("strategy");
  if (strategy != "auto") {
    try {
      k.strategy_override = parse_strategy(strategy);
    } catch (const InputError&) {
      throw InputError("config key strategy: expected auto, CLOSE, BET, DEG, PAGE or RANDOM, got '" + strategy + "'");
    }
  }
  k.rng_seed = r.integer<std::uint64_t>("rng_seed", 0, UINT64_MAX);
  k.action_cap = r.integer<int>("action_cap", 1, kMaxInt);
  k.malformed_cap = r.integer<int>("malformed_cap", 1, kMaxInt);
  k.path_token_budget = r.integer<std::size_t>("path_token_budget", 1, SIZE_MAX);
  k.read_token_budget = r.integer<std::size_t>("read_token_budget", 1, SIZE_MAX);
  k.install_retries = r.integer<int>("install_retries", 1, 100);
  k.allow_privileged_install = r.boolean("allow_privileged_install");
  k.conversation.params.temperature = r.real("temperature", 0, 2);
  k.conversation.params.max_tokens = r.integer<int>("max_tokens", 1, kMaxInt);
  k.conversation.context_token_budget = r.integer<std::size_t>("context_token_budget", 1, SIZE_MAX);
  for (const auto& [key, value] : m) {
    if (key.rfind("install.", 0) == 0) k.tools.push_back(ToolSpec{key.substr(8), value});
  }
  c.prices.usd_per_million_input = r.real("price_in", 0, 1e6);
  c.prices.usd_per_million_output = r.real("price_out", 0, 1e6);
  c.program = r.text("program");
  c.entry = r.text("entry");
  if (c.entry.empty()) throw InputError("config key entry: must be nonempty");
  c.extractor = r.text("extractor");
  c.coverage_command = r.text("coverage_command");
  c.coverage_reset_command = r.text("coverage_reset_command");
  c.coverage_file = r.text("coverage_file");
  if (c.coverage_file.empty()) throw InputError("config key coverage_file: must be nonempty");
  c.rules = r.text("rules");
  c.transcript = r.text("transcript");
  c.endpoint = r.text("endpoint");
  c.model = r.text("model");
  const auto& flavor = r.text("api_flavor");
  if (flavor == "messages") {
    c.api_flavor = ApiFlavor::kMessages;
  } else if (flavor == "chat_completions") {
    c.api_flavor = ApiFlavor::kChatCompletions;
  } else {
    throw InputError("config key api_flavor: expected messages or chat_completions, got '" + flavor + "'");
  }
  c.workdir = r.text("workdir");
  try {
    c.seed_format = parse_seed_format(r.text("seed_format"));
  } catch (const InputError&) {
    throw InputError("config key seed_format: expected single_line or argv_dictionary, got '" +
                     r.text("seed_format") + "'");
  }
  c.campaign.validate();
  return c;
}

}  // namespace pilot
