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

// Coverage reports in a line-oriented canonical format:
//
//   FN <file>:<line> <function> <count>
//   BR <file>:<line> <branch-id> <count>
//
// Blank lines and '#' comments are ignored; repeated entries are summed.

#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "pilot/callgraph.hpp"
#include "pilot/error.hpp"
#include "pilot/paths.hpp"
#include "pilot/sandbox.hpp"

namespace pilot {

struct BranchSite {
  std::string file;
  int line = 0;
  std::string id;

  friend auto operator<=>(const BranchSite& a, const BranchSite& b) {
    return std::tie(a.file, a.line, a.id) <=> std::tie(b.file, b.line, b.id);
  }
  friend bool operator==(const BranchSite&, const BranchSite&) = default;
};

inline std::string render_branch(const BranchSite& b) {
  return b.file + ":" + std::to_string(b.line) + " branch " + b.id;
}

struct FunctionHit {
  std::string file;
  int line = 0;
  std::uint64_t count = 0;

  friend bool operator==(const FunctionHit&, const FunctionHit&) = default;
};

struct CoverageReport {
  std::map<std::string, FunctionHit> functions;
  std::map<BranchSite, std::uint64_t> branches;

  bool covers(std::string_view fn) const {
    auto it = functions.find(std::string(fn));
    return it != functions.end() && it->second.count > 0;
  }

  std::set<std::string> covered_functions() const {
    std::set<std::string> out;
    for (const auto& [name, hit] : functions) {
      if (hit.count > 0) out.insert(name);
    }
    return out;
  }

  std::set<BranchSite> taken_branches() const {
    std::set<BranchSite> out;
    for (const auto& [site, n] : branches) {
      if (n > 0) out.insert(site);
    }
    return out;
  }

  void merge(const CoverageReport& other) {
    for (const auto& [name, hit] : other.functions) {
      auto [it, fresh] = functions.try_emplace(name, hit);
      if (!fresh) it->second.count += hit.count;
    }
    for (const auto& [site, n] : other.branches) branches[site] += n;
  }

  friend bool operator==(const CoverageReport&, const CoverageReport&) = default;
};

namespace detail {

inline std::pair<std::string, int> SplitLocation(std::string_view tok) {
  auto colon = tok.rfind(':');
  if (colon == std::string_view::npos || colon == 0) throw InputError("expected <file>:<line>");
  int line = 0;
  auto digits = tok.substr(colon + 1);
  auto res = std::from_chars(digits.data(), digits.data() + digits.size(), line);
  if (res.ec != std::errc() || res.ptr != digits.data() + digits.size() || line < 1) {
    throw InputError("bad line number in " + std::string(tok));
  }
  return {std::string(tok.substr(0, colon)), line};
}

inline std::uint64_t ParseCount(std::string_view tok) {
  std::uint64_t n = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), n);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw InputError("bad count " + std::string(tok));
  }
  return n;
}

}  // namespace detail

inline CoverageReport parse_report(std::string_view text) {
  CoverageReport report;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty() || tok[0][0] == '#') continue;
    try {
      if (tok.size() != 4) throw InputError("expected 4 fields, got " + std::to_string(tok.size()));
      auto [file, ln] = detail::SplitLocation(tok[1]);
      auto count = detail::ParseCount(tok[3]);
      if (tok[0] == "FN") {
        auto [it, fresh] = report.functions.try_emplace(tok[2], FunctionHit{file, ln, count});
        if (!fresh) it->second.count += count;
      } else if (tok[0] == "BR") {
        report.branches[BranchSite{file, ln, tok[2]}] += count;
      } else {
        throw InputError("unknown record " + tok[0]);
      }
    } catch (const InputError& e) {
      throw InputError("coverage line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return report;
}

inline std::string serialize_report(const CoverageReport& r) {
  std::string out;
  for (const auto& [name, hit] : r.functions) {
    out += "FN " + hit.file + ":" + std::to_string(hit.line) + " " + name + " " +
           std::to_string(hit.count) + "\n";
  }
  for (const auto& [site, n] : r.branches) {
    out += "BR " + site.file + ":" + std::to_string(site.line) + " " + site.id + " " +
           std::to_string(n) + "\n";
  }
  return out;
}

struct CoverageDiff {
  std::set<std::string> new_functions;
  std::set<BranchSite> new_branches;

  bool empty() const { return new_functions.empty() && new_branches.empty(); }
};

inline CoverageDiff diff(const CoverageReport& current, const CoverageReport& baseline) {
  CoverageDiff d;
  for (const auto& f : current.covered_functions()) {
    if (!baseline.covers(f)) d.new_functions.insert(f);
  }
  auto base = baseline.taken_branches();
  for (const auto& b : current.taken_branches()) {
    if (!base.count(b)) d.new_branches.insert(b);
  }
  return d;
}

// Graph names disambiguated as name@file match the report's bare name when
// the file agrees.
inline bool covers_function(const CoverageReport& report, const FunctionRef& f) {
  if (report.covers(f.name)) return true;
  auto at = f.name.rfind('@');
  if (at == std::string::npos) return false;
  auto it = report.functions.find(f.name.substr(0, at));
  return it != report.functions.end() && it->second.count > 0 && it->second.file == f.file;
}

// Number of leading functions of the path that were executed.
inline std::size_t covered_prefix(const CoverageReport& report, const CallPath& path) {
  std::size_t k = 0;
  while (k < path.size() && covers_function(report, path[k])) ++k;
  return k;
}

inline constexpr std::string_view kCheck = "\xE2\x9C\x93";
inline constexpr std::string_view kCross = "\xE2\x9C\x97";

inline std::string covered_path_feedback(const CoverageReport& report,
                                         const std::vector<CallPath>& paths) {
  if (paths.empty()) throw InputError("no paths to annotate");
  std::string out;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    out += "- Path candidate " + std::to_string(i + 1) + "\n";
    for (const auto& f : paths[i]) {
      out += render_function(f) + " " + std::string(covers_function(report, f) ? kCheck : kCross) + "\n";
    }
    out += "  deepest covered prefix: " + std::to_string(covered_prefix(report, paths[i])) + " of " +
           std::to_string(paths[i].size()) + "\n";
  }
  return out;
}

using BranchTable = std::map<std::string, std::vector<BranchSite>>;

// Assigns each branch site to the function whose definition precedes it in
// the same file. Every function of the graph gets an entry, possibly empty.
inline BranchTable build_branch_table(const CallGraph& g, const std::set<BranchSite>& sites) {
  BranchTable table;
  std::map<std::string, std::map<int, std::string>> by_file;
  for (const auto& f : g.functions()) {
    table[f.name];
    by_file[f.file][f.line] = f.name;
  }
  for (const auto& s : sites) {
    auto file = by_file.find(s.file);
    if (file == by_file.end()) continue;
    auto it = file->second.upper_bound(s.line);
    if (it == file->second.begin()) continue;
    table[std::prev(it)->second].push_back(s);
  }
  for (auto& [name, v] : table) std::sort(v.begin(), v.end());
  return table;
}

inline std::set<BranchSite> branch_sites(const CoverageReport& r) {
  std::set<BranchSite> out;
  for (const auto& [site, n] : r.branches) out.insert(site);
  return out;
}

inline std::vector<BranchSite> uncovered_branches(const CoverageReport& report,
                                                  const FunctionRef& target,
                                                  const BranchTable& table) {
  auto it = table.find(target.name);
  if (it == table.end()) throw InputError("unknown target " + target.name);
  std::vector<BranchSite> out;
  for (const auto& s : it->second) {
    auto hit = report.branches.find(s);
    if (hit == report.branches.end() || hit->second == 0) out.push_back(s);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// gcov adapter. Accepts the output of `gcov --json-format --stdout`: one or
// more JSON documents, each with
//   {"files": [{"file": F, "functions": [{"name", "start_line",
//     "execution_count"}], "lines": [{"line_number", "branches": [{"count"}]}]}]}
// Branch ids are the index of the branch within its line.

inline CoverageReport convert_gcov_json(std::string_view text) {
  CoverageReport report;
  std::istringstream in{std::string(text)};
  int doc_index = 0;
  while (true) {
    in >> std::ws;
    if (in.eof() || in.peek() == std::char_traits<char>::eof()) break;
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw InputError("gcov document " + std::to_string(doc_index) + ": " + e.what());
    }
    try {
      for (const auto& file : doc.at("files")) {
        const std::string name = file.at("file").get<std::string>();
        for (const auto& fn : file.value("functions", nlohmann::json::array())) {
          CoverageReport one;
          one.functions[fn.at("name").get<std::string>()] =
              FunctionHit{name, fn.at("start_line").get<int>(), fn.at("execution_count").get<std::uint64_t>()};
          report.merge(one);
        }
        for (const auto& line : file.value("lines", nlohmann::json::array())) {
          int ln = line.at("line_number").get<int>();
          std::size_t idx = 0;
          for (const auto& br : line.value("branches", nlohmann::json::array())) {
            report.branches[BranchSite{name, ln, std::to_string(idx++)}] += br.at("count").get<std::uint64_t>();
          }
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw InputError("gcov document " + std::to_string(doc_index) + ": " + e.what());
    }
    ++doc_index;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Collection after a test run.

class CoverageCollector {
 public:
  virtual ~CoverageCollector() = default;
  // Clears counters before a run.
  virtual void reset(const Workspace&) {}
  virtual CoverageReport collect(const Workspace& ws) = 0;
};

// Reads (and removes) <root>/coverage.cov written by the instrumented run.
class FileCollector : public CoverageCollector {
 public:
  explicit FileCollector(std::string file = "coverage.cov") : file_(std::move(file)) {}

  void reset(const Workspace& ws) override {
    std::error_code ec;
    fs::remove(ws.root() / file_, ec);
  }

  CoverageReport collect(const Workspace& ws) override {
    auto p = ws.root() / file_;
    if (!fs::exists(p)) return {};
    auto report = parse_report(detail::ReadFile(p));
    fs::remove(p);
    return report;
  }

 private:
  std::string file_;
};

// Runs an adapter command in the workspace; its stdout is a canonical report.
class CommandCollector : public CoverageCollector {
 public:
  CommandCollector(std::string collect_command, std::string reset_command = "", int timeout_s = 120)
      : collect_(std::move(collect_command)), reset_(std::move(reset_command)), timeout_s_(timeout_s) {}

  void reset(const Workspace& ws) override {
    if (reset_.empty()) return;
    auto r = ws.run_text(reset_ + "\n", "coverage_reset.sh", timeout_s_);
    if (r.exit_code != 0) throw RuntimeFailure("coverage reset command failed: " + r.stderr_text);
  }

  CoverageReport collect(const Workspace& ws) override {
    // Redirected to a file: reports of real programs exceed the stream cap.
    auto out = ws.root() / ".pilot" / "coverage_out.cov";
    auto r = ws.run_text("{\n" + collect_ + "\n} > '" + out.string() + "'\n", "coverage_collect.sh",
                         timeout_s_);
    if (r.exit_code != 0) throw RuntimeFailure("coverage command failed: " + r.stderr_text);
    return parse_report(detail::ReadFile(out));
  }

 private:
  std::string collect_;
  std::string reset_;
  int timeout_s_;
};

}  // namespace pilot
