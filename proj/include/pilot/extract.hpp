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

// Call graph extraction.
//
// The bundled extractor walks clang's JSON AST dump (-ast-dump=json) of
// each translation unit: every FunctionDecl with a body is a node, every
// CallExpr whose callee names a defined function is an edge. Calls through
// pointers are not resolved. Any other extractor that prints the canonical
// document works with run_extractor.

#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pilot/callgraph.hpp"
#include "pilot/error.hpp"
#include "pilot/sandbox.hpp"

namespace pilot {

struct AstFunction {
  std::string name;
  std::string file;
  int line = 0;
  std::vector<std::string> callees;  // raw names, in call order
};

namespace detail {

// clang writes a location's file and line only when they differ from the
// previously written location, so both are carried along in dump order.
class AstWalker {
 public:
  explicit AstWalker(std::function<std::optional<std::string>(const std::string&)> normalize)
      : normalize_(std::move(normalize)) {}

  std::vector<AstFunction> run(const nlohmann::json& tu) {
    Visit(tu, std::nullopt);
    return std::move(out_);
  }

 private:
  void Bare(const nlohmann::json& loc) {
    if (!loc.is_object()) return;
    if (loc.contains("spellingLoc")) {
      Bare(loc["spellingLoc"]);
      Bare(loc["expansionLoc"]);
      return;
    }
    if (auto f = loc.find("file"); f != loc.end() && f->is_string()) file_ = f->get<std::string>();
    if (auto l = loc.find("line"); l != loc.end() && l->is_number_integer()) line_ = l->get<int>();
  }

  void Locate(const nlohmann::json& node) {
    if (auto loc = node.find("loc"); loc != node.end()) Bare(*loc);
  }

  static bool HasBody(const nlohmann::json& fn) {
    if (!fn.contains("inner")) return false;
    for (const auto& c : fn["inner"]) {
      if (c.value("kind", "") == "CompoundStmt") return true;
    }
    return false;
  }

  static std::optional<std::string> DirectCallee(const nlohmann::json& callee) {
    const std::string kind = callee.value("kind", "");
    if (kind == "DeclRefExpr") {
      const auto& ref = callee.value("referencedDecl", nlohmann::json::object());
      if (ref.value("kind", "") == "FunctionDecl" && ref.contains("name")) return ref["name"].get<std::string>();
      return std::nullopt;
    }
    if (kind == "ImplicitCastExpr" || kind == "ParenExpr") {
      if (callee.contains("inner") && !callee["inner"].empty()) return DirectCallee(callee["inner"][0]);
    }
    return std::nullopt;
  }

  // `current` indexes the enclosing function definition in out_.
  void Visit(const nlohmann::json& node, std::optional<std::size_t> current) {
    if (!node.is_object()) return;
    Locate(node);
    const std::string decl_file = file_;
    const int decl_line = line_;
    if (auto r = node.find("range"); r != node.end() && r->is_object()) {
      if (r->contains("begin")) Bare((*r)["begin"]);
      if (r->contains("end")) Bare((*r)["end"]);
    }
    const std::string kind = node.value("kind", "");
    if (kind == "FunctionDecl" && !node.value("isImplicit", false) && HasBody(node) && node.contains("name")) {
      if (auto rel = normalize_(decl_file); rel && decl_line > 0) {
        out_.push_back(AstFunction{node["name"].get<std::string>(), *rel, decl_line, {}});
        current = out_.size() - 1;
      }
    } else if (kind == "CallExpr" && current && node.contains("inner") && !node["inner"].empty()) {
      if (auto name = DirectCallee(node["inner"][0])) out_[*current].callees.push_back(*name);
    }
    if (auto inner = node.find("inner"); inner != node.end() && inner->is_array()) {
      for (const auto& child : *inner) Visit(child, current);
    }
  }

  std::function<std::optional<std::string>(const std::string&)> normalize_;
  std::string file_;
  int line_ = 0;
  std::vector<AstFunction> out_;
};

}  // namespace detail

// Relative path inside the source tree, or nothing for system headers and
// files outside it.
inline std::optional<std::string> source_relative(const std::string& file) {
  if (file.empty() || file[0] == '/' || file[0] == '<') return std::nullopt;
  auto p = fs::path(file).lexically_normal().generic_string();
  if (p.empty() || p == "." || p.rfind("..", 0) == 0) return std::nullopt;
  return p;
}

inline std::vector<AstFunction> ast_functions(const nlohmann::json& tu) {
  return detail::AstWalker(source_relative).run(tu);
}

// Merges per-translation-unit results into a canonical document. Names
// defined in more than one file become name@file; a call resolves to the
// definition in the same translation unit first.
inline nlohmann::json assemble_graph_document(const std::vector<std::vector<AstFunction>>& units,
                                              const std::string& entry = "main") {
  struct Def {
    std::string name, file;
    int line;
  };
  std::map<std::pair<std::string, std::string>, Def> defs;  // (name, file)
  std::map<std::string, std::set<std::string>> files_of;
  for (const auto& unit : units) {
    for (const auto& f : unit) {
      auto key = std::make_pair(f.name, f.file);
      if (!defs.count(key)) defs[key] = Def{f.name, f.file, f.line};
      files_of[f.name].insert(f.file);
    }
  }
  if (defs.empty()) throw InputError("no functions extracted");
  auto label = [&](const std::string& name, const std::string& file) {
    return files_of[name].size() > 1 ? name + "@" + file : name;
  };

  std::set<std::pair<std::string, std::string>> edges;
  for (const auto& unit : units) {
    std::map<std::string, std::string> local;  // name -> file within this unit
    for (const auto& f : unit) local.emplace(f.name, f.file);
    for (const auto& f : unit) {
      for (const auto& callee : f.callees) {
        auto it = files_of.find(callee);
        if (it == files_of.end()) continue;  // library function
        std::string file = local.count(callee) ? local[callee] : *it->second.begin();
        edges.emplace(label(f.name, f.file), label(callee, file));
      }
    }
  }

  std::string entry_label;
  if (auto it = files_of.find(entry); it != files_of.end()) entry_label = label(entry, *it->second.begin());
  if (entry_label.empty()) throw InputError("entry function " + entry + " not found among extracted functions");

  nlohmann::json doc{{"entry", entry_label}, {"nodes", nlohmann::json::array()}, {"edges", nlohmann::json::array()}};
  std::vector<nlohmann::json> nodes;
  for (const auto& [key, d] : defs) nodes.push_back({{"name", label(d.name, d.file)}, {"file", d.file}, {"line", d.line}});
  std::sort(nodes.begin(), nodes.end(), [](const auto& a, const auto& b) { return a["name"] < b["name"]; });
  for (auto& n : nodes) doc["nodes"].push_back(std::move(n));
  for (const auto& [a, b] : edges) doc["edges"].push_back({{"caller", a}, {"callee", b}});
  return doc;
}

// C and C++ sources under dir, relative, sorted.
inline std::vector<std::string> source_files(const fs::path& dir) {
  static const std::set<std::string> kExt = {".c", ".cc", ".cpp", ".cxx"};
  std::vector<std::string> out;
  std::error_code ec;
  for (auto it = fs::recursive_directory_iterator(dir, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (it->is_regular_file() && kExt.count(it->path().extension().string())) {
      out.push_back(fs::relative(it->path(), dir).generic_string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct ClangOptions {
  std::string clang = "clang";
  std::vector<std::string> extra_args;
  std::string entry = "main";
  int timeout_s = 600;
};

namespace detail {

inline std::string Quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "pilot-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw RuntimeFailure("cannot create temporary directory");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

}  // namespace detail

// Runs clang on every source file and builds the canonical document.
// Translation units with compile errors still contribute what clang parsed.
inline nlohmann::json extract_with_clang(const fs::path& source_dir, const ClangOptions& opts,
                                         std::vector<std::string>* warnings = nullptr) {
  if (!fs::is_directory(source_dir)) throw InputError("source directory not found: " + source_dir.string());
  detail::TempDir tmp;
  std::vector<std::vector<AstFunction>> units;
  for (const auto& file : source_files(source_dir)) {
    std::string cmd = detail::Quote(opts.clang) + " -fsyntax-only -ferror-limit=0 -Xclang -ast-dump=json -I.";
    bool cxx = !fs::path(file).extension().string().empty() && fs::path(file).extension() != ".c";
    if (cxx) cmd += " -x c++";
    for (const auto& a : opts.extra_args) cmd += " " + detail::Quote(a);
    cmd += " " + detail::Quote(file) + " > " + detail::Quote((tmp.path() / "ast.json").string());
    detail::WriteFile(tmp.path() / "run.sh", cmd + "\n");
    auto res = run_process(tmp.path() / "run.sh", source_dir, opts.timeout_s);
    if (res.exit_code == 127) throw RuntimeFailure("cannot run " + opts.clang + ": " + res.stderr_text);
    if (res.timed_out) throw RuntimeFailure("clang timed out on " + file);
    auto ast = nlohmann::json::parse(detail::ReadFile(tmp.path() / "ast.json"), nullptr, false);
    if (ast.is_discarded()) {
      if (warnings) warnings->push_back(file + ": no AST produced");
      continue;
    }
    if (res.exit_code != 0 && warnings) warnings->push_back(file + ": clang reported errors");
    units.push_back(ast_functions(ast));
  }
  return assemble_graph_document(units, opts.entry);
}

// Runs `command <source_dir>` and loads the document it prints.
inline CallGraph run_extractor(const fs::path& source_dir, const std::string& command, int timeout_s = 600) {
  if (!fs::is_directory(source_dir)) throw InputError("source directory not found: " + source_dir.string());
  if (command.empty()) throw InputError("extractor command is empty");
  detail::TempDir tmp;
  auto out = tmp.path() / "graph.json";
  detail::WriteFile(tmp.path() / "run.sh", command + " " + detail::Quote(fs::absolute(source_dir).string()) +
                                                " > " + detail::Quote(out.string()) + "\n");
  auto res = run_process(tmp.path() / "run.sh", fs::current_path(), timeout_s);
  if (res.timed_out) throw RuntimeFailure("extractor timed out");
  if (res.exit_code != 0) {
    throw RuntimeFailure("extractor exited with status " + std::to_string(res.exit_code) + ": " +
                         res.stderr_text.substr(0, 2000));
  }
  auto doc = nlohmann::json::parse(detail::ReadFile(out), nullptr, false);
  if (doc.is_discarded()) throw RuntimeFailure("extractor output is not JSON");
  if (doc.is_object() && doc.contains("nodes") && doc["nodes"].is_array() && doc["nodes"].empty()) {
    throw InputError("no functions extracted");
  }
  try {
    return call_graph_from_json(doc);
  } catch (const InputError& e) {
    throw RuntimeFailure(std::string("extractor output rejected: ") + e.what());
  }
}

}  // namespace pilot
