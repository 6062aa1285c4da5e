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

// Fuzzer seeds from accepted test scripts.
//
// A seed is a single command line with one `@@` input placeholder plus the
// files the script produced. Lines come from the model when it answers with
// a valid line, otherwise from a rule-based rewrite of the script's last
// invocation of the program.

#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pilot/error.hpp"
#include "pilot/llm.hpp"
#include "pilot/sandbox.hpp"

namespace pilot {

// ---------------------------------------------------------------------------
// Shell words.

struct ShellToken {
  std::string text;
  bool op = false;  // unquoted control operator or newline
};

inline bool IsRedirection(std::string_view t) {
  static const char* kOps[] = {">", ">>", "<", "<<", "<<<", "&>", "&>>", ">|", "<>"};
  std::size_t i = 0;
  while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
  auto rest = t.substr(i);
  for (const char* op : kOps) {
    if (rest == op) return true;
    // 2>&1, >/dev/null, 2>err.txt
    if (rest.size() > std::string_view(op).size() && rest.rfind(op, 0) == 0) {
      char next = rest[std::string_view(op).size()];
      if (next != '>' && next != '<') return true;
    }
  }
  return false;
}

// POSIX-style word splitting without expansion. Quotes are removed,
// backslash-newline joins lines, comments are dropped, and unquoted
// ; & && | || ( ) and newlines become operator tokens.
inline std::vector<ShellToken> shell_split(std::string_view s) {
  std::vector<ShellToken> out;
  std::string word;
  bool in_word = false;
  auto flush = [&] {
    if (in_word) out.push_back({word, false});
    word.clear();
    in_word = false;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '\\') {
      if (i + 1 < s.size() && s[i + 1] == '\n') {
        ++i;
        continue;
      }
      if (i + 1 < s.size()) word += s[++i];
      in_word = true;
    } else if (c == '\'') {
      auto end = s.find('\'', i + 1);
      if (end == std::string_view::npos) throw InputError("unterminated single quote");
      word += s.substr(i + 1, end - i - 1);
      in_word = true;
      i = end;
    } else if (c == '"') {
      in_word = true;
      for (++i;; ++i) {
        if (i >= s.size()) throw InputError("unterminated double quote");
        if (s[i] == '"') break;
        if (s[i] == '\\' && i + 1 < s.size() && std::string_view("\"\\$`\n").find(s[i + 1]) != std::string_view::npos) {
          if (s[i + 1] != '\n') word += s[i + 1];
          ++i;
        } else {
          word += s[i];
        }
      }
    } else if (c == '#' && !in_word) {
      while (i + 1 < s.size() && s[i + 1] != '\n') ++i;
    } else if (c == ' ' || c == '\t') {
      flush();
    } else if (c == '\n' || c == ';' || c == '(' || c == ')') {
      flush();
      out.push_back({std::string(1, c), true});
    } else if (c == '&' || c == '|') {
      // Part of a redirection such as 2>&1 or >|.
      if (in_word && !word.empty() && (word.back() == '>' || word.back() == '<')) {
        word += c;
        continue;
      }
      if (c == '&' && i + 1 < s.size() && s[i + 1] == '>') {
        flush();
        word = "&";
        in_word = true;
        continue;
      }
      flush();
      if (i + 1 < s.size() && s[i + 1] == c) {
        out.push_back({std::string(2, c), true});
        ++i;
      } else {
        out.push_back({std::string(1, c), true});
      }
    } else {
      word += c;
      in_word = true;
    }
  }
  flush();
  return out;
}

inline std::string shell_quote(std::string_view w) {
  static constexpr std::string_view kSafe =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789@%+=:,./-_";
  if (!w.empty() && w.find_first_not_of(kSafe) == std::string_view::npos) return std::string(w);
  std::string out = "'";
  for (char c : w) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

inline std::string shell_join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += shell_quote(w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Seed line validation and extraction.

inline constexpr std::string_view kPlaceholder = "@@";

// Empty when valid, otherwise the reason.
inline std::string seed_line_problem(std::string_view line, std::string_view program) {
  if (line.find('\n') != std::string_view::npos) return "more than one line";
  if (line.find('`') != std::string_view::npos || line.find("$(") != std::string_view::npos) {
    return "command substitution";
  }
  std::vector<ShellToken> tokens;
  try {
    tokens = shell_split(line);
  } catch (const InputError& e) {
    return e.what();
  }
  if (tokens.empty()) return "empty line";
  for (const auto& t : tokens) {
    if (t.op) return "shell control operator " + t.text;
    if (IsRedirection(t.text)) return "redirection " + t.text;
  }
  if (tokens.front().text != program) return "does not start with " + std::string(program);
  auto n = std::count_if(tokens.begin(), tokens.end(), [](const ShellToken& t) { return t.text == kPlaceholder; });
  if (n != 1) return "expected exactly one @@, found " + std::to_string(n);
  return "";
}

inline bool valid_seed_line(std::string_view line, std::string_view program) {
  return seed_line_problem(line, program).empty();
}

namespace detail {

inline std::string Basename(const std::string& w) {
  auto slash = w.rfind('/');
  return slash == std::string::npos ? w : w.substr(slash + 1);
}

inline bool IsAssignment(const std::string& w) {
  auto eq = w.find('=');
  if (eq == std::string::npos || eq == 0) return false;
  for (std::size_t i = 0; i < eq; ++i) {
    char c = w[i];
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return !std::isdigit(static_cast<unsigned char>(w[0]));
}

// Drops redirections, assignments, shell keywords and wrapper commands in
// front of the real command word.
inline std::vector<std::string> StripWrappers(const std::vector<std::string>& words) {
  std::vector<std::string> w;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& t = words[i];
    if (IsRedirection(t)) {
      // Operator alone: the target is the next word.
      std::string_view op = t;
      while (!op.empty() && std::isdigit(static_cast<unsigned char>(op.front()))) op.remove_prefix(1);
      if (op.find_first_not_of("<>&|") == std::string_view::npos && !(op.size() >= 2 && op.back() == '&')) ++i;
      continue;
    }
    w.push_back(t);
  }
  static const std::set<std::string> kKeywords = {"then", "do", "else", "elif", "if", "while", "until", "!", "{", "time"};
  std::size_t i = 0;
  for (bool changed = true; changed && i < w.size();) {
    changed = true;
    const auto& t = w[i];
    const auto base = Basename(t);
    if (IsAssignment(t) || kKeywords.count(t) || base == "exec" || base == "command") {
      ++i;
    } else if (base == "env") {
      ++i;
      while (i < w.size() && (IsAssignment(w[i]) || (w[i].size() > 1 && w[i][0] == '-'))) {
        bool takes = w[i] == "-u" || w[i] == "-C" || w[i] == "-S";
        i += takes ? 2 : 1;
      }
    } else if (base == "timeout") {
      ++i;
      while (i < w.size() && w[i].size() > 1 && w[i][0] == '-') {
        bool takes = w[i] == "-s" || w[i] == "-k" || w[i] == "--signal" || w[i] == "--kill-after";
        i += takes ? 2 : 1;
      }
      if (i < w.size()) ++i;  // duration
    } else if (base == "nice" || base == "ionice" || base == "stdbuf" || base == "nohup" || base == "setsid") {
      ++i;
      while (i < w.size() && w[i].size() > 1 && w[i][0] == '-') {
        bool takes = (w[i] == "-n" || w[i] == "-c") && base != "stdbuf";
        i += takes ? 2 : 1;
      }
    } else {
      changed = false;
    }
  }
  return {w.begin() + static_cast<std::ptrdiff_t>(std::min(i, w.size())), w.end()};
}

// Simple commands of a script with wrappers removed, in order.
inline std::vector<std::vector<std::string>> Commands(std::string_view script) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> cur;
  auto flush = [&] {
    auto stripped = StripWrappers(cur);
    if (!stripped.empty()) out.push_back(std::move(stripped));
    cur.clear();
  };
  for (const auto& t : shell_split(script)) {
    if (t.op) {
      flush();
    } else {
      cur.push_back(t.text);
    }
  }
  flush();
  return out;
}

inline bool LooksLikePath(const std::string& w) {
  return w.find("://") == std::string::npos && (w.find('/') != std::string::npos || w.find('.') != std::string::npos);
}

}  // namespace detail

// The last invocation of `program`, argv[0] normalized to the program name.
inline std::vector<std::string> last_invocation(std::string_view script, const std::string& program) {
  std::optional<std::vector<std::string>> found;
  for (auto& cmd : detail::Commands(script)) {
    if (detail::Basename(cmd.front()) == program) found = std::move(cmd);
  }
  if (!found) throw InputError("target program not invoked");
  found->front() = program;
  return *found;
}

// Rule-based rewrite: `-i <file>` becomes a trailing `-i @@`; otherwise the
// last positional file argument becomes `@@`; otherwise `@@` is appended.
inline std::string rule_based_seed_line(std::string_view script, const std::string& program) {
  auto argv = last_invocation(script, program);
  std::vector<std::string> out{argv.front()};
  bool replaced = false;
  for (std::size_t i = 1; i < argv.size(); ++i) {
    if (!replaced && argv[i] == "-i" && i + 1 < argv.size()) {
      ++i;
      replaced = true;
      continue;
    }
    out.push_back(argv[i]);
  }
  if (replaced) {
    out.push_back("-i");
    out.push_back(std::string(kPlaceholder));
  } else {
    std::optional<std::size_t> pos;
    for (std::size_t i = out.size(); i-- > 1;) {
      const auto& w = out[i];
      if (w.empty() || w[0] == '-' || w.find("://") != std::string::npos) continue;
      bool option_value = out[i - 1].size() > 1 && out[i - 1][0] == '-' && out[i - 1].find('=') == std::string::npos;
      if (detail::LooksLikePath(w) || !option_value || i == 1) {
        pos = i;
        break;
      }
    }
    if (pos) {
      out[*pos] = std::string(kPlaceholder);
    } else {
      out.push_back(std::string(kPlaceholder));
    }
  }
  auto line = shell_join(out);
  if (auto problem = seed_line_problem(line, program); !problem.empty()) {
    throw InputError("cannot form a seed line from the script: " + problem);
  }
  return line;
}

enum class SeedSource { kModel, kModelCorrected, kRules };

inline const char* seed_source_name(SeedSource s) {
  switch (s) {
    case SeedSource::kModel: return "model";
    case SeedSource::kModelCorrected: return "model_corrected";
    case SeedSource::kRules: return "rules";
  }
  return "?";
}

struct SeedExtraction {
  std::string line;
  SeedSource source = SeedSource::kRules;
  TokenUsage usage;
  std::vector<std::string> rejected;  // model answers that failed validation
};

namespace detail {

// Trims whitespace and a surrounding code fence or backticks.
inline std::string CleanReply(std::string s) {
  auto trim = [](std::string& t) {
    auto b = t.find_first_not_of(" \t\r\n");
    auto e = t.find_last_not_of(" \t\r\n");
    t = b == std::string::npos ? "" : t.substr(b, e - b + 1);
  };
  trim(s);
  if (s.rfind("```", 0) == 0) {
    auto nl = s.find('\n');
    auto close = s.rfind("```");
    if (nl != std::string::npos && close > nl) s = s.substr(nl + 1, close - nl - 1);
    trim(s);
  }
  if (s.size() >= 2 && s.front() == '`' && s.back() == '`') s = s.substr(1, s.size() - 2);
  trim(s);
  return s;
}

}  // namespace detail

inline std::string seed_prompt(std::string_view script, const std::string& program) {
  return "Convert the test script below into a single fuzzer seed line of the form\n"
         "  " + program + " [options] -i @@\n"
         "Keep only the command that runs " + program + " and the options it needs. Drop helper "
         "commands, wrappers such as timeout, redirections and pipes. Put @@ where the input file "
         "goes. Answer with the line only.\n\nScript:\n" + std::string(script) +
         (script.empty() || script.back() != '\n' ? "\n" : "");
}

// Model answer, validated; one corrective round; then the rule-based line.
inline SeedExtraction extract_seed_line(std::string_view script, const std::string& program, LlmClient* client,
                                        ClientParams params = {}) {
  if (program.empty()) throw InputError("program name must be nonempty");
  last_invocation(script, program);  // precondition
  SeedExtraction result;
  if (client) {
    std::vector<ChatMessage> messages{
        {Role::kSystem, "You turn shell test scripts into command-line fuzzer seeds."},
        {Role::kUser, seed_prompt(script, program)}};
    for (int round = 0; round < 2; ++round) {
      auto reply = client->send(messages, params);
      result.usage += TokenUsage{reply.input_tokens, reply.output_tokens, 1};
      auto line = detail::CleanReply(reply.text);
      auto problem = seed_line_problem(line, program);
      if (problem.empty()) {
        result.line = line;
        result.source = round == 0 ? SeedSource::kModel : SeedSource::kModelCorrected;
        return result;
      }
      result.rejected.push_back(line);
      messages.push_back({Role::kAssistant, reply.text});
      messages.push_back({Role::kUser, "That line is not usable (" + problem + "). Reply with one line that starts with " +
                                           program + ", contains @@ exactly once and has no shell operators."});
    }
  }
  result.line = rule_based_seed_line(script, program);
  result.source = SeedSource::kRules;
  return result;
}

// ---------------------------------------------------------------------------
// Corpus materialization.

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw RuntimeFailure("SHA-256 digest failed");
  }
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

struct InputFile {
  std::string path;    // relative to the workspace root
  std::string digest;  // SHA-256, hex
  friend bool operator==(const InputFile&, const InputFile&) = default;
};

struct SeedArtifact {
  std::string seed_id;
  std::string seed_line;
  std::optional<SeedSource> line_source;
  std::string source_script;
  std::vector<InputFile> input_files;
  std::vector<InputFile> duplicates;  // produced, but the digest was already in the corpus
  int exit_code = 0;
  bool timed_out = false;
  std::vector<std::string> warnings;
};

namespace detail {

struct FileState {
  std::uintmax_t size = 0;
  fs::file_time_type mtime;
  std::string digest;
};

inline bool ExcludedFromCorpus(const std::string& rel) {
  auto first = rel.substr(0, rel.find('/'));
  if (first == "src" || first == "bin" || first == ".pilot") return true;
  if (rel == "execute.sh" || rel == "path_candidates.txt" || rel == "coverage.cov") return true;
  return rel.rfind("run_test", 0) == 0 && rel.size() > 3 && rel.compare(rel.size() - 3, 3, ".sh") == 0 &&
         rel.find('/') == std::string::npos;
}

inline std::map<std::string, FileState> Snapshot(const fs::path& root) {
  std::map<std::string, FileState> snap;
  std::error_code ec;
  for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    auto rel = fs::relative(it->path(), root).generic_string();
    if (it->is_directory() && ExcludedFromCorpus(rel)) {
      it.disable_recursion_pending();
      continue;
    }
    if (it->is_symlink() || !it->is_regular_file() || ExcludedFromCorpus(rel)) continue;
    snap[rel] = FileState{it->file_size(), it->last_write_time(), sha256_hex(ReadFile(it->path()))};
  }
  return snap;
}

inline std::string SeedId(const std::string& script) {
  auto name = Basename(script);
  auto dot = name.rfind('.');
  return dot == std::string::npos || dot == 0 ? name : name.substr(0, dot);
}

}  // namespace detail

// Runs each script once, in order, and records the files it creates or
// rewrites. Files go to out_dir/<seed_id>/files/; a digest already in the
// corpus is listed under duplicates and not copied again.
inline std::vector<SeedArtifact> materialize_corpus(const Workspace& ws, const std::vector<std::string>& scripts,
                                                    const fs::path& out_dir,
                                                    int timeout_s = kDefaultScriptTimeout) {
  std::vector<SeedArtifact> artifacts;
  std::set<std::string> seen_ids;
  std::set<std::string> seen_digests;
  for (const auto& script : scripts) {
    auto path = ws.resolve(script);
    if (!path || !fs::is_regular_file(*path)) throw InputError("script not found in workspace: " + script);
    SeedArtifact a;
    a.seed_id = detail::SeedId(script);
    if (!seen_ids.insert(a.seed_id).second) throw InputError("duplicate seed id " + a.seed_id);
    a.source_script = ws.relative(*path);
    auto before = detail::Snapshot(ws.root());
    auto res = ws.run_script(*path, timeout_s);
    a.exit_code = res.exit_code;
    a.timed_out = res.timed_out;
    if (res.exit_code != 0) {
      a.warnings.push_back("script exited with status " + std::to_string(res.exit_code) +
                           (res.timed_out ? " (timed out)" : ""));
    }
    auto after = detail::Snapshot(ws.root());
    for (const auto& [rel, st] : after) {
      auto it = before.find(rel);
      bool produced = it == before.end() || it->second.digest != st.digest || it->second.mtime != st.mtime ||
                      it->second.size != st.size;
      if (!produced) continue;
      InputFile f{rel, st.digest};
      if (!seen_digests.insert(st.digest).second) {
        a.duplicates.push_back(f);
        continue;
      }
      auto dest = out_dir / a.seed_id / "files" / rel;
      fs::create_directories(dest.parent_path());
      fs::copy_file(ws.root() / rel, dest, fs::copy_options::overwrite_existing);
      a.input_files.push_back(f);
    }
    fs::create_directories(out_dir / a.seed_id / "files");
    if (a.input_files.empty() && a.duplicates.empty()) a.warnings.push_back("script produced no input files");
    artifacts.push_back(std::move(a));
  }
  return artifacts;
}

// ---------------------------------------------------------------------------
// Corpus output.

enum class SeedFormat { kSingleLine, kArgvDictionary };

inline SeedFormat parse_seed_format(std::string_view s) {
  if (s == "single_line") return SeedFormat::kSingleLine;
  if (s == "argv_dictionary") return SeedFormat::kArgvDictionary;
  throw InputError("unknown seed format " + std::string(s));
}

inline const char* seed_format_name(SeedFormat f) {
  return f == SeedFormat::kSingleLine ? "single_line" : "argv_dictionary";
}

// Option strings across all seed lines, first occurrence order.
inline std::vector<std::string> option_dictionary(const std::vector<SeedArtifact>& artifacts) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& a : artifacts) {
    for (const auto& t : shell_split(a.seed_line)) {
      if (t.op || t.text.size() < 2 || t.text[0] != '-') continue;
      if (seen.insert(t.text).second) out.push_back(t.text);
    }
  }
  return out;
}

inline nlohmann::json write_corpus(const std::vector<SeedArtifact>& artifacts, SeedFormat format,
                                   const fs::path& out_dir) {
  if (artifacts.empty()) throw InputError("no seed artifacts to write");
  nlohmann::json manifest{{"format", seed_format_name(format)}, {"seeds", nlohmann::json::object()}};
  for (const auto& a : artifacts) {
    if (a.seed_line.empty()) throw InputError("seed " + a.seed_id + " has no seed line");
    auto files = nlohmann::json::array();
    for (const auto& f : a.input_files) files.push_back({{"path", f.path}, {"sha256", f.digest}});
    auto dups = nlohmann::json::array();
    for (const auto& f : a.duplicates) dups.push_back({{"path", f.path}, {"sha256", f.digest}});
    nlohmann::json entry{{"line", a.seed_line},
                         {"script", a.source_script},
                         {"files", files},
                         {"duplicates", dups},
                         {"exit_code", a.exit_code},
                         {"warnings", a.warnings}};
    if (a.line_source) entry["line_source"] = seed_source_name(*a.line_source);
    manifest["seeds"][a.seed_id] = entry;
    fs::create_directories(out_dir / a.seed_id / "files");
    if (format == SeedFormat::kSingleLine) detail::WriteFile(out_dir / a.seed_id / "cmdline", a.seed_line + "\n");
  }
  if (format == SeedFormat::kArgvDictionary) {
    std::string dict;
    for (const auto& o : option_dictionary(artifacts)) dict += o + "\n";
    detail::WriteFile(out_dir / "dictionary.txt", dict);
  }
  detail::WriteFile(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace pilot
