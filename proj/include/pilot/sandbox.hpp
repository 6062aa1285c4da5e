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

// Per-campaign workspace: a copy of the program sources plus the scripts the
// model writes. Every path the model names is resolved against the root and
// refused if it leaves it. Scripts run in their own process group under a
// wall-clock limit.

#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <stdlib.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pilot/error.hpp"
#include "pilot/llm.hpp"

extern char** environ;

namespace pilot {

namespace fs = std::filesystem;

inline constexpr int kTimeoutExitCode = 124;
inline constexpr std::size_t kStreamCap = 64 * 1024;
inline constexpr int kDefaultScriptTimeout = 30;
inline constexpr int kDefaultInstallRetries = 3;

struct ExecutionResult {
  int exit_code = 0;
  std::string stdout_text;
  std::string stderr_text;
  double duration_s = 0.0;
  bool timed_out = false;
  bool stdout_truncated = false;
  bool stderr_truncated = false;
};

struct ToolSpec {
  std::string name;
  std::string install_command;
};

struct ToolReport {
  std::string name;
  bool verified = false;
  int attempts = 0;
  std::string detail;
};

namespace detail {

inline std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void WriteFile(const fs::path& p, std::string_view content, bool executable = false) {
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + p.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
  }
  if (executable) {
    fs::permissions(p, fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
                    fs::perm_options::add);
  }
}

inline std::vector<std::string> SplitLines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(text.substr(start));
      break;
    }
    lines.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

inline std::string JoinLines(const std::vector<std::string>& lines, std::size_t from,
                             std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) out += lines[i] + "\n";
  return out;
}

inline bool IsWithin(const fs::path& p, const fs::path& root) {
  auto r = root.begin();
  auto q = p.begin();
  for (; r != root.end(); ++r, ++q) {
    if (q == p.end() || *q != *r) return false;
  }
  return true;
}

inline void Append(std::string& buf, const char* data, std::size_t n, bool& truncated) {
  std::size_t room = kStreamCap > buf.size() ? kStreamCap - buf.size() : 0;
  if (n > room) truncated = true;
  buf.append(data, std::min(n, room));
}

}  // namespace detail

// Runs `/bin/sh script` in cwd. The child leads a new process group that is
// killed on timeout and again after the shell exits, so stray background
// jobs cannot hold the pipes open.
inline ExecutionResult run_process(const fs::path& script, const fs::path& cwd, int timeout_s,
                                   const std::vector<std::pair<std::string, std::string>>& env_overrides = {}) {
  using Clock = std::chrono::steady_clock;
  std::vector<std::string> env_strings;
  for (char** e = environ; e && *e; ++e) {
    std::string_view kv(*e);
    auto eq = kv.find('=');
    bool overridden = false;
    for (const auto& [k, v] : env_overrides) {
      if (kv.substr(0, eq) == k) overridden = true;
    }
    if (!overridden) env_strings.emplace_back(kv);
  }
  for (const auto& [k, v] : env_overrides) env_strings.push_back(k + "=" + v);
  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::string sh = "/bin/sh", script_s = script.string(), cwd_s = cwd.string();
  char* argv[] = {sh.data(), script_s.data(), nullptr};

  int out_pipe[2], err_pipe[2];
  if (pipe2(out_pipe, O_CLOEXEC) != 0) throw RuntimeFailure("pipe failed");
  if (pipe2(err_pipe, O_CLOEXEC) != 0) {
    close(out_pipe[0]);
    close(out_pipe[1]);
    throw RuntimeFailure("pipe failed");
  }
  const auto start = Clock::now();
  pid_t pid = fork();
  if (pid < 0) throw RuntimeFailure(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    setpgid(0, 0);
    int devnull = open("/dev/null", O_RDONLY);
    if (devnull >= 0) dup2(devnull, 0);
    dup2(out_pipe[1], 1);
    dup2(err_pipe[1], 2);
    if (chdir(cwd_s.c_str()) != 0) _exit(127);
    execve(argv[0], argv, envp.data());
    _exit(127);
  }
  setpgid(pid, pid);
  close(out_pipe[1]);
  close(err_pipe[1]);

  ExecutionResult res;
  const auto deadline = start + std::chrono::seconds(timeout_s);
  int fds[2] = {out_pipe[0], err_pipe[0]};
  bool open_fd[2] = {true, true};
  int status = 0;
  bool reaped = false;
  std::optional<Clock::time_point> drain_deadline;
  char buf[8192];
  while (open_fd[0] || open_fd[1]) {
    auto now = Clock::now();
    if (!res.timed_out && now >= deadline) {
      res.timed_out = true;
      kill(-pid, SIGKILL);
      drain_deadline = now + std::chrono::milliseconds(500);
    }
    if (!reaped && waitpid(pid, &status, WNOHANG) == pid) {
      reaped = true;
      kill(-pid, SIGKILL);
      if (!drain_deadline) drain_deadline = now + std::chrono::milliseconds(500);
    }
    if (drain_deadline && now >= *drain_deadline) break;
    pollfd pfds[2];
    int nfds = 0;
    int which[2];
    for (int i = 0; i < 2; ++i) {
      if (open_fd[i]) {
        pfds[nfds] = {fds[i], POLLIN, 0};
        which[nfds++] = i;
      }
    }
    int rc = poll(pfds, static_cast<nfds_t>(nfds), 20);
    if (rc < 0 && errno != EINTR) break;
    for (int j = 0; j < nfds && rc > 0; ++j) {
      if (!(pfds[j].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      ssize_t n = read(pfds[j].fd, buf, sizeof buf);
      if (n <= 0) {
        open_fd[which[j]] = false;
      } else if (which[j] == 0) {
        detail::Append(res.stdout_text, buf, static_cast<std::size_t>(n), res.stdout_truncated);
      } else {
        detail::Append(res.stderr_text, buf, static_cast<std::size_t>(n), res.stderr_truncated);
      }
    }
  }
  close(fds[0]);
  close(fds[1]);
  if (!reaped) {
    if (!res.timed_out && Clock::now() >= deadline) res.timed_out = true;
    if (res.timed_out) kill(-pid, SIGKILL);
    // Pipes closed but the shell may still be running (it closed its
    // descriptors); keep enforcing the deadline.
    while (waitpid(pid, &status, WNOHANG) == 0) {
      if (Clock::now() >= deadline) {
        res.timed_out = true;
        kill(-pid, SIGKILL);
        waitpid(pid, &status, 0);
        break;
      }
      usleep(10000);
    }
    kill(-pid, SIGKILL);
  }
  res.duration_s = std::chrono::duration<double>(Clock::now() - start).count();
  if (res.timed_out) {
    res.exit_code = kTimeoutExitCode;
  } else if (WIFEXITED(status)) {
    res.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    res.exit_code = 128 + WTERMSIG(status);
  }
  return res;
}

class Workspace {
 public:
  // Copies source_dir to <workdir>/<program>-XXXXXX/src and creates an empty
  // execute.sh and a bin/ directory that is prepended to PATH for scripts.
  static Workspace Create(const fs::path& source_dir, const fs::path& workdir,
                          const std::string& program) {
    std::error_code ec;
    if (!fs::is_directory(source_dir, ec)) {
      throw InputError("source directory not readable: " + source_dir.string());
    }
    fs::create_directories(workdir, ec);
    std::string tmpl = (fs::absolute(workdir) / (program + "-XXXXXX")).string();
    if (!mkdtemp(tmpl.data())) {
      throw RuntimeFailure("cannot create workspace under " + workdir.string() + ": " +
                           std::strerror(errno));
    }
    Workspace ws(fs::canonical(tmpl), program);
    fs::copy(source_dir, ws.root_ / "src", fs::copy_options::recursive | fs::copy_options::copy_symlinks, ec);
    if (ec) throw InputError("cannot copy sources from " + source_dir.string() + ": " + ec.message());
    fs::create_directories(ws.root_ / "bin");
    fs::create_directories(ws.root_ / ".pilot");
    detail::WriteFile(ws.root_ / "execute.sh", "", true);
    return ws;
  }

  // Adopts an existing directory as the root.
  static Workspace Open(const fs::path& root, const std::string& program) {
    if (!fs::is_directory(root)) throw InputError("not a workspace: " + root.string());
    return Workspace(fs::canonical(root), program);
  }

  const fs::path& root() const { return root_; }
  const fs::path& program_dir() const { return root_; }
  fs::path src_dir() const { return root_ / "src"; }
  const std::string& program() const { return program_; }

  // Maps a model-supplied path to an absolute path inside the root, or
  // nullopt if it escapes (via "..", an absolute path, or a symlink).
  std::optional<fs::path> resolve(std::string_view rel) const {
    std::string s(rel);
    while (s.starts_with("./")) s.erase(0, 2);
    if (s.starts_with("workspace/")) s.erase(0, 10);
    if (s == "workspace") s.clear();
    if (s.empty()) s = ".";
    if (s.find('\0') != std::string::npos) return std::nullopt;
    fs::path p(s);
    if (p.is_relative()) p = root_ / p;
    std::error_code ec;
    fs::path c = fs::weakly_canonical(p, ec);
    if (ec) return std::nullopt;
    if (!detail::IsWithin(c, root_)) return std::nullopt;
    // weakly_canonical leaves dangling symlinks unresolved; refuse them.
    fs::path walk = root_;
    auto it = c.begin();
    for (auto r = root_.begin(); r != root_.end(); ++r) ++it;
    for (; it != c.end(); ++it) {
      walk /= *it;
      if (fs::is_symlink(fs::symlink_status(walk, ec))) return std::nullopt;
    }
    return c;
  }

  std::string relative(const fs::path& abs) const { return fs::relative(abs, root_).generic_string(); }

  ExecutionResult run_script(const fs::path& script, int timeout_s = kDefaultScriptTimeout) const {
    fs::path p = script.is_absolute() ? script : root_ / script;
    if (!fs::exists(p)) throw InputError("script not found: " + script.string());
    const char* path = std::getenv("PATH");
    return run_process(p, root_, timeout_s,
                       {{"PILOT_WORKSPACE", root_.string()},
                        {"PATH", (root_ / "bin").string() + ":" + (path ? path : "/usr/bin:/bin")}});
  }

  // Writes text to a hidden helper script and runs it.
  ExecutionResult run_text(std::string_view text, const std::string& name,
                           int timeout_s = kDefaultScriptTimeout) const {
    fs::create_directories(root_ / ".pilot");
    auto p = root_ / ".pilot" / name;
    detail::WriteFile(p, text, true);
    return run_script(p, timeout_s);
  }

  // Indented listing of the workspace, rooted at "workspace/".
  std::string directory_tree(std::size_t max_entries = 300) const {
    std::string out = "workspace/\n";
    std::size_t count = 0;
    auto walk = [&](auto&& self, const fs::path& dir, int depth) -> void {
      std::vector<fs::directory_entry> entries;
      for (const auto& e : fs::directory_iterator(dir)) entries.push_back(e);
      std::sort(entries.begin(), entries.end(),
                [](const auto& a, const auto& b) { return a.path().filename() < b.path().filename(); });
      for (const auto& e : entries) {
        auto name = e.path().filename().string();
        if (depth == 0 && (name == ".pilot" || name == "bin")) continue;
        if (++count > max_entries) {
          if (count == max_entries + 1) out += std::string(2 * (depth + 1), ' ') + "...\n";
          return;
        }
        bool dir_entry = e.is_directory() && !e.is_symlink();
        out += std::string(2 * (depth + 1), ' ') + name + (dir_entry ? "/" : "");
        if (depth == 0 && name == "src") out += "  # program sources";
        if (depth == 0 && name == "execute.sh") out += "  # script run by execute_command";
        out += "\n";
        if (dir_entry) self(self, e.path(), depth + 1);
      }
    };
    walk(walk, root_, 0);
    return out;
  }

  // Carries out one action and returns the text shown to the model.
  std::string service_action(const LlmAction& action, std::size_t token_budget = 8000,
                             int timeout_s = kDefaultScriptTimeout) const {
    return std::visit([&](const auto& a) { return service(a, token_budget, timeout_s); }, action);
  }

  // ModifyData on one file; returns the new line count.
  std::size_t apply_modify(const ModifyData& m) const {
    auto p = resolve(m.file);
    if (!p) throw InputError("path outside workspace: " + m.file);
    if (fs::is_directory(*p)) throw InputError("cannot modify a directory: " + m.file);
    auto repl = detail::SplitLines(m.replacement);
    std::vector<std::string> lines;
    if (m.line_range) {
      if (!fs::exists(*p)) throw InputError("no such file: " + m.file);
      lines = detail::SplitLines(detail::ReadFile(*p));
      auto s = static_cast<std::size_t>(m.line_range->start);
      auto e = static_cast<std::size_t>(m.line_range->end);
      if (s > lines.size() + 1) {
        throw InputError(m.file + " has " + std::to_string(lines.size()) + " lines");
      }
      e = std::min(e, lines.size());
      lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(s - 1),
                  lines.begin() + static_cast<std::ptrdiff_t>(std::max(e, s - 1)));
      lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(s - 1), repl.begin(), repl.end());
    } else {
      lines = repl;
      fs::create_directories(p->parent_path());
    }
    bool script = p->extension() == ".sh";
    detail::WriteFile(*p, detail::JoinLines(lines, 0, lines.size()), script);
    return lines.size();
  }

 private:
  Workspace(fs::path root, std::string program) : root_(std::move(root)), program_(std::move(program)) {}

  std::string service(const ReadData& r, std::size_t budget, int) const {
    std::string out;
    std::size_t per_file =
        std::max<std::size_t>(1, budget / std::max<std::size_t>(1, r.target_files.size()));
    for (const auto& f : r.target_files) {
      std::string body;
      auto p = resolve(f);
      if (!p) {
        body = "path outside workspace: " + f + "\n";
      } else if (fs::is_directory(*p)) {
        for (const auto& e : fs::directory_iterator(*p)) {
          body += e.path().filename().string() + (e.is_directory() ? "/" : "") + "\n";
        }
      } else if (!fs::exists(*p)) {
        body = "no such file: " + f + "\n";
      } else {
        auto text = detail::ReadFile(*p);
        if (r.file_slice) {
          auto lines = detail::SplitLines(text);
          auto s = static_cast<std::size_t>(r.file_slice->start);
          auto e = std::min(static_cast<std::size_t>(r.file_slice->end), lines.size());
          if (s > lines.size()) {
            text = f + " has only " + std::to_string(lines.size()) + " lines\n";
          } else {
            text = detail::JoinLines(lines, s - 1, e);
          }
        }
        body = truncate_with_guidance(text, per_file, f);
      }
      if (r.target_files.size() > 1) out += "==> " + f + " <==\n";
      out += body;
    }
    return out;
  }

  std::string service(const ModifyData& m, std::size_t, int) const {
    try {
      auto n = apply_modify(m);
      return "updated " + m.file + ": now " + std::to_string(n) + " lines\n";
    } catch (const InputError& e) {
      return std::string(e.what()) + "\n";
    }
  }

  std::string service(const ExecuteCommand& c, std::size_t budget, int timeout_s) const {
    detail::WriteFile(root_ / "execute.sh", c.script.ends_with('\n') ? c.script : c.script + "\n", true);
    auto res = run_script(root_ / "execute.sh", timeout_s);
    return truncate_with_guidance(summarize(res), budget, "execute.sh output");
  }

 public:
  static std::string summarize(const ExecutionResult& res) {
    std::string s = "exit code " + std::to_string(res.exit_code);
    if (res.timed_out) s += " (timed out)";
    s += "\n--- stdout ---\n" + res.stdout_text;
    if (res.stdout_truncated) s += "\n[stdout truncated at 64 KiB]";
    s += "\n--- stderr ---\n" + res.stderr_text;
    if (res.stderr_truncated) s += "\n[stderr truncated at 64 KiB]";
    return s + "\n";
  }

  // Install-then-verify loop per tool, up to max_retries attempts.
  std::vector<ToolReport> provision_tools(const std::vector<ToolSpec>& specs,
                                          int max_retries = kDefaultInstallRetries,
                                          bool allow_privileged = false,
                                          int timeout_s = 600) const {
    if (max_retries < 1) throw InputError("max_retries must be at least 1");
    std::vector<ToolReport> reports;
    for (const auto& spec : specs) {
      ToolReport rep;
      rep.name = spec.name;
      if (spec.name.empty() ||
          spec.name.find_first_of(" \t\n'\"$`;&|<>()\\") != std::string::npos) {
        rep.detail = "invalid tool name";
        reports.push_back(rep);
        continue;
      }
      if (!allow_privileged && (spec.install_command.starts_with("sudo ") ||
                                spec.install_command.find(" sudo ") != std::string::npos)) {
        rep.detail = "privileged install refused";
        reports.push_back(rep);
        continue;
      }
      for (int attempt = 1; attempt <= max_retries && !rep.verified; ++attempt) {
        rep.attempts = attempt;
        if (!spec.install_command.empty()) {
          auto inst = run_text(spec.install_command + "\n", "install_" + spec.name + ".sh", timeout_s);
          if (inst.exit_code != 0) rep.detail = "install exited " + std::to_string(inst.exit_code);
        }
        auto check = run_text("command -v " + spec.name + "\n", "verify_" + spec.name + ".sh", 30);
        if (check.exit_code == 0) {
          rep.verified = true;
          rep.detail = check.stdout_text.substr(0, check.stdout_text.find('\n'));
        }
      }
      if (!rep.verified) {
        rep.detail = "not found after " + std::to_string(rep.attempts) + " attempts" +
                     (rep.detail.empty() ? "" : "; last " + rep.detail);
      }
      reports.push_back(rep);
    }
    return reports;
  }

 private:
  fs::path root_;
  std::string program_;
};

}  // namespace pilot
