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

#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "adversarial_paths.hpp"
#include "pilot/sandbox.hpp"

namespace pilot {
namespace {

std::string Slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::set<std::string> Listing(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir, fs::directory_options::skip_permission_denied)) {
    out.insert(e.path().string());
  }
  return out;
}

class SandboxTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::string tmpl = (fs::temp_directory_path() / "pilot-sbx-XXXXXX").string();
    ASSERT_NE(mkdtemp(tmpl.data()), nullptr);
    base_ = tmpl;
    fs::create_directories(base_ / "source" / "sub");
    std::ofstream(base_ / "source" / "a.c") << "int a(void) { return 1; }\n";
    std::ofstream(base_ / "source" / "b.c") << "int b(void) { return 2; }\n";
    std::ofstream(base_ / "source" / "sub" / "c.c") << "int c(void) { return 3; }\n";
    ws_.emplace(Workspace::Create(base_ / "source", base_ / "work", "prog"));
  }
  void TearDown() override { fs::remove_all(base_); }

  fs::path base_;
  std::optional<Workspace> ws_;
};

TEST_F(SandboxTest, LayoutAndUniqueRoots) {
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(ws_->src_dir())) files += e.is_regular_file();
  EXPECT_EQ(files, 3u);
  EXPECT_TRUE(fs::exists(ws_->root() / "execute.sh"));
  EXPECT_EQ(fs::file_size(ws_->root() / "execute.sh"), 0u);
  EXPECT_EQ(ws_->root().filename().string().rfind("prog-", 0), 0u);
  auto again = Workspace::Create(base_ / "source", base_ / "work", "prog");
  EXPECT_NE(again.root(), ws_->root());
  EXPECT_THROW(Workspace::Create(base_ / "nope", base_ / "work", "prog"), InputError);
}

TEST_F(SandboxTest, ResolveInsidePaths) {
  EXPECT_EQ(ws_->resolve("src/a.c"), ws_->root() / "src" / "a.c");
  EXPECT_EQ(ws_->resolve("workspace/src/a.c"), ws_->root() / "src" / "a.c");
  EXPECT_EQ(ws_->resolve("./run_test.sh"), ws_->root() / "run_test.sh");
  EXPECT_EQ(ws_->resolve("src/sub/../a.c"), ws_->root() / "src" / "a.c");
  fs::create_symlink("a.c", ws_->root() / "src" / "alias.c");
  EXPECT_EQ(ws_->resolve("src/alias.c"), ws_->root() / "src" / "a.c");
}

TEST_F(SandboxTest, AdversarialPathsRefused) {
  auto outside = base_ / "outside";
  auto paths = testing::PlantEscapes(ws_->root(), outside);
  ASSERT_EQ(paths.size(), 50u);
  auto before_outside = Listing(outside);
  auto before_base = Listing(base_ / "work");
  for (const auto& p : paths) {
    EXPECT_FALSE(ws_->resolve(p).has_value()) << p;
    auto read = ws_->service_action(ReadData{{p}, std::nullopt, "probe"});
    EXPECT_NE(read.find("path outside workspace"), std::string::npos) << p;
    EXPECT_EQ(read.find("TOPSECRET"), std::string::npos) << p;
    auto write = ws_->service_action(ModifyData{p, std::nullopt, "pwned\n"});
    EXPECT_NE(write.find("path outside workspace"), std::string::npos) << p;
  }
  EXPECT_EQ(Listing(outside), before_outside);
  EXPECT_EQ(Listing(base_ / "work"), before_base);
  EXPECT_EQ(Slurp(outside / "secret.txt"), "TOPSECRET\n");
}

TEST_F(SandboxTest, ReadSlicesInclusive) {
  std::string text;
  for (int i = 1; i <= 30; ++i) text += "line" + std::to_string(i) + "\n";
  std::ofstream(ws_->root() / "src" / "long.c") << text;
  auto out = ws_->service_action(ReadData{{"src/long.c"}, LineRange{10, 20}, ""});
  std::string want;
  for (int i = 10; i <= 20; ++i) want += "line" + std::to_string(i) + "\n";
  EXPECT_EQ(out, want);
  EXPECT_EQ(ws_->service_action(ReadData{{"src/long.c"}, LineRange{28, 99}, ""}),
            "line28\nline29\nline30\n");
  EXPECT_NE(ws_->service_action(ReadData{{"src/long.c"}, LineRange{31, 40}, ""}).find("30 lines"),
            std::string::npos);
}

TEST_F(SandboxTest, ReadMultipleMissingAndDirectories) {
  auto out = ws_->service_action(ReadData{{"src/a.c", "src/b.c"}, std::nullopt, ""});
  EXPECT_NE(out.find("==> src/a.c <==\nint a"), std::string::npos);
  EXPECT_NE(out.find("==> src/b.c <==\nint b"), std::string::npos);
  EXPECT_NE(ws_->service_action(ReadData{{"src/zzz.c"}, std::nullopt, ""}).find("no such file"),
            std::string::npos);
  EXPECT_NE(ws_->service_action(ReadData{{"src/sub"}, std::nullopt, ""}).find("c.c"), std::string::npos);
}

TEST_F(SandboxTest, ReadTruncatesLargeFiles) {
  std::string big;
  while (big.size() < 100000) big += "static int filler_" + std::to_string(big.size()) + ";\n";
  std::ofstream(ws_->root() / "src" / "big.c") << big;
  auto out = ws_->service_action(ReadData{{"src/big.c"}, std::nullopt, ""}, 1000);
  EXPECT_TRUE(out.ends_with(truncation_notice("src/big.c")));
  EXPECT_LT(out.size(), 5000u);
}

TEST_F(SandboxTest, ModifyWholeFileAndRanges) {
  const std::string script = "#!/bin/sh\nset -e\necho one\necho two\nexit 0\n";
  auto reply = ws_->service_action(ModifyData{"run_test.sh", std::nullopt, script});
  EXPECT_NE(reply.find("5 lines"), std::string::npos);
  EXPECT_EQ(Slurp(ws_->root() / "run_test.sh"), script);
  EXPECT_TRUE((fs::status(ws_->root() / "run_test.sh").permissions() & fs::perms::owner_exec) !=
              fs::perms::none);

  ws_->service_action(ModifyData{"run_test.sh", LineRange{3, 4}, "echo three\n"});
  EXPECT_EQ(Slurp(ws_->root() / "run_test.sh"), "#!/bin/sh\nset -e\necho three\nexit 0\n");
  ws_->service_action(ModifyData{"run_test.sh", LineRange{5, 5}, "echo appended\n"});
  EXPECT_EQ(Slurp(ws_->root() / "run_test.sh"), "#!/bin/sh\nset -e\necho three\nexit 0\necho appended\n");
  ws_->service_action(ModifyData{"run_test.sh", LineRange{1, 2}, ""});
  EXPECT_EQ(Slurp(ws_->root() / "run_test.sh"), "echo three\nexit 0\necho appended\n");
  EXPECT_NE(ws_->service_action(ModifyData{"nope.txt", LineRange{1, 1}, "x"}).find("no such file"),
            std::string::npos);
  ws_->service_action(ModifyData{"inputs/deep/seed.txt", std::nullopt, "abc"});
  EXPECT_EQ(Slurp(ws_->root() / "inputs" / "deep" / "seed.txt"), "abc\n");
}

TEST_F(SandboxTest, ModifyThenReadReturnsReplacement) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 1 + static_cast<int>(rng() % 20);
    std::string text;
    for (int i = 0; i < n; ++i) text += "orig " + std::to_string(i) + "\n";
    std::ofstream(ws_->root() / "f.txt") << text;
    int s = 1 + static_cast<int>(rng() % n);
    int e = s + static_cast<int>(rng() % (n - s + 1));
    int k = 1 + static_cast<int>(rng() % 5);
    std::string repl;
    for (int i = 0; i < k; ++i) repl += "new " + std::to_string(rng() % 1000) + "\n";
    ws_->service_action(ModifyData{"f.txt", LineRange{s, e}, repl});
    auto first = ws_->service_action(ReadData{{"f.txt"}, LineRange{s, s + k - 1}, ""});
    EXPECT_EQ(first, repl);
    EXPECT_EQ(ws_->service_action(ReadData{{"f.txt"}, LineRange{s, s + k - 1}, ""}), first);
  }
}

TEST_F(SandboxTest, RunScriptBasics) {
  std::ofstream(ws_->root() / "ok.sh") << "exit 0\n";
  std::ofstream(ws_->root() / "three.sh") << "echo out; echo err >&2; exit 3\n";
  std::ofstream(ws_->root() / "make.sh") << "echo data > out.mp4\necho \"$PILOT_WORKSPACE\"\n";
  EXPECT_EQ(ws_->run_script("ok.sh").exit_code, 0);
  auto r = ws_->run_script("three.sh");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_EQ(r.stdout_text, "out\n");
  EXPECT_EQ(r.stderr_text, "err\n");
  EXPECT_FALSE(r.timed_out);
  auto m = ws_->run_script("make.sh");
  EXPECT_TRUE(fs::exists(ws_->root() / "out.mp4"));
  EXPECT_EQ(m.stdout_text, ws_->root().string() + "\n");
  EXPECT_THROW(ws_->run_script("missing.sh"), InputError);
}

TEST_F(SandboxTest, RunScriptTimeout) {
  std::ofstream(ws_->root() / "sleep.sh") << "echo started\nsleep 999\n";
  auto r = ws_->run_script("sleep.sh", 1);
  EXPECT_TRUE(r.timed_out);
  EXPECT_EQ(r.exit_code, kTimeoutExitCode);
  EXPECT_GE(r.duration_s, 1.0);
  EXPECT_LT(r.duration_s, 3.0);
  EXPECT_EQ(r.stdout_text, "started\n");
}

TEST_F(SandboxTest, BackgroundJobsDoNotHoldTheRun) {
  std::ofstream(ws_->root() / "bg.sh") << "sleep 999 &\necho done\n";
  auto r = ws_->run_script("bg.sh", 20);
  EXPECT_FALSE(r.timed_out);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_LT(r.duration_s, 3.0);
}

TEST_F(SandboxTest, StreamsCapped) {
  std::ofstream(ws_->root() / "loud.sh") << "head -c 200000 /dev/zero | tr '\\0' x\n";
  auto r = ws_->run_script("loud.sh");
  EXPECT_EQ(r.stdout_text.size(), kStreamCap);
  EXPECT_TRUE(r.stdout_truncated);
  EXPECT_EQ(r.exit_code, 0);
}

TEST_F(SandboxTest, ExecuteCommandUsesExecuteSh) {
  auto reply = ws_->service_action(ExecuteCommand{"echo hello from exec\nexit 4"});
  EXPECT_NE(reply.find("exit code 4"), std::string::npos);
  EXPECT_NE(reply.find("hello from exec"), std::string::npos);
  EXPECT_EQ(Slurp(ws_->root() / "execute.sh"), "echo hello from exec\nexit 4\n");
}

TEST_F(SandboxTest, DirectoryTree) {
  auto tree = ws_->directory_tree();
  EXPECT_EQ(tree.rfind("workspace/\n", 0), 0u);
  EXPECT_NE(tree.find("  src/"), std::string::npos);
  EXPECT_NE(tree.find("    sub/\n      c.c\n"), std::string::npos);
  EXPECT_NE(tree.find("  execute.sh"), std::string::npos);
  EXPECT_EQ(tree.find(".pilot"), std::string::npos);
}

TEST_F(SandboxTest, ProvisionAlreadyAvailable) {
  auto rep = ws_->provision_tools({{"sh", ""}});
  ASSERT_EQ(rep.size(), 1u);
  EXPECT_TRUE(rep[0].verified);
  EXPECT_EQ(rep[0].attempts, 1);
}

TEST_F(SandboxTest, ProvisionSucceedsOnSecondAttempt) {
  const std::string installer =
      "n=$(cat .pilot/count 2>/dev/null || echo 0); n=$((n+1)); echo $n > .pilot/count; "
      "if [ $n -ge 2 ]; then printf '#!/bin/sh\\n' > bin/pilotfixturetool; "
      "chmod +x bin/pilotfixturetool; fi";
  auto rep = ws_->provision_tools({{"pilotfixturetool", installer}});
  EXPECT_TRUE(rep[0].verified);
  EXPECT_EQ(rep[0].attempts, 2);
}

TEST_F(SandboxTest, ProvisionGivesUpAfterRetries) {
  auto rep = ws_->provision_tools({{"pilot_no_such_tool", "echo trying >> .pilot/log"}});
  EXPECT_FALSE(rep[0].verified);
  EXPECT_EQ(rep[0].attempts, 3);
  EXPECT_EQ(Slurp(ws_->root() / ".pilot" / "log"), "trying\ntrying\ntrying\n");
  auto priv = ws_->provision_tools({{"x", "sudo apt-get install x"}});
  EXPECT_FALSE(priv[0].verified);
  EXPECT_EQ(priv[0].attempts, 0);
}

}  // namespace
}  // namespace pilot
