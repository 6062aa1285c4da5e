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
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "pilot/llm.hpp"
#include "pilot/paths.hpp"

namespace pilot {
namespace {

std::string ReadFixture(const std::string& name) {
  std::ifstream in(std::string(PILOT_FIXTURE_DIR) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string ErrorOf(std::string_view response) {
  try {
    parse_action(response);
  } catch (const ProtocolError& e) {
    return e.what();
  }
  return "";
}

TEST(ParseAction, ThreeModes) {
  auto read = parse_action(R"({"mode":"read_data","target_files":["src/a.c"],"reason":"inspect parser"})");
  ASSERT_TRUE(std::holds_alternative<ReadData>(read));
  EXPECT_EQ(std::get<ReadData>(read).target_files, std::vector<std::string>{"src/a.c"});
  EXPECT_EQ(std::get<ReadData>(read).reason, "inspect parser");
  EXPECT_FALSE(std::get<ReadData>(read).file_slice);

  auto mod = parse_action(
      R"({"mode":"modify_data","file":"run_test.sh","line_range":[2,4],"replacement":"echo hi"})");
  ASSERT_TRUE(std::holds_alternative<ModifyData>(mod));
  EXPECT_EQ(std::get<ModifyData>(mod).line_range, (LineRange{2, 4}));

  auto exec = parse_action(R"({"mode":"execute_command","script":"ls src"})");
  ASSERT_TRUE(std::holds_alternative<ExecuteCommand>(exec));
  EXPECT_EQ(std::get<ExecuteCommand>(exec).script, "ls src");
}

TEST(ParseAction, ProseWrappedJson) {
  auto a = parse_action(
      "Let me run the build first.\n```json\n{\"mode\": \"execute_command\", \"script\": "
      "\"make -j4 {all}\"}\n```\nThat should tell us {more}.");
  ASSERT_TRUE(std::holds_alternative<ExecuteCommand>(a));
  EXPECT_EQ(std::get<ExecuteCommand>(a).script, "make -j4 {all}");
}

TEST(ParseAction, SkipsMalformedObjectBeforeValidOne) {
  auto a = parse_action(R"(Plan: {not json} then {"mode":"read_data","target_files":"src/x.c"})");
  ASSERT_TRUE(std::holds_alternative<ReadData>(a));
  EXPECT_EQ(std::get<ReadData>(a).target_files, std::vector<std::string>{"src/x.c"});
}

TEST(ParseAction, Errors) {
  EXPECT_NE(ErrorOf(R"({"mode":"fly"})").find("unknown mode"), std::string::npos);
  EXPECT_NE(ErrorOf("I will read the file next.").find("no JSON"), std::string::npos);
  EXPECT_NE(ErrorOf(R"({"mode":"modify_data","file":"a"})").find("replacement"), std::string::npos);
  EXPECT_NE(ErrorOf(R"({"mode":"execute_command"})").find("script"), std::string::npos);
  EXPECT_NE(ErrorOf(R"({"target_files":["a"]})").find("mode"), std::string::npos);
  EXPECT_FALSE(ErrorOf(R"({"mode":"read_data","target_files":[]})").empty());
  EXPECT_FALSE(ErrorOf(R"({"mode":"read_data","target_files":["a"],"file_slice":[5,2]})").empty());
  EXPECT_FALSE(ErrorOf(R"({"mode":"read_data","target_files":["a"],"file_slice":[0,2]})").empty());
}

std::string RandomText(std::mt19937_64& rng) {
  static const std::vector<std::string> pieces{"a", "{", "}", "\"", "\\", "\n", " ", "@@",
                                               "\xE2\x86\x92", "x=1;", "\t", "'"};
  std::string s;
  std::size_t n = rng() % 12;
  for (std::size_t i = 0; i < n; ++i) s += pieces[rng() % pieces.size()];
  return s;
}

TEST(ParseAction, InvertsSerialize) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    LlmAction action;
    switch (trial % 3) {
      case 0: {
        ReadData r;
        for (std::size_t i = 0, n = 1 + rng() % 3; i < n; ++i) r.target_files.push_back("src/" + RandomText(rng));
        if (rng() % 2) r.file_slice = LineRange{1 + static_cast<int>(rng() % 10), 20};
        r.reason = RandomText(rng);
        action = r;
        break;
      }
      case 1: {
        ModifyData m{"run_test.sh", std::nullopt, RandomText(rng)};
        if (rng() % 2) m.line_range = LineRange{3, 3 + static_cast<int>(rng() % 4)};
        action = m;
        break;
      }
      default:
        action = ExecuteCommand{RandomText(rng) + "x"};
    }
    EXPECT_EQ(parse_action("prose " + serialize_action(action) + " more"), action);
  }
}

TEST(EstimateTokens, Examples) {
  EXPECT_EQ(estimate_tokens(""), 0u);
  EXPECT_EQ(estimate_tokens("abcdefgh"), 2u);
  EXPECT_EQ(estimate_tokens("abcdefghi"), 3u);
  EXPECT_EQ(estimate_tokens(std::string(4096 * 4, 'x')), 4096u);
}

TEST(TruncateWithGuidance, FitsUnchanged) {
  std::string small(40, 'a');
  EXPECT_EQ(truncate_with_guidance(small, 100, "src/a.c"), small);
  EXPECT_EQ(truncate_with_guidance(small, 10, "src/a.c"), small);  // boundary inclusive
  EXPECT_THROW(truncate_with_guidance(small, 0, "src/a.c"), InputError);
}

TEST(TruncateWithGuidance, LargeFileGetsNotice) {
  std::string big;
  for (int i = 0; big.size() < 100000; ++i) big += "line " + std::to_string(i) + " of the file\n";
  auto out = truncate_with_guidance(big, 500, "src/huge.c");
  auto notice = truncation_notice("src/huge.c");
  ASSERT_TRUE(out.ends_with(notice));
  EXPECT_NE(notice.find("src/huge.c"), std::string::npos);
  EXPECT_NE(notice.find("file_slice"), std::string::npos);
  EXPECT_NE(notice.find("read_data"), std::string::npos);
  std::string kept = out.substr(0, out.size() - notice.size());
  EXPECT_LE(estimate_tokens(kept), 500u);
  EXPECT_GT(estimate_tokens(kept), 450u);
  EXPECT_EQ(big.rfind(kept, 0), 0u);
  EXPECT_EQ(kept.back(), '\n');
}

TEST(TruncateWithGuidance, PluggableEstimator) {
  TokenEstimator words = [](std::string_view t) {
    std::size_t n = 0;
    bool in = false;
    for (char c : t) {
      bool ws = c == ' ' || c == '\n';
      if (!ws && !in) ++n;
      in = !ws;
    }
    return n;
  };
  auto out = truncate_with_guidance("one two three four five", 3, "f", words);
  EXPECT_EQ(out.rfind("one two three", 0), 0u);
  EXPECT_EQ(out.find("four"), std::string::npos);
}

TEST(Cost, Examples) {
  PriceTable prices{3.0, 15.0};
  EXPECT_EQ(cost({0, 0, 0}, prices), 0.0);
  EXPECT_DOUBLE_EQ(cost({1000000, 0, 1}, prices), 3.0);
  EXPECT_NEAR(cost({4603321, 90252, 36}, prices), 15.16, 0.05);
  EXPECT_THROW(cost({1, 1, 1}, PriceTable{-1, 0}), InputError);
}

PromptContext FigureContext() {
  auto g = load_call_graph(ReadFixture("ffmpeg_figure.json"));
  PromptContext ctx;
  ctx.program = "ffmpeg";
  ctx.target = g.function(g.require("ff_isom_write_hvcc"));
  ctx.definition = "int ff_isom_write_hvcc(AVIOContext *pb, ...) {...}";
  for (const auto& p : enumerate_paths(g, "ff_isom_write_hvcc")) ctx.rendered_paths.push_back(render_path(p));
  ctx.tools = {"ffmpeg", "sox"};
  ctx.directory_tree = "workspace/\n  ffmpeg-0001/\n    src/\n    run_test.sh\n  execute.sh\n";
  return ctx;
}

TEST(ComposePrompt, InitialFollowsFigureLayout) {
  auto prompt = compose_prompt(PromptPhase::kInitial, FigureContext());
  const auto& t = prompt.text;
  EXPECT_FALSE(prompt.attachment);
  auto task = t.find("Task:");
  auto def = t.find("Target Function Definition:");
  auto rel = t.find("Function Call Relationship from main() to the target function:");
  auto cand = t.find("- Path candidate 1\nmain@ffmpeg.c:2932\n");
  auto cand2 = t.find("- Path candidate 2\n");
  auto fmt = t.find("Response Format:");
  auto dir = t.find("Directory Structure:\nworkspace/");
  ASSERT_NE(rel, std::string::npos);
  ASSERT_NE(cand, std::string::npos);
  EXPECT_LT(task, def);
  EXPECT_LT(def, rel);
  EXPECT_LT(rel, cand);
  EXPECT_LT(cand, cand2);
  EXPECT_LT(cand2, fmt);
  EXPECT_LT(fmt, dir);
  EXPECT_NE(t.find("\xE2\x86\x92 ff_isom_write_hvcc@hevc.c:1084"), std::string::npos);
  EXPECT_NE(t.find("ffmpeg, sox"), std::string::npos);
  for (const char* mode : {"read_data", "modify_data", "execute_command"}) {
    EXPECT_NE(t.find(mode, fmt), std::string::npos) << mode;
  }
  EXPECT_EQ(compose_prompt(PromptPhase::kInitial, FigureContext()).text, t);
}

TEST(ComposePrompt, OverflowExportsEveryPath) {
  auto ctx = FigureContext();
  ctx.rendered_paths.clear();
  for (int i = 0; i < 200; ++i) {
    ctx.rendered_paths.push_back("main@m.c:1\n\xE2\x86\x92 step" + std::to_string(i) +
                                 "@s.c:" + std::to_string(i + 1) + "\n\xE2\x86\x92 target@t.c:9");
  }
  ctx.path_token_budget = 2000;
  auto prompt = compose_prompt(PromptPhase::kInitial, ctx);
  ASSERT_TRUE(prompt.attachment);
  EXPECT_EQ(prompt.attachment->first, "path_candidates.txt");
  EXPECT_NE(prompt.text.find("workspace/path_candidates.txt"), std::string::npos);
  const auto& file = prompt.attachment->second;
  for (int i = 0; i < 200; ++i) {
    EXPECT_NE(file.find("- Path candidate " + std::to_string(i + 1) + "\n"), std::string::npos);
    EXPECT_NE(file.find("step" + std::to_string(i) + "@"), std::string::npos);
  }
  auto rel = prompt.text.find("to the target function:");
  auto fmt = prompt.text.find("Response Format:");
  EXPECT_LE(estimate_tokens(prompt.text.substr(rel, fmt - rel)), 2100u);
}

TEST(ComposePrompt, RefinementReplacesRelationship) {
  auto ctx = FigureContext();
  ctx.prior_command = "ffmpeg -i in.mp4 out.mp4";
  ctx.covered_functions = {"main", "transcode"};
  ctx.path_feedback = "main \xE2\x9C\x93";
  auto t = compose_prompt(PromptPhase::kRefinement, ctx).text;
  EXPECT_EQ(t.find("Function Call Relationship"), std::string::npos);
  EXPECT_NE(t.find("ffmpeg -i in.mp4 out.mp4"), std::string::npos);
  EXPECT_NE(t.find("- transcode\n"), std::string::npos);
  EXPECT_LT(t.find("Previous Command:"), t.find("Response Format:"));
  ctx.prior_command.clear();
  EXPECT_THROW(compose_prompt(PromptPhase::kRefinement, ctx), InputError);
}

TEST(ComposePrompt, BranchPhase) {
  auto ctx = FigureContext();
  try {
    compose_prompt(PromptPhase::kBranch, ctx);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_STREQ(e.what(), "nothing to refine");
  }
  ctx.uncovered_branches = {"hevc.c:1090 branch 1", "hevc.c:1102 branch 0"};
  auto t = compose_prompt(PromptPhase::kBranch, ctx).text;
  EXPECT_LT(t.find("hevc.c:1090 branch 1"), t.find("Target Function Definition:"));
  EXPECT_LT(t.find("Target Function Definition:"), t.find("Directory Structure:"));
}

TEST(ComposePrompt, MissingContext) {
  auto ctx = FigureContext();
  ctx.target.reset();
  EXPECT_THROW(compose_prompt(PromptPhase::kInitial, ctx), InputError);
  ctx = FigureContext();
  ctx.directory_tree.clear();
  EXPECT_THROW(compose_prompt(PromptPhase::kInitial, ctx), InputError);
}

TEST(ScriptedClient, ReplaysInOrder) {
  auto client = ScriptedClient::FromJson(nlohmann::json::parse(R"({"responses":[
      {"text":"one","input_tokens":10,"output_tokens":2},{"text":"two"}]})"));
  EXPECT_EQ(client.send({{Role::kUser, "x"}}, {}).text, "one");
  auto r = client.send({{Role::kUser, "different"}}, {});
  EXPECT_EQ(r.text, "two");
  EXPECT_EQ(r.input_tokens, 0u);
  EXPECT_THROW(client.send({{Role::kUser, "x"}}, {}), RuntimeFailure);
  EXPECT_THROW(ScriptedClient::FromJson(nlohmann::json::parse(R"({"responses":[{"tokens":1}]})")),
               InputError);
  EXPECT_THROW(ScriptedClient::FromJson(nlohmann::json::array()), InputError);
}

TEST(Conversation, AccountsEveryCall) {
  std::vector<LlmReply> replies;
  std::uint64_t in = 0, out = 0;
  for (int i = 0; i < 36; ++i) {
    replies.push_back({"reply " + std::to_string(i), 1000u + 37u * i, 10u + 3u * i});
    in += 1000u + 37u * i;
    out += 10u + 3u * i;
  }
  ScriptedClient client(replies);
  Conversation conv(client, "system");
  for (int i = 0; i < 36; ++i) conv.ask("turn " + std::to_string(i));
  EXPECT_EQ(conv.usage().chat_count, client.calls());
  EXPECT_EQ(conv.usage().input_tokens, in);
  EXPECT_EQ(conv.usage().output_tokens, out);
  EXPECT_EQ(conv.ledger().size(), 36u);
  EXPECT_EQ(conv.history().size(), 1u + 72u);
}

TEST(Conversation, WindowDropsOldestExchangesOverBudget) {
  std::vector<LlmReply> replies(30, LlmReply{std::string(400, 'r'), 1, 1});
  ScriptedClient client(replies);
  ConversationOptions opts;
  opts.context_token_budget = 1000;
  Conversation conv(client, "sys", opts);
  for (int i = 0; i < 30; ++i) conv.ask("question " + std::to_string(i));
  const auto& last = client.requests().back();
  ASSERT_EQ(last.size(), 1u + 2u * 10u + 1u);
  EXPECT_EQ(last.front().role, Role::kSystem);
  EXPECT_EQ(last[1].content, "question 19");
  EXPECT_EQ(last.back().content, "question 29");
  EXPECT_EQ(conv.history().size(), 61u);

  ScriptedClient roomy_client(replies);
  Conversation roomy(roomy_client, "sys");
  for (int i = 0; i < 30; ++i) roomy.ask("q");
  EXPECT_EQ(roomy_client.requests().back().size(), 60u);
}

class FakeEndpoint : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/messages", [this](const httplib::Request& req, httplib::Response& res) {
      last_body_ = nlohmann::json::parse(req.body);
      last_key_ = req.get_header_value("x-api-key");
      res.set_content(R"({"content":[{"type":"text","text":"hello"}],
                          "usage":{"input_tokens":12,"output_tokens":3}})",
                      "application/json");
    });
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_body_ = nlohmann::json::parse(req.body);
      last_key_ = req.get_header_value("Authorization");
      res.set_content(R"({"choices":[{"message":{"content":"hi"}}],
                          "usage":{"prompt_tokens":7,"completion_tokens":2}})",
                      "application/json");
    });
    server_.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
      res.status = 500;
      res.set_content("boom", "text/plain");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  std::string Url(const std::string& path) { return "http://127.0.0.1:" + std::to_string(port_) + path; }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  nlohmann::json last_body_;
  std::string last_key_;
};

TEST_F(FakeEndpoint, MessagesFlavor) {
  HttpClient client({Url("/v1/messages"), "m1", "k1", ApiFlavor::kMessages, 10});
  auto reply = client.send({{Role::kSystem, "sys"}, {Role::kUser, "u"}}, ClientParams{});
  EXPECT_EQ(reply.text, "hello");
  EXPECT_EQ(reply.input_tokens, 12u);
  EXPECT_EQ(reply.output_tokens, 3u);
  EXPECT_EQ(last_key_, "k1");
  EXPECT_EQ(last_body_["system"], "sys");
  EXPECT_EQ(last_body_["messages"].size(), 1u);
  EXPECT_EQ(last_body_["temperature"], 0.0);
  EXPECT_EQ(last_body_["max_tokens"], 4096);
}

TEST_F(FakeEndpoint, ChatFlavorAndErrors) {
  HttpClient client({Url("/v1/chat/completions"), "m2", "k2", ApiFlavor::kChatCompletions, 10});
  auto reply = client.send({{Role::kSystem, "sys"}, {Role::kUser, "u"}}, ClientParams{});
  EXPECT_EQ(reply.text, "hi");
  EXPECT_EQ(reply.input_tokens, 7u);
  EXPECT_EQ(last_key_, "Bearer k2");
  EXPECT_EQ(last_body_["messages"].size(), 2u);
  HttpClient broken({Url("/broken"), "m", "k", ApiFlavor::kMessages, 10});
  EXPECT_THROW(broken.send({{Role::kUser, "u"}}, {}), RuntimeFailure);
}

}  // namespace
}  // namespace pilot
