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

// pilot: command-line front end.
//
//   pilot extract-graph --src DIR --out DIR
//   pilot features      --graph G.json [--out DIR]
//   pilot recommend     --graph G.json [--out DIR]
//   pilot campaign      --graph G.json --src DIR --out DIR (--mock T.json | --live)
//   pilot seeds         --workspace DIR --out DIR [--mock T.json | --live]
//   pilot report-cost   --ledger RUN.json [--price-in X --price-out Y]
//   pilot coverage-convert --gcov FILE
//
// Every config key is also a flag (--n-trial, --price-in, ...).
// Exit status: 0 success, 1 invalid input, 2 runtime failure.

#include <cstdio>
#include <ctime>
#include <iostream>
#include <iterator>
#include <memory>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pilot/config.hpp"
#include "pilot/extract.hpp"
#include "pilot/features.hpp"
#include "pilot/orchestrator.hpp"
#include "pilot/seeds.hpp"
#include "pilot/strategy.hpp"

namespace pilot {
namespace {

struct Options {
  std::string config_file;
  ConfigMap flags;
  std::vector<std::string> installs;
  std::string graph, src, out, mock, now, ledger, workspace, gcov;
  std::vector<std::string> scripts;
  bool live = false;
  bool plot = false;
};

void AddConfigFlags(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_file, "key = value configuration file");
  for (const auto& key : config_keys()) {
    const std::string name = key.name;
    auto help = key.help + (key.default_value.empty() ? "" : " (default " + key.default_value + ")");
    cmd->add_option_function<std::string>(
           "--" + kebab_case(name), [&o, name](const std::string& v) { o.flags[name] = v; }, help)
        ->group("Configuration");
  }
  cmd->add_option("--install", o.installs, "Tool to provision, NAME=INSTALL_COMMAND")->group("Configuration");
}

ToolConfig LoadConfig(const Options& o) {
  std::vector<ConfigMap> layers;
  if (!o.config_file.empty()) layers.push_back(load_config_file(o.config_file));
  ConfigMap flags = o.flags;
  for (const auto& spec : o.installs) {
    auto eq = spec.find('=');
    auto name = spec.substr(0, eq);
    if (name.empty()) throw InputError("--install expects NAME=INSTALL_COMMAND, got '" + spec + "'");
    flags["install." + name] = eq == std::string::npos ? "" : spec.substr(eq + 1);
  }
  layers.push_back(std::move(flags));
  return resolve_config(merge_config(layers));
}

CallGraph ReadGraph(const std::string& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw InputError("graph file not found: " + path);
  return load_call_graph(detail::ReadFile(path));
}

void WriteOut(const Options& o, const std::string& name, const std::string& content) {
  if (o.out.empty()) return;
  fs::create_directories(o.out);
  detail::WriteFile(fs::path(o.out) / name, content);
}

std::vector<DecisionRule> Rules(const ToolConfig& cfg) {
  if (cfg.rules.empty()) return builtin_rules();
  std::error_code ec;
  if (!fs::is_regular_file(cfg.rules, ec)) throw InputError("config key rules: file not found: " + cfg.rules);
  return parse_rules(detail::ReadFile(cfg.rules));
}

std::string UtcNow() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Mock unless --live; never both.
std::unique_ptr<LlmClient> MakeClient(const Options& o, const ToolConfig& cfg, bool required) {
  std::string transcript = o.mock.empty() ? cfg.transcript : o.mock;
  if (o.live && !transcript.empty()) throw InputError("--live and a mock transcript are mutually exclusive");
  if (!transcript.empty()) {
    std::error_code ec;
    if (!fs::is_regular_file(transcript, ec)) throw InputError("transcript not found: " + transcript);
    return std::make_unique<ScriptedClient>(ScriptedClient::FromFile(transcript));
  }
  if (o.live) {
    if (cfg.endpoint.empty()) throw InputError("config key endpoint: required with --live");
    if (cfg.model.empty()) throw InputError("config key model: required with --live");
    return std::make_unique<HttpClient>(HttpClientOptions{cfg.endpoint, cfg.model, "", cfg.api_flavor});
  }
  if (required) throw InputError("campaign needs --mock TRANSCRIPT or --live");
  return nullptr;
}

int ExtractGraph(const Options& o) {
  auto cfg = LoadConfig(o);
  CallGraph g = [&] {
    if (cfg.extractor.empty()) {
      std::vector<std::string> warnings;
      ClangOptions copts;
      copts.entry = cfg.entry;
      auto doc = extract_with_clang(o.src, copts, &warnings);
      for (const auto& w : warnings) std::cerr << "pilot: warning: " << w << "\n";
      return call_graph_from_json(doc);
    }
    return run_extractor(o.src, cfg.extractor);
  }();
  WriteOut(o, "graph.json", to_document(g).dump(2) + "\n");
  std::cout << "functions: " << g.size() << "\nedges: " << g.edges().size() << "\n";
  return 0;
}

nlohmann::json FeaturesJson(const StructuralFeatures& f) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& name : feature_names()) j[name] = *feature_value(f, name);
  return j;
}

int Features(const Options& o) {
  LoadConfig(o);
  auto j = FeaturesJson(structural_features(ReadGraph(o.graph)));
  WriteOut(o, "features.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

int Recommend(const Options& o) {
  auto cfg = LoadConfig(o);
  auto features = structural_features(ReadGraph(o.graph));
  auto rec = recommend(features, Rules(cfg), cfg.campaign.confidence_floor);
  nlohmann::json per;
  for (const auto& [s, c] : rec.per_strategy_confidence) per[std::string(strategy_name(s))] = c;
  nlohmann::json j{{"strategy", std::string(strategy_name(rec.strategy))},
                   {"confidence", rec.confidence},
                   {"matched", rec.matched},
                   {"per_strategy", per},
                   {"features", FeaturesJson(features)}};
  WriteOut(o, "recommendation.json", j.dump(2) + "\n");
  char conf[32];
  std::snprintf(conf, sizeof conf, "%.4f", rec.confidence);
  std::cout << "strategy: " << strategy_name(rec.strategy) << "\nconfidence: " << conf << "\n";
  for (const auto& m : rec.matched) std::cout << "matched: " << m << "\n";
  return 0;
}

int RunCampaignCommand(const Options& o) {
  auto cfg = LoadConfig(o);
  auto g = ReadGraph(o.graph);
  if (!fs::is_directory(o.src)) throw InputError("source directory not found: " + o.src);
  auto client = MakeClient(o, cfg, true);
  std::string program = cfg.program.empty() ? fs::path(o.src).lexically_normal().filename().string() : cfg.program;
  if (program.empty() || program == "." || program == "..") program = fs::canonical(o.src).filename().string();
  fs::create_directories(o.out);
  auto workdir = cfg.workdir.empty() ? fs::path(o.out) / "work" : fs::path(cfg.workdir);
  auto ws = Workspace::Create(o.src, workdir, program);
  std::unique_ptr<CoverageCollector> collector;
  if (cfg.coverage_command.empty()) {
    collector = std::make_unique<FileCollector>(cfg.coverage_file);
  } else {
    collector = std::make_unique<CommandCollector>(cfg.coverage_command, cfg.coverage_reset_command);
  }

  auto result = run_campaign(g, cfg.campaign, Rules(cfg), *client, ws, *collector);
  auto ledger = campaign_ledger(result, program, o.now.empty() ? UtcNow() : o.now, cfg.prices);
  WriteOut(o, "ledger.json", ledger.dump(2) + "\n");
  if (o.plot) WriteOut(o, "coverage.csv", coverage_csv(result));
  fs::create_directories(fs::path(o.out) / "scripts");
  for (const auto& s : result.scripts) {
    fs::copy_file(ws.root() / s, fs::path(o.out) / "scripts" / s, fs::copy_options::overwrite_existing);
  }

  std::cout << "workspace: " << ws.root().string() << "\nstrategy: " << strategy_name(result.strategy) << "\n";
  for (const auto& t : result.processed) {
    std::cout << "target " << render_function(t.function) << ": " << outcome_name(t.outcome) << " after "
              << t.attempts.size() << " attempt(s)\n";
  }
  std::cout << "covered functions: " << result.cumulative.covered_functions().size()
            << "\ntaken branches: " << result.cumulative.taken_branches().size()
            << "\nchats: " << result.usage.chat_count << "\n";
  if (result.aborted) {
    std::cerr << "pilot: campaign stopped early: " << result.abort_reason << "\n";
    return 2;
  }
  return 0;
}

// run_test<k>.sh in the workspace root, by k.
std::vector<std::string> DefaultScripts(const Workspace& ws) {
  static const std::regex kName(R"(run_test(\d+)\.sh)");
  std::vector<std::pair<long, std::string>> found;
  for (const auto& e : fs::directory_iterator(ws.root())) {
    std::smatch m;
    auto name = e.path().filename().string();
    if (e.is_regular_file() && std::regex_match(name, m, kName)) found.emplace_back(std::stol(m[1]), name);
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> out;
  for (auto& [k, name] : found) out.push_back(std::move(name));
  return out;
}

int Seeds(const Options& o) {
  auto cfg = LoadConfig(o);
  if (cfg.program.empty()) throw InputError("config key program: required for seeds");
  auto ws = Workspace::Open(o.workspace, cfg.program);
  auto scripts = o.scripts.empty() ? DefaultScripts(ws) : o.scripts;
  if (scripts.empty()) throw InputError("no run_test scripts in " + o.workspace);
  auto client = MakeClient(o, cfg, false);
  auto corpus = fs::path(o.out) / "corpus";
  fs::create_directories(corpus);
  auto artifacts = materialize_corpus(ws, scripts, corpus, cfg.campaign.script_timeout_s);
  std::vector<SeedArtifact> kept;
  TokenUsage usage;
  for (auto& a : artifacts) {
    auto text = detail::ReadFile(ws.root() / a.source_script);
    try {
      auto ex = extract_seed_line(text, cfg.program, client.get(), cfg.campaign.conversation.params);
      usage += ex.usage;
      a.seed_line = ex.line;
      a.line_source = ex.source;
    } catch (const InputError& e) {
      std::cerr << "pilot: skipping " << a.source_script << ": " << e.what() << "\n";
      fs::remove_all(corpus / a.seed_id);
      continue;
    }
    for (const auto& w : a.warnings) std::cerr << "pilot: " << a.source_script << ": " << w << "\n";
    kept.push_back(std::move(a));
  }
  if (kept.empty()) throw InputError("no script invokes " + cfg.program);
  write_corpus(kept, cfg.seed_format, corpus);
  for (const auto& a : kept) std::cout << a.seed_id << ": " << a.seed_line << "\n";
  if (usage.chat_count) std::cout << "chats: " << usage.chat_count << "\n";
  return 0;
}

int ReportCost(const Options& o) {
  auto cfg = LoadConfig(o);
  std::error_code ec;
  if (!fs::is_regular_file(o.ledger, ec)) throw InputError("ledger not found: " + o.ledger);
  auto doc = nlohmann::json::parse(detail::ReadFile(o.ledger), nullptr, false);
  if (doc.is_discarded()) throw InputError("ledger is not JSON: " + o.ledger);
  auto usage = ledger_usage(doc);
  double usd = cost(usage, cfg.prices);
  char line[64];
  std::snprintf(line, sizeof line, "$%.2f", usd);
  std::cout << "input tokens: " << usage.input_tokens << "\noutput tokens: " << usage.output_tokens
            << "\nchats: " << usage.chat_count << "\ncost: " << line << "\n";
  WriteOut(o, "cost.json",
           nlohmann::json{{"input_tokens", usage.input_tokens},
                          {"output_tokens", usage.output_tokens},
                          {"chat_count", usage.chat_count},
                          {"usd_per_million_input", cfg.prices.usd_per_million_input},
                          {"usd_per_million_output", cfg.prices.usd_per_million_output},
                          {"cost_usd", usd}}
                   .dump(2) +
               "\n");
  return 0;
}

int CoverageConvert(const Options& o) {
  std::string text;
  if (o.gcov == "-") {
    text.assign(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
  } else {
    std::error_code ec;
    if (!fs::is_regular_file(o.gcov, ec)) throw InputError("gcov file not found: " + o.gcov);
    text = detail::ReadFile(o.gcov);
  }
  std::cout << serialize_report(convert_gcov_json(text));
  return 0;
}

}  // namespace
}  // namespace pilot

int main(int argc, char** argv) {
  using namespace pilot;
  CLI::App app{"Seed generation for command-line fuzzing"};
  app.require_subcommand(1);
  Options o;

  auto* extract = app.add_subcommand("extract-graph", "Build the call graph document of a source tree");
  extract->add_option("--src", o.src, "Source directory")->required();
  extract->add_option("--out", o.out, "Output directory")->required();

  auto* features = app.add_subcommand("features", "Structural features of a call graph");
  features->add_option("--graph", o.graph, "Call graph document")->required();
  features->add_option("--out", o.out, "Output directory");

  auto* rec = app.add_subcommand("recommend", "Recommend a target selection strategy");
  rec->add_option("--graph", o.graph, "Call graph document")->required();
  rec->add_option("--out", o.out, "Output directory");

  auto* campaign = app.add_subcommand("campaign", "Run the seed generation campaign");
  campaign->add_option("--graph", o.graph, "Call graph document")->required();
  campaign->add_option("--src", o.src, "Program source directory")->required();
  campaign->add_option("--out", o.out, "Output directory")->required();
  campaign->add_option("--mock", o.mock, "Replay this transcript instead of a live model");
  campaign->add_flag("--live", o.live, "Contact the configured endpoint");
  campaign->add_option("--now", o.now, "Timestamp recorded in the ledger");
  campaign->add_flag("--plot", o.plot, "Also write coverage.csv");

  auto* seeds = app.add_subcommand("seeds", "Turn a workspace's test scripts into a seed corpus");
  seeds->add_option("--workspace", o.workspace, "Campaign workspace")->required();
  seeds->add_option("--out", o.out, "Output directory")->required();
  seeds->add_option("--scripts", o.scripts, "Scripts to use (default: all run_test<k>.sh)");
  seeds->add_option("--mock", o.mock, "Replay this transcript for line extraction");
  seeds->add_flag("--live", o.live, "Use the configured endpoint for line extraction");

  auto* report = app.add_subcommand("report-cost", "Token usage and cost of a campaign ledger");
  report->add_option("--ledger", o.ledger, "Ledger written by campaign")->required();
  report->add_option("--out", o.out, "Output directory");

  auto* convert = app.add_subcommand("coverage-convert", "gcov JSON to the canonical coverage report");
  convert->add_option("--gcov", o.gcov, "Output of gcov --json-format --stdout, or - for stdin")->required();

  for (auto* cmd : {extract, features, rec, campaign, seeds, report}) AddConfigFlags(cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (extract->parsed()) return ExtractGraph(o);
    if (features->parsed()) return Features(o);
    if (rec->parsed()) return Recommend(o);
    if (campaign->parsed()) return RunCampaignCommand(o);
    if (seeds->parsed()) return Seeds(o);
    if (report->parsed()) return ReportCost(o);
    if (convert->parsed()) return CoverageConvert(o);
  } catch (const InputError& e) {
    std::cerr << "pilot: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "pilot: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
