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

// pilot-callgraph SRC_DIR [--entry NAME] [--clang PATH] [-- CLANG_ARGS...]
//
// Prints the call graph document for the C sources under SRC_DIR.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pilot/extract.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Extract a call graph document from C sources with clang"};
  std::string source_dir;
  pilot::ClangOptions opts;
  app.add_option("source_dir", source_dir, "Source directory")->required();
  app.add_option("clang_args", opts.extra_args, "Extra clang arguments, after --");
  app.add_option("--entry", opts.entry, "Entry function")->capture_default_str();
  app.add_option("--clang", opts.clang, "clang executable")->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    std::vector<std::string> warnings;
    auto doc = pilot::extract_with_clang(source_dir, opts, &warnings);
    for (const auto& w : warnings) std::cerr << "pilot-callgraph: warning: " << w << "\n";
    pilot::call_graph_from_json(doc);
    std::cout << doc.dump(2) << "\n";
    return 0;
  } catch (const pilot::InputError& e) {
    std::cerr << "pilot-callgraph: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "pilot-callgraph: " << e.what() << "\n";
    return 2;
  }
}
