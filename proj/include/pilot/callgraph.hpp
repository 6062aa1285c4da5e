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

// Static function-call graph of the program under test.
//
// The canonical document consumed here is what every extractor emits:
//
//   {"entry": "main",
//    "nodes": [{"name": "main", "file": "m.c", "line": 1}, ...],
//    "edges": [{"caller": "main", "callee": "f"}, ...]}
//
// Nodes are stored sorted by name, so node ids order lexicographically and
// every adjacency list is sorted the same way. Graphs are immutable after
// construction; coverage-driven pruning goes through CallGraphView.

#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pilot/error.hpp"

namespace pilot {

using NodeId = std::size_t;

struct FunctionRef {
  std::string name;
  std::string file;
  int line = 1;

  friend bool operator==(const FunctionRef&, const FunctionRef&) = default;
};

// Plain adjacency structure shared by the graph algorithms. Node ids are
// dense, names are sorted ascending, adjacency lists are sorted ascending.
struct Digraph {
  std::vector<std::string> names;
  std::vector<std::vector<NodeId>> out;
  std::vector<std::vector<NodeId>> in;

  std::size_t size() const { return names.size(); }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& o : out) n += o.size();
    return n;
  }

  std::optional<NodeId> find(std::string_view name) const {
    auto it = std::lower_bound(names.begin(), names.end(), name);
    if (it == names.end() || *it != name) return std::nullopt;
    return static_cast<NodeId>(it - names.begin());
  }

  bool has_edge(NodeId from, NodeId to) const {
    return std::binary_search(out[from].begin(), out[from].end(), to);
  }

  // Builds from arbitrary names and (from, to) index pairs. Names must be
  // unique; duplicate edges collapse.
  static Digraph FromEdges(std::vector<std::string> names,
                           const std::vector<std::pair<std::string, std::string>>& edges) {
    Digraph g;
    std::sort(names.begin(), names.end());
    g.names = std::move(names);
    g.out.resize(g.names.size());
    g.in.resize(g.names.size());
    for (const auto& [a, b] : edges) {
      auto u = g.find(a);
      auto v = g.find(b);
      if (!u || !v) throw InputError("edge endpoint not in node set: " + (u ? b : a));
      g.out[*u].push_back(*v);
      g.in[*v].push_back(*u);
    }
    for (auto* lists : {&g.out, &g.in}) {
      for (auto& l : *lists) {
        std::sort(l.begin(), l.end());
        l.erase(std::unique(l.begin(), l.end()), l.end());
      }
    }
    return g;
  }
};

class CallGraph {
 public:
  CallGraph() = default;

  // Validates and builds. Throws InputError naming the first violation.
  static CallGraph Build(std::vector<FunctionRef> nodes,
                         const std::vector<std::pair<std::string, std::string>>& edges,
                         const std::string& entry) {
    CallGraph cg;
    std::sort(nodes.begin(), nodes.end(),
              [](const FunctionRef& a, const FunctionRef& b) { return a.name < b.name; });
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& n = nodes[i];
      if (n.name.empty()) throw InputError("node with empty name");
      if (n.line < 1) throw InputError("node " + n.name + " has line < 1");
      if (i > 0 && nodes[i - 1].name == n.name) {
        throw InputError("duplicate node name " + n.name);
      }
    }
    std::vector<std::string> names;
    names.reserve(nodes.size());
    for (const auto& n : nodes) names.push_back(n.name);
    std::set<std::string> known(names.begin(), names.end());
    for (const auto& [a, b] : edges) {
      if (!known.count(a)) throw InputError("dangling endpoint " + a);
      if (!known.count(b)) throw InputError("dangling endpoint " + b);
    }
    if (entry.empty()) throw InputError("missing entry");
    if (!known.count(entry)) throw InputError("unknown entry " + entry);
    cg.refs_ = std::move(nodes);
    cg.graph_ = Digraph::FromEdges(std::move(names), edges);
    cg.entry_ = *cg.graph_.find(entry);
    return cg;
  }

  std::size_t size() const { return refs_.size(); }
  bool empty() const { return refs_.empty(); }
  const Digraph& digraph() const { return graph_; }
  const std::vector<FunctionRef>& functions() const { return refs_; }
  const FunctionRef& function(NodeId id) const { return refs_[id]; }
  NodeId entry() const { return entry_; }
  const FunctionRef& entry_function() const { return refs_[entry_]; }
  std::optional<NodeId> find(std::string_view name) const { return graph_.find(name); }

  NodeId require(std::string_view name) const {
    auto id = find(name);
    if (!id) throw InputError("unknown function " + std::string(name));
    return *id;
  }

  const std::vector<NodeId>& callees(NodeId id) const { return graph_.out[id]; }
  const std::vector<NodeId>& callers(NodeId id) const { return graph_.in[id]; }
  bool has_edge(NodeId from, NodeId to) const { return graph_.has_edge(from, to); }

  std::vector<std::pair<std::string, std::string>> edges() const {
    std::vector<std::pair<std::string, std::string>> e;
    for (NodeId u = 0; u < size(); ++u) {
      for (NodeId v : graph_.out[u]) e.emplace_back(refs_[u].name, refs_[v].name);
    }
    return e;
  }

 private:
  std::vector<FunctionRef> refs_;
  Digraph graph_;
  NodeId entry_ = 0;
};

inline CallGraph call_graph_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.is_object()) throw InputError("malformed graph document: not an object");
    if (!doc.contains("entry") || !doc.at("entry").is_string()) {
      throw InputError("missing entry");
    }
    if (!doc.contains("nodes") || !doc.at("nodes").is_array()) {
      throw InputError("malformed graph document: nodes must be an array");
    }
    std::vector<FunctionRef> nodes;
    for (const auto& n : doc.at("nodes")) {
      FunctionRef ref;
      ref.name = n.at("name").get<std::string>();
      ref.file = n.value("file", std::string{});
      ref.line = n.value("line", 1);
      nodes.push_back(std::move(ref));
    }
    std::vector<std::pair<std::string, std::string>> edges;
    if (doc.contains("edges")) {
      if (!doc.at("edges").is_array()) {
        throw InputError("malformed graph document: edges must be an array");
      }
      for (const auto& e : doc.at("edges")) {
        edges.emplace_back(e.at("caller").get<std::string>(), e.at("callee").get<std::string>());
      }
    }
    return CallGraph::Build(std::move(nodes), edges, doc.at("entry").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed graph document: ") + e.what());
  }
}

inline CallGraph load_call_graph(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("malformed graph document: ") + e.what());
  }
  return call_graph_from_json(doc);
}

inline nlohmann::json to_document(const CallGraph& g) {
  nlohmann::json doc;
  doc["entry"] = g.entry_function().name;
  doc["nodes"] = nlohmann::json::array();
  for (const auto& f : g.functions()) {
    doc["nodes"].push_back({{"name", f.name}, {"file", f.file}, {"line", f.line}});
  }
  doc["edges"] = nlohmann::json::array();
  for (const auto& [a, b] : g.edges()) doc["edges"].push_back({{"caller", a}, {"callee", b}});
  return doc;
}

// The graph with a set of functions hidden from target scoring. The
// underlying graph is untouched; paths are still enumerated on it.
class CallGraphView {
 public:
  explicit CallGraphView(const CallGraph& g) : graph_(&g), hidden_(g.size(), false) {}

  void hide(std::string_view name) {
    if (auto id = graph_->find(name)) hidden_[*id] = true;
  }

  bool visible(NodeId id) const { return !hidden_[id]; }
  bool visible(std::string_view name) const {
    auto id = graph_->find(name);
    return id && !hidden_[*id];
  }

  const CallGraph& graph() const { return *graph_; }

  std::vector<std::string> nodes() const {
    std::vector<std::string> out;
    for (NodeId i = 0; i < hidden_.size(); ++i) {
      if (!hidden_[i]) out.push_back(graph_->function(i).name);
    }
    return out;
  }

  bool empty() const { return std::find(hidden_.begin(), hidden_.end(), false) == hidden_.end(); }

  // Subgraph induced by the visible nodes.
  Digraph digraph() const {
    std::vector<std::pair<std::string, std::string>> edges;
    for (const auto& [a, b] : graph_->edges()) {
      if (visible(std::string_view(a)) && visible(std::string_view(b))) edges.emplace_back(a, b);
    }
    return Digraph::FromEdges(nodes(), edges);
  }

 private:
  const CallGraph* graph_;
  std::vector<bool> hidden_;
};

template <typename Names>
CallGraphView mark_covered(const CallGraph& g, const Names& covered) {
  CallGraphView view(g);
  for (const auto& name : covered) view.hide(name);
  return view;
}

}  // namespace pilot
