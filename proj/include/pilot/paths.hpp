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

// Candidate call paths from the entry function to a target.
//
// Paths are enumerated with Yen's k-shortest loopless paths algorithm over
// unit edge weights. Output order is total: shorter paths first, equal
// lengths by the lexicographic sequence of function names. Because node ids
// are assigned in name order, the id sequence compares the same way.
//
// To make Yen's algorithm exact under that order, every spur search returns
// the lexicographically smallest among the shortest spur paths: distances to
// the target are computed backwards by BFS, then the walk forward always
// takes the smallest-id successor that stays on a shortest route.

#pragma once

#include <cstddef>
#include <deque>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pilot/callgraph.hpp"

namespace pilot {

using CallPath = std::vector<FunctionRef>;

inline constexpr std::size_t kDefaultMaxPaths = 100;
inline constexpr std::size_t kUnboundedPaths = std::numeric_limits<std::size_t>::max();

namespace detail {

using IdPath = std::vector<NodeId>;

struct PathOrder {
  bool operator()(const IdPath& a, const IdPath& b) const {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  }
};

// Lexicographically smallest shortest path from `from` to `to`, avoiding
// `blocked` nodes and the edges from `from` to any of `cut_successors`.
inline std::optional<IdPath> SpurPath(const Digraph& g, NodeId from, NodeId to,
                                      const std::vector<bool>& blocked,
                                      const std::set<NodeId>& cut_successors) {
  constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max();
  auto edge_ok = [&](NodeId u, NodeId v) {
    if (u == v || blocked[u] || blocked[v]) return false;
    return !(u == from && cut_successors.count(v));
  };
  std::vector<std::size_t> dist(g.size(), kInf);
  std::deque<NodeId> queue{to};
  dist[to] = 0;
  while (!queue.empty()) {
    NodeId v = queue.front();
    queue.pop_front();
    if (v == from) break;
    for (NodeId u : g.in[v]) {
      if (dist[u] != kInf || !edge_ok(u, v)) continue;
      dist[u] = dist[v] + 1;
      queue.push_back(u);
    }
  }
  if (dist[from] == kInf) return std::nullopt;
  IdPath path{from};
  NodeId cur = from;
  while (cur != to) {
    for (NodeId v : g.out[cur]) {
      if (dist[v] != kInf && dist[v] + 1 == dist[cur] && edge_ok(cur, v)) {
        cur = v;
        break;
      }
    }
    path.push_back(cur);
  }
  return path;
}

inline std::vector<IdPath> YenPaths(const Digraph& g, NodeId source, NodeId target,
                                    std::size_t k_max) {
  std::vector<IdPath> accepted;
  if (k_max == 0) return accepted;
  if (source == target) return {{source}};
  std::vector<bool> blocked(g.size(), false);
  auto first = SpurPath(g, source, target, blocked, {});
  if (!first) return accepted;
  accepted.push_back(*first);
  std::set<IdPath, PathOrder> seen{*first};
  std::set<IdPath, PathOrder> candidates;

  while (accepted.size() < k_max) {
    const IdPath prev = accepted.back();
    for (std::size_t i = 0; i + 1 < prev.size(); ++i) {
      NodeId spur_node = prev[i];
      std::set<NodeId> cut;
      for (const auto& p : accepted) {
        if (p.size() > i + 1 && std::equal(p.begin(), p.begin() + i + 1, prev.begin())) {
          cut.insert(p[i + 1]);
        }
      }
      std::fill(blocked.begin(), blocked.end(), false);
      for (std::size_t j = 0; j < i; ++j) blocked[prev[j]] = true;
      auto spur = SpurPath(g, spur_node, target, blocked, cut);
      if (!spur) continue;
      IdPath total(prev.begin(), prev.begin() + i);
      total.insert(total.end(), spur->begin(), spur->end());
      if (!seen.count(total)) candidates.insert(std::move(total));
    }
    if (candidates.empty()) break;
    auto best = candidates.begin();
    accepted.push_back(*best);
    seen.insert(*best);
    candidates.erase(best);
  }
  return accepted;
}

}  // namespace detail

// Up to `k_max` simple paths from the entry to `target`, in (length, name
// sequence) order. Empty when the target is unreachable.
inline std::vector<CallPath> enumerate_paths(const CallGraph& g, std::string_view target,
                                             std::size_t k_max = kDefaultMaxPaths) {
  NodeId t = g.require(target);
  std::vector<CallPath> out;
  for (const auto& ids : detail::YenPaths(g.digraph(), g.entry(), t, k_max)) {
    CallPath p;
    p.reserve(ids.size());
    for (NodeId id : ids) p.push_back(g.function(id));
    out.push_back(std::move(p));
  }
  return out;
}

inline constexpr std::string_view kPathArrow = "\xE2\x86\x92 ";  // "→ "

inline std::string render_function(const FunctionRef& f) {
  return f.name + "@" + f.file + ":" + std::to_string(f.line);
}

inline std::string render_path(const CallPath& p) {
  std::string text;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i > 0) {
      text += '\n';
      text += kPathArrow;
    }
    text += render_function(p[i]);
  }
  return text;
}

// Inverse of render_path. The name is everything before the last '@', so
// disambiguated names such as "helper@b.c" survive the round trip.
inline CallPath parse_rendered_path(std::string_view text) {
  CallPath path;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty()) continue;
    if (line.substr(0, kPathArrow.size()) == kPathArrow) line.remove_prefix(kPathArrow.size());
    std::size_t colon = line.rfind(':');
    std::size_t at = line.rfind('@', colon);
    if (colon == line.npos || at == line.npos || at == 0) {
      throw InputError("malformed path line: " + std::string(line));
    }
    FunctionRef f;
    f.name = std::string(line.substr(0, at));
    f.file = std::string(line.substr(at + 1, colon - at - 1));
    try {
      f.line = std::stoi(std::string(line.substr(colon + 1)));
    } catch (const std::exception&) {
      throw InputError("malformed path line: " + std::string(line));
    }
    path.push_back(std::move(f));
  }
  return path;
}

}  // namespace pilot
