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

// Whole-graph shape statistics consumed by the strategy rules.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pilot/callgraph.hpp"
#include "pilot/centrality.hpp"
#include "pilot/error.hpp"

namespace pilot {

enum class TopShareMode {
  kTopDecile,  // ceil(0.10 * n) largest values
  kTopTen,     // min(10, n) largest values
};

enum class SkewMode {
  kAdjusted,    // bias-corrected Fisher-Pearson G1, needs n >= 3
  kPopulation,  // plain g1 = m3 / m2^1.5
};

struct FeatureOptions {
  CentralityOptions centrality;
  TopShareMode top_share = TopShareMode::kTopDecile;
  SkewMode skew = SkewMode::kAdjusted;
};

struct DistributionStats {
  double gini = 0.0;
  double skew = 0.0;
  double top10_concentration = 0.0;
  bool skew_defined = true;
};

struct SkewResult {
  double value = 0.0;
  bool defined = true;
};

inline SkewResult sample_skewness(const std::vector<double>& values,
                                  SkewMode mode = SkewMode::kAdjusted) {
  const double n = static_cast<double>(values.size());
  if (values.empty()) return {0.0, false};
  if (mode == SkewMode::kAdjusted && values.size() < 3) return {0.0, false};
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0;
  for (double x : values) {
    double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  // Constant samples: relative spread below rounding noise.
  if (m2 <= 1e-24 * std::max(1.0, mean * mean)) return {0.0, false};
  double g1 = m3 / std::pow(m2, 1.5);
  if (mode == SkewMode::kPopulation) return {g1, true};
  return {g1 * std::sqrt(n * (n - 1.0)) / (n - 2.0), true};
}

inline double gini_coefficient(std::vector<double> values) {
  if (values.empty()) throw InputError("gini of an empty list");
  std::sort(values.begin(), values.end());
  if (values.front() == values.back() && values.front() > 0) return 0.0;
  const double n = static_cast<double>(values.size());
  double total = 0.0, weighted = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < 0) throw InputError("gini of a negative value");
    total += values[i];
    weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * values[i];
  }
  if (total <= 0) throw InputError("gini undefined for an all-zero list");
  return std::max(0.0, weighted / (n * total));
}

inline double top_share(std::vector<double> values, TopShareMode mode = TopShareMode::kTopDecile) {
  if (values.empty()) throw InputError("top share of an empty list");
  std::sort(values.begin(), values.end(), std::greater<>());
  std::size_t k = mode == TopShareMode::kTopDecile
                      ? static_cast<std::size_t>(std::ceil(0.10 * static_cast<double>(values.size())))
                      : std::min<std::size_t>(10, values.size());
  k = std::max<std::size_t>(k, 1);
  double total = std::accumulate(values.begin(), values.end(), 0.0);
  if (total <= 0) throw InputError("top share undefined for an all-zero list");
  double top = std::accumulate(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
  return top / total;
}

inline DistributionStats distribution_stats(const std::vector<double>& values,
                                            const FeatureOptions& opts = {}) {
  if (values.empty()) throw InputError("distribution stats of an empty list");
  DistributionStats s;
  s.gini = gini_coefficient(values);
  auto sk = sample_skewness(values, opts.skew);
  s.skew = sk.value;
  s.skew_defined = sk.defined;
  s.top10_concentration = top_share(values, opts.top_share);
  return s;
}

struct StructuralFeatures {
  std::int64_t node_count = 0;
  std::int64_t edge_count = 0;
  double density = 0.0;
  std::int64_t diameter = 0;
  double avg_shortest_path = 0.0;
  std::int64_t largest_scc_size = 0;
  double largest_scc_ratio = 0.0;
  double pagerank_gini = 0.0;
  double pagerank_skew = 0.0;
  double pagerank_top10_concentration = 0.0;
  double closeness_centrality_skew = 0.0;
  double avg_clustering = 0.0;
  std::vector<std::string> warnings;
};

inline const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {
      "node_count",        "edge_count",        "density",
      "diameter",          "avg_shortest_path", "largest_scc_size",
      "largest_scc_ratio", "pagerank_gini",     "pagerank_skew",
      "pagerank_top10_concentration",           "closeness_centrality_skew",
      "avg_clustering"};
  return names;
}

inline std::optional<double> feature_value(const StructuralFeatures& f, std::string_view name) {
  if (name == "node_count") return static_cast<double>(f.node_count);
  if (name == "edge_count") return static_cast<double>(f.edge_count);
  if (name == "density") return f.density;
  if (name == "diameter") return static_cast<double>(f.diameter);
  if (name == "avg_shortest_path") return f.avg_shortest_path;
  if (name == "largest_scc_size") return static_cast<double>(f.largest_scc_size);
  if (name == "largest_scc_ratio") return f.largest_scc_ratio;
  if (name == "pagerank_gini") return f.pagerank_gini;
  if (name == "pagerank_skew") return f.pagerank_skew;
  if (name == "pagerank_top10_concentration") return f.pagerank_top10_concentration;
  if (name == "closeness_centrality_skew") return f.closeness_centrality_skew;
  if (name == "avg_clustering") return f.avg_clustering;
  return std::nullopt;
}

// Sizes of the strongly connected components (iterative Tarjan).
inline std::vector<std::size_t> scc_sizes(const Digraph& g) {
  const std::size_t n = g.size();
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, kUnset), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<NodeId> stack;
  std::vector<std::size_t> sizes;
  std::size_t counter = 0;
  struct Frame {
    NodeId v;
    std::size_t next;
  };
  for (NodeId root = 0; root < n; ++root) {
    if (index[root] != kUnset) continue;
    std::vector<Frame> frames{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!frames.empty()) {
      Frame& f = frames.back();
      if (f.next < g.out[f.v].size()) {
        NodeId w = g.out[f.v][f.next++];
        if (index[w] == kUnset) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          frames.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      NodeId v = f.v;
      frames.pop_back();
      if (!frames.empty()) low[frames.back().v] = std::min(low[frames.back().v], low[v]);
      if (low[v] == index[v]) {
        std::size_t size = 0;
        NodeId w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          ++size;
        } while (w != v);
        sizes.push_back(size);
      }
    }
  }
  return sizes;
}

namespace detail {

inline std::vector<std::vector<NodeId>> UndirectedAdjacency(const Digraph& g) {
  std::vector<std::vector<NodeId>> adj(g.size());
  for (NodeId u = 0; u < g.size(); ++u) {
    for (NodeId v : g.out[u]) {
      if (u == v) continue;
      adj[u].push_back(v);
      adj[v].push_back(u);
    }
  }
  for (auto& l : adj) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  return adj;
}

// Nodes of the largest weakly connected component; ties go to the component
// holding the smallest node id.
inline std::vector<NodeId> LargestWeakComponent(const std::vector<std::vector<NodeId>>& adj) {
  std::vector<int> comp(adj.size(), -1);
  std::vector<NodeId> best;
  int label = 0;
  for (NodeId s = 0; s < adj.size(); ++s) {
    if (comp[s] >= 0) continue;
    std::vector<NodeId> members{s};
    comp[s] = label;
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (NodeId w : adj[members[i]]) {
        if (comp[w] < 0) {
          comp[w] = label;
          members.push_back(w);
        }
      }
    }
    if (members.size() > best.size()) best = std::move(members);
    ++label;
  }
  return best;
}

}  // namespace detail

inline StructuralFeatures structural_features(const Digraph& g, const FeatureOptions& opts = {}) {
  const std::size_t n = g.size();
  if (n == 0) throw InputError("structural features of an empty graph");
  StructuralFeatures f;
  f.node_count = static_cast<std::int64_t>(n);
  f.edge_count = static_cast<std::int64_t>(g.edge_count());
  f.density = n > 1 ? static_cast<double>(f.edge_count) / (static_cast<double>(n) * static_cast<double>(n - 1))
                    : 0.0;

  auto adj = detail::UndirectedAdjacency(g);
  auto members = detail::LargestWeakComponent(adj);
  std::int64_t diameter = 0;
  double dist_sum = 0.0;
  std::vector<std::int64_t> dist(n);
  for (NodeId s : members) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[s] = 0;
    std::deque<NodeId> q{s};
    while (!q.empty()) {
      NodeId u = q.front();
      q.pop_front();
      for (NodeId w : adj[u]) {
        if (dist[w] >= 0) continue;
        dist[w] = dist[u] + 1;
        diameter = std::max(diameter, dist[w]);
        dist_sum += static_cast<double>(dist[w]);
        q.push_back(w);
      }
    }
  }
  const double m = static_cast<double>(members.size());
  f.diameter = diameter;
  f.avg_shortest_path = members.size() > 1 ? dist_sum / (m * (m - 1.0)) : 0.0;

  auto sizes = scc_sizes(g);
  f.largest_scc_size = static_cast<std::int64_t>(*std::max_element(sizes.begin(), sizes.end()));
  f.largest_scc_ratio = static_cast<double>(f.largest_scc_size) / static_cast<double>(n);

  auto pr = pagerank_scores(g, opts.centrality.damping, opts.centrality.pagerank_tolerance,
                            opts.centrality.pagerank_max_iterations);
  auto pr_stats = distribution_stats(pr, opts);
  f.pagerank_gini = pr_stats.gini;
  f.pagerank_skew = pr_stats.skew;
  f.pagerank_top10_concentration = pr_stats.top10_concentration;
  if (!pr_stats.skew_defined) f.warnings.push_back("pagerank_skew undefined, reported as 0");

  auto close = sample_skewness(closeness_scores(g, opts.centrality.closeness), opts.skew);
  f.closeness_centrality_skew = close.value;
  if (!close.defined) f.warnings.push_back("closeness_centrality_skew undefined, reported as 0");

  double clustering = 0.0;
  for (NodeId v = 0; v < n; ++v) {
    const auto& nb = adj[v];
    if (nb.size() < 2) continue;
    std::size_t links = 0;
    for (std::size_t i = 0; i < nb.size(); ++i) {
      for (std::size_t j = i + 1; j < nb.size(); ++j) {
        if (std::binary_search(adj[nb[i]].begin(), adj[nb[i]].end(), nb[j])) ++links;
      }
    }
    double k = static_cast<double>(nb.size());
    clustering += 2.0 * static_cast<double>(links) / (k * (k - 1.0));
  }
  f.avg_clustering = clustering / static_cast<double>(n);
  return f;
}

inline StructuralFeatures structural_features(const CallGraph& g, const FeatureOptions& opts = {}) {
  return structural_features(g.digraph(), opts);
}

// Flat "key = value" dump, one feature per line, in feature_names() order.
inline std::string dump_features(const StructuralFeatures& f) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& name : feature_names()) out << name << " = " << *feature_value(f, name) << "\n";
  return out.str();
}

}  // namespace pilot
