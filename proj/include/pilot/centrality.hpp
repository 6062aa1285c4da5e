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

// Per-function centrality scores used to rank target functions.
//
//   CLOSE  closeness with Wasserman-Faust component scaling:
//            (r-1)/sum(d) * (r-1)/(n-1), r = nodes reaching v (incl. v)
//   BET    Brandes betweenness, normalized by (n-1)(n-2)
//   DEG    (in + out) / (n-1)
//   PAGE   damped power iteration, dangling mass spread uniformly
//   RANDOM seeded permutation, scores (n - position) / n

#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pilot/callgraph.hpp"
#include "pilot/error.hpp"

namespace pilot {

enum class Strategy { kClose, kBet, kDeg, kPage, kRandom };

inline constexpr Strategy kAllStrategies[] = {Strategy::kClose, Strategy::kBet, Strategy::kDeg,
                                              Strategy::kPage, Strategy::kRandom};

inline std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kClose: return "CLOSE";
    case Strategy::kBet: return "BET";
    case Strategy::kDeg: return "DEG";
    case Strategy::kPage: return "PAGE";
    case Strategy::kRandom: return "RANDOM";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view text) {
  std::string upper(text);
  for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (Strategy s : kAllStrategies) {
    if (strategy_name(s) == upper) return s;
  }
  throw InputError("unknown strategy " + std::string(text));
}

enum class ClosenessDirection { kIncoming, kOutgoing };

struct CentralityOptions {
  ClosenessDirection closeness = ClosenessDirection::kIncoming;
  double damping = 0.85;
  // L1 change between iterates; keeps the fixed-point error below 1e-9.
  double pagerank_tolerance = 1e-10;
  int pagerank_max_iterations = 200;
};

struct CentralityVector {
  Strategy strategy = Strategy::kRandom;
  std::map<std::string, double> scores;
  std::optional<std::uint64_t> rng_seed;
};

inline std::vector<double> closeness_scores(const Digraph& g,
                                            ClosenessDirection dir = ClosenessDirection::kIncoming) {
  const std::size_t n = g.size();
  const auto& adj = dir == ClosenessDirection::kIncoming ? g.in : g.out;
  std::vector<double> c(n, 0.0);
  std::vector<std::int64_t> dist(n);
  for (NodeId v = 0; v < n; ++v) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[v] = 0;
    std::deque<NodeId> q{v};
    std::int64_t total = 0;
    std::size_t reached = 1;
    while (!q.empty()) {
      NodeId u = q.front();
      q.pop_front();
      for (NodeId w : adj[u]) {
        if (dist[w] >= 0) continue;
        dist[w] = dist[u] + 1;
        total += dist[w];
        ++reached;
        q.push_back(w);
      }
    }
    if (total > 0 && n > 1) {
      double r = static_cast<double>(reached - 1);
      c[v] = (r / static_cast<double>(total)) * (r / static_cast<double>(n - 1));
    }
  }
  return c;
}

inline std::vector<double> betweenness_scores(const Digraph& g) {
  const std::size_t n = g.size();
  std::vector<double> cb(n, 0.0);
  std::vector<std::int64_t> dist(n);
  std::vector<double> sigma(n), delta(n);
  std::vector<std::vector<NodeId>> preds(n);
  std::vector<NodeId> order;
  for (NodeId s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(delta.begin(), delta.end(), 0.0);
    for (auto& p : preds) p.clear();
    order.clear();
    dist[s] = 0;
    sigma[s] = 1.0;
    std::deque<NodeId> q{s};
    while (!q.empty()) {
      NodeId v = q.front();
      q.pop_front();
      order.push_back(v);
      for (NodeId w : g.out[v]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          q.push_back(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          preds[w].push_back(v);
        }
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      NodeId w = *it;
      for (NodeId v : preds[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != s) cb[w] += delta[w];
    }
  }
  if (n > 2) {
    double scale = 1.0 / (static_cast<double>(n - 1) * static_cast<double>(n - 2));
    for (auto& x : cb) x *= scale;
  }
  return cb;
}

inline std::vector<double> degree_scores(const Digraph& g) {
  const std::size_t n = g.size();
  std::vector<double> d(n, 1.0);
  if (n <= 1) return d;
  for (NodeId v = 0; v < n; ++v) {
    d[v] = static_cast<double>(g.in[v].size() + g.out[v].size()) / static_cast<double>(n - 1);
  }
  return d;
}

inline std::vector<double> pagerank_scores(const Digraph& g, double damping = 0.85,
                                           double tolerance = 1e-10, int max_iterations = 200) {
  const std::size_t n = g.size();
  if (n == 0) return {};
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> x(n, inv_n), last(n);
  for (int iter = 0; iter < max_iterations; ++iter) {
    last.swap(x);
    double dangling = 0.0;
    for (NodeId u = 0; u < n; ++u) {
      if (g.out[u].empty()) dangling += last[u];
    }
    const double base = (damping * dangling + (1.0 - damping)) * inv_n;
    std::fill(x.begin(), x.end(), base);
    for (NodeId u = 0; u < n; ++u) {
      if (g.out[u].empty()) continue;
      const double share = damping * last[u] / static_cast<double>(g.out[u].size());
      for (NodeId v : g.out[u]) x[v] += share;
    }
    double err = 0.0;
    for (NodeId v = 0; v < n; ++v) err += std::abs(x[v] - last[v]);
    if (err < tolerance) break;
  }
  return x;
}

// Uniform integer in [0, bound) by rejection, so the stream is identical on
// every standard library.
inline std::uint64_t bounded_random(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % bound;
}

inline std::vector<double> random_scores(const Digraph& g, std::uint64_t seed) {
  const std::size_t n = g.size();
  std::vector<NodeId> perm(n);
  for (NodeId i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[bounded_random(rng, i)]);
  }
  std::vector<double> s(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    s[perm[pos]] = static_cast<double>(n - pos) / static_cast<double>(n);
  }
  return s;
}

inline CentralityVector centrality_scores(const Digraph& g, Strategy strategy,
                                          std::optional<std::uint64_t> rng_seed = std::nullopt,
                                          const CentralityOptions& opts = {}) {
  if (g.size() == 0) throw InputError("centrality of an empty graph");
  if (strategy == Strategy::kRandom && !rng_seed) {
    throw InputError("RANDOM strategy requires an rng seed");
  }
  std::vector<double> raw;
  switch (strategy) {
    case Strategy::kClose: raw = closeness_scores(g, opts.closeness); break;
    case Strategy::kBet: raw = betweenness_scores(g); break;
    case Strategy::kDeg: raw = degree_scores(g); break;
    case Strategy::kPage:
      raw = pagerank_scores(g, opts.damping, opts.pagerank_tolerance, opts.pagerank_max_iterations);
      break;
    case Strategy::kRandom: raw = random_scores(g, *rng_seed); break;
  }
  CentralityVector cv;
  cv.strategy = strategy;
  if (strategy == Strategy::kRandom) cv.rng_seed = rng_seed;
  for (NodeId i = 0; i < g.size(); ++i) cv.scores.emplace(g.names[i], raw[i]);
  return cv;
}

inline CentralityVector centrality_scores(const CallGraph& g, Strategy strategy,
                                          std::optional<std::uint64_t> rng_seed = std::nullopt,
                                          const CentralityOptions& opts = {}) {
  return centrality_scores(g.digraph(), strategy, rng_seed, opts);
}

}  // namespace pilot
