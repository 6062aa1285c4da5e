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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pilot/centrality.hpp"
#include "pilot/features.hpp"
#include "pilot/strategy.hpp"

namespace pilot {
namespace {

Digraph Make(std::vector<std::string> names,
             std::vector<std::pair<std::string, std::string>> edges) {
  return Digraph::FromEdges(std::move(names), edges);
}

Digraph ChainOf(std::size_t n) {
  std::vector<std::string> names;
  std::vector<std::pair<std::string, std::string>> edges;
  for (std::size_t i = 0; i < n; ++i) {
    names.push_back("c" + std::to_string(100 + i));
    if (i > 0) edges.emplace_back(names[i - 1], names[i]);
  }
  return Make(names, edges);
}

TEST(Centrality, ClosenessOnUndirectedPath) {
  auto g = Make({"a", "b", "c"}, {{"a", "b"}, {"b", "a"}, {"b", "c"}, {"c", "b"}});
  auto cv = centrality_scores(g, Strategy::kClose);
  EXPECT_DOUBLE_EQ(cv.scores["b"], 1.0);
  EXPECT_DOUBLE_EQ(cv.scores["a"], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(cv.scores["c"], 2.0 / 3.0);
}

TEST(Centrality, ClosenessDirectionSwitch) {
  auto g = ChainOf(3);
  auto in = closeness_scores(g, ClosenessDirection::kIncoming);
  auto out = closeness_scores(g, ClosenessDirection::kOutgoing);
  EXPECT_DOUBLE_EQ(in[0], 0.0);
  EXPECT_DOUBLE_EQ(out[2], 0.0);
  EXPECT_DOUBLE_EQ(in[2], out[0]);
}

TEST(Centrality, PageRankOnDirectedCycleIsUniform) {
  auto g = Make({"a", "b", "c", "d"}, {{"a", "b"}, {"b", "c"}, {"c", "d"}, {"d", "a"}});
  auto cv = centrality_scores(g, Strategy::kPage);
  for (const auto& [name, s] : cv.scores) EXPECT_NEAR(s, 0.25, 1e-12) << name;
}

TEST(Centrality, DegreeOnStar) {
  auto g = Make({"h", "l1", "l2", "l3", "l4"}, {{"h", "l1"}, {"h", "l2"}, {"h", "l3"}, {"h", "l4"}});
  auto cv = centrality_scores(g, Strategy::kDeg);
  EXPECT_DOUBLE_EQ(cv.scores["h"], 1.0);
  EXPECT_DOUBLE_EQ(cv.scores["l1"], 0.25);
  EXPECT_DOUBLE_EQ(cv.scores["l4"], 0.25);
}

TEST(Centrality, Errors) {
  EXPECT_THROW(centrality_scores(Digraph{}, Strategy::kClose), InputError);
  EXPECT_THROW(centrality_scores(ChainOf(3), Strategy::kRandom), InputError);
}

TEST(Centrality, MatchesBruteForceOracles) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    std::size_t n = 5 + rng() % 46;
    double p = std::uniform_real_distribution<double>(0.02, 0.3)(rng);
    auto g = testing::RandomDigraph(rng, n, p, trial % 4 == 0);
    auto check = [&](const std::vector<double>& got, const std::vector<double>& want, const char* what) {
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        ASSERT_NEAR(got[i], want[i], 1e-9) << what << " trial " << trial << " node " << i;
      }
    };
    check(closeness_scores(g), testing::OracleCloseness(g), "CLOSE");
    check(betweenness_scores(g), testing::OracleBetweenness(g), "BET");
    check(degree_scores(g), testing::OracleDegree(g), "DEG");
    check(pagerank_scores(g), testing::OraclePageRank(g), "PAGE");
  }
}

TEST(Centrality, PageRankIsDistribution) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = testing::RandomDigraph(rng, 3 + rng() % 40, 0.1);
    auto pr = pagerank_scores(g);
    double sum = 0;
    for (double x : pr) {
      EXPECT_GE(x, 0.0);
      sum += x;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Centrality, RandomIsSeedReproducible) {
  auto g = ChainOf(20);
  auto a = centrality_scores(g, Strategy::kRandom, 99);
  auto b = centrality_scores(g, Strategy::kRandom, 99);
  auto c = centrality_scores(g, Strategy::kRandom, 100);
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_NE(a.scores, c.scores);
  EXPECT_EQ(a.rng_seed, std::optional<std::uint64_t>(99));
  std::vector<double> values;
  for (const auto& [_, s] : a.scores) values.push_back(s);
  std::sort(values.begin(), values.end());
  for (std::size_t i = 0; i < values.size(); ++i) EXPECT_DOUBLE_EQ(values[i], (i + 1) / 20.0);
}

// Over 1000 seeds the top-ranked node is uniform over the node set, for the
// original names and for a shuffled renaming of the same graph.
TEST(Centrality, RandomTopPickIsUniform) {
  const std::size_t n = 8;
  std::mt19937_64 rng(3);
  auto base = testing::RandomDigraph(rng, n, 0.3);
  std::vector<std::string> renamed = base.names;
  std::shuffle(renamed.begin(), renamed.end(), rng);
  for (auto& s : renamed) s = "zz_" + s;
  std::vector<std::pair<std::string, std::string>> edges;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v : base.out[u]) edges.emplace_back(renamed[u], renamed[v]);
  }
  auto relabeled = Digraph::FromEdges(renamed, edges);
  for (const Digraph* g : {&base, &relabeled}) {
    std::vector<double> counts(n, 0.0);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      auto s = random_scores(*g, seed);
      counts[std::max_element(s.begin(), s.end()) - s.begin()] += 1;
    }
    double expected = 1000.0 / n, chi2 = 0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    boost::math::chi_squared dist(static_cast<double>(n - 1));
    EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.01);
  }
}

// ---------------------------------------------------------------------------

double PairwiseGini(const std::vector<double>& x) {
  double diff = 0, sum = 0;
  for (double a : x) {
    sum += a;
    for (double b : x) diff += std::abs(a - b);
  }
  double n = static_cast<double>(x.size());
  return (diff / (n * n)) / (2.0 * sum / n);
}

TEST(DistributionStats, Examples) {
  EXPECT_EQ(distribution_stats({1, 1, 1, 1}).gini, 0.0);
  EXPECT_DOUBLE_EQ(distribution_stats({0, 0, 0, 10}).top10_concentration, 1.0);
  EXPECT_NEAR(distribution_stats({1, 2, 3, 4, 5}).gini, PairwiseGini({1, 2, 3, 4, 5}), 1e-15);
  EXPECT_NEAR(distribution_stats({1, 2, 3, 4, 5}).gini, 4.0 / 15.0, 1e-15);
}

TEST(DistributionStats, Errors) {
  EXPECT_THROW(distribution_stats({}), InputError);
  EXPECT_THROW(distribution_stats({0, 0, 0}), InputError);
}

TEST(DistributionStats, SkewMatchesStandardizedMomentForm) {
  // G1 = n / ((n-1)(n-2)) * sum(((x - mean) / s)^3), s the n-1 std deviation.
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(3 + rng() % 30);
    for (auto& v : x) v = std::exponential_distribution<double>(1.0)(rng);
    double n = static_cast<double>(x.size());
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double ss = 0;
    for (double v : x) ss += (v - mean) * (v - mean);
    double s = std::sqrt(ss / (n - 1));
    double acc = 0;
    for (double v : x) acc += std::pow((v - mean) / s, 3);
    double want = n / ((n - 1) * (n - 2)) * acc;
    EXPECT_NEAR(distribution_stats(x).skew, want, 1e-9 * std::max(1.0, std::abs(want)));
  }
  auto small = distribution_stats({1, 2});
  EXPECT_FALSE(small.skew_defined);
  EXPECT_EQ(small.skew, 0.0);
}

TEST(DistributionStats, GiniRangeAndConstantVectors) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(1 + rng() % 40);
    for (auto& v : x) v = std::uniform_real_distribution<double>(0, 10)(rng);
    x[0] += 0.1;
    double g = distribution_stats(x).gini;
    EXPECT_GE(g, 0.0);
    EXPECT_LT(g, 1.0);
    EXPECT_NEAR(g, PairwiseGini(x), 1e-12);
    std::vector<double> constant(x.size(), x[0]);
    EXPECT_EQ(distribution_stats(constant).gini, 0.0);
  }
}

TEST(DistributionStats, TopShareMonotoneUnderTransferToTop) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(2 + rng() % 40);
    for (auto& v : x) v = std::uniform_real_distribution<double>(0.1, 10)(rng);
    double before = top_share(x);
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] > x[b]; });
    std::size_t top = idx.front(), low = idx.back();
    double moved = x[low] * std::uniform_real_distribution<double>(0, 1)(rng);
    x[low] -= moved;
    x[top] += moved;
    EXPECT_GE(top_share(x), before - 1e-15);
  }
}

TEST(DistributionStats, TopTenMode) {
  std::vector<double> x(20, 1.0);
  FeatureOptions opts;
  opts.top_share = TopShareMode::kTopTen;
  EXPECT_DOUBLE_EQ(distribution_stats(x, opts).top10_concentration, 0.5);
  EXPECT_DOUBLE_EQ(distribution_stats(x).top10_concentration, 0.1);
}

// ---------------------------------------------------------------------------

TEST(StructuralFeatures, ThreeChain) {
  auto f = structural_features(Make({"main", "f", "g"}, {{"main", "f"}, {"f", "g"}}));
  EXPECT_EQ(f.node_count, 3);
  EXPECT_EQ(f.edge_count, 2);
  EXPECT_NEAR(f.density, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(f.diameter, 2);
  EXPECT_NEAR(f.avg_shortest_path, 4.0 / 3.0, 1e-15);
  EXPECT_EQ(f.largest_scc_size, 1);
  EXPECT_NEAR(f.largest_scc_ratio, 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(f.avg_clustering, 0.0);
}

TEST(StructuralFeatures, CompleteDigraph) {
  auto f = structural_features(
      Make({"a", "b", "c"}, {{"a", "b"}, {"b", "a"}, {"a", "c"}, {"c", "a"}, {"b", "c"}, {"c", "b"}}));
  EXPECT_DOUBLE_EQ(f.density, 1.0);
  EXPECT_EQ(f.diameter, 1);
  EXPECT_DOUBLE_EQ(f.largest_scc_ratio, 1.0);
  EXPECT_DOUBLE_EQ(f.avg_clustering, 1.0);
}

TEST(StructuralFeatures, DiameterTenMeetsRuleBoundary) {
  auto f = structural_features(ChainOf(11));
  EXPECT_EQ(f.diameter, 10);
  EXPECT_TRUE(rule_matches(builtin_rules()[0], f));
  auto shorter = structural_features(ChainOf(10));
  EXPECT_FALSE(rule_matches(builtin_rules()[0], shorter));
}

TEST(StructuralFeatures, DisconnectedUsesLargestWeakComponent) {
  // 4-chain plus an isolated pair; diameter comes from the chain.
  auto f = structural_features(
      Make({"a", "b", "c", "d", "x", "y"}, {{"a", "b"}, {"b", "c"}, {"c", "d"}, {"x", "y"}}));
  EXPECT_EQ(f.diameter, 3);
  EXPECT_NEAR(f.avg_shortest_path, 20.0 / 12.0, 1e-15);
}

TEST(StructuralFeatures, SccInvariantsOnRandomGraphs) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = testing::RandomDigraph(rng, 5 + rng() % 30, 0.08);
    auto f = structural_features(g);
    EXPECT_DOUBLE_EQ(f.largest_scc_ratio,
                     static_cast<double>(f.largest_scc_size) / static_cast<double>(f.node_count));
    // Largest SCC by mutual reachability on Floyd-Warshall distances.
    auto d = testing::FloydWarshall(g);
    std::size_t best = 0;
    for (std::size_t v = 0; v < g.size(); ++v) {
      std::size_t size = 0;
      for (std::size_t u = 0; u < g.size(); ++u) {
        if (d[u][v] < testing::kInf && d[v][u] < testing::kInf) ++size;
      }
      best = std::max(best, size);
    }
    EXPECT_EQ(f.largest_scc_size, static_cast<std::int64_t>(best));
  }
}

TEST(StructuralFeatures, DumpIsFlatKeyValue) {
  auto text = dump_features(structural_features(ChainOf(3)));
  EXPECT_NE(text.find("diameter = 2\n"), std::string::npos);
  EXPECT_NE(text.find("node_count = 3\n"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 12);
}

}  // namespace
}  // namespace pilot
