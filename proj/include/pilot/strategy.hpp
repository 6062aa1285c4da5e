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

// Adaptive choice of the target-selection strategy.
//
// A rule is a single-feature threshold test weighted by the absolute
// correlation it was derived from. A strategy's confidence is the weight of
// its satisfied rules over the weight of all its rules. The strategy with the
// highest confidence wins; below the floor the recommendation is RANDOM.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "pilot/centrality.hpp"
#include "pilot/error.hpp"
#include "pilot/features.hpp"

namespace pilot {

enum class Direction { kGeq, kLeq };

struct DecisionRule {
  Strategy strategy = Strategy::kClose;
  std::string feature;
  double threshold = 0.0;
  Direction direction = Direction::kGeq;
  double weight = 0.0;
  std::string label;

  friend bool operator==(const DecisionRule&, const DecisionRule&) = default;
};

struct StrategyRecommendation {
  Strategy strategy = Strategy::kRandom;
  double confidence = 0.0;
  std::vector<std::string> matched;
  std::map<Strategy, double> per_strategy_confidence;
};

struct AdvantageRecord {
  std::string program;
  Strategy strategy = Strategy::kClose;
  double coverage = 0.0;
  double advantage = 0.0;
};

inline constexpr double kDefaultConfidenceFloor = 0.30;
inline constexpr double kDefaultCorrelationCutoff = 0.10;

// Preference among equally confident strategies, most preferred first.
inline constexpr Strategy kTieOrder[] = {Strategy::kPage, Strategy::kBet, Strategy::kDeg,
                                         Strategy::kClose};

inline const std::vector<DecisionRule>& builtin_rules() {
  using S = Strategy;
  using D = Direction;
  static const std::vector<DecisionRule> rules = {
      {S::kClose, "diameter", 10.0, D::kGeq, 0.525, "Large diameter"},
      {S::kClose, "avg_shortest_path", 4.32, D::kGeq, 0.472, "Long paths"},
      {S::kClose, "closeness_centrality_skew", 5.22, D::kGeq, 0.426, "Skewed closeness"},
      {S::kClose, "largest_scc_size", 3.0, D::kLeq, 0.420, "Small SCCs"},
      {S::kClose, "largest_scc_ratio", 0.009, D::kLeq, 0.397, "Fragmented"},
      {S::kBet, "pagerank_top10_concentration", 0.405, D::kGeq, 0.462, "Concentrated PR"},
      {S::kBet, "pagerank_gini", 0.406, D::kGeq, 0.461, "High PR inequality"},
      {S::kBet, "pagerank_skew", 8.18, D::kGeq, 0.376, "Skewed PR"},
      {S::kBet, "density", 0.003, D::kLeq, 0.375, "Sparse graph"},
      {S::kBet, "diameter", 10.0, D::kGeq, 0.353, "Large diameter"},
      {S::kDeg, "closeness_centrality_skew", 5.22, D::kGeq, 0.457, "Skewed closeness"},
      {S::kDeg, "pagerank_top10_concentration", 0.405, D::kGeq, 0.399, "Concentrated PR"},
      {S::kDeg, "pagerank_gini", 0.406, D::kGeq, 0.392, "High PR inequality"},
      {S::kDeg, "diameter", 10.0, D::kGeq, 0.389, "Large diameter"},
      {S::kDeg, "pagerank_skew", 8.18, D::kGeq, 0.317, "Skewed PR"},
      {S::kPage, "largest_scc_size", 3.0, D::kLeq, 0.392, "Small SCCs"},
      {S::kPage, "largest_scc_ratio", 0.009, D::kLeq, 0.388, "Fragmented"},
  };
  return rules;
}

inline bool rule_matches(const DecisionRule& rule, const StructuralFeatures& features) {
  auto value = feature_value(features, rule.feature);
  if (!value) throw InputError("rule references unknown feature " + rule.feature);
  return rule.direction == Direction::kGeq ? *value >= rule.threshold : *value <= rule.threshold;
}

// Confidence per strategy that has at least one rule.
inline std::map<Strategy, double> evaluate_confidence(const StructuralFeatures& features,
                                                      const std::vector<DecisionRule>& rules) {
  std::map<Strategy, double> matched, total;
  for (const auto& r : rules) {
    if (r.weight <= 0) throw InputError("rule weight must be positive: " + r.label);
    total[r.strategy] += r.weight;
    if (rule_matches(r, features)) matched[r.strategy] += r.weight;
  }
  std::map<Strategy, double> confidence;
  for (const auto& [s, t] : total) confidence[s] = matched[s] / t;
  return confidence;
}

// Picks the argmax over per-strategy confidences, ties by kTieOrder.
inline StrategyRecommendation choose_strategy(const std::map<Strategy, double>& confidence,
                                              double floor = kDefaultConfidenceFloor) {
  if (floor < 0 || floor >= 1) throw InputError("confidence floor must lie in [0, 1)");
  StrategyRecommendation rec;
  for (Strategy s : kTieOrder) {
    auto it = confidence.find(s);
    rec.per_strategy_confidence[s] = it == confidence.end() ? 0.0 : it->second;
  }
  Strategy best = kTieOrder[0];
  for (Strategy s : kTieOrder) {
    if (rec.per_strategy_confidence[s] > rec.per_strategy_confidence[best]) best = s;
  }
  rec.confidence = rec.per_strategy_confidence[best];
  rec.strategy = rec.confidence < floor ? Strategy::kRandom : best;
  return rec;
}

inline StrategyRecommendation recommend(const StructuralFeatures& features,
                                        const std::vector<DecisionRule>& rules,
                                        double floor = kDefaultConfidenceFloor) {
  auto rec = choose_strategy(evaluate_confidence(features, rules), floor);
  for (const auto& r : rules) {
    if (r.strategy == rec.strategy && rule_matches(r, features)) rec.matched.push_back(r.label);
  }
  return rec;
}

inline std::vector<AdvantageRecord> compute_advantage(
    const std::map<Strategy, double>& coverage_by_strategy, const std::string& program = "") {
  auto base = coverage_by_strategy.find(Strategy::kRandom);
  if (base == coverage_by_strategy.end()) throw InputError("missing RANDOM baseline");
  std::vector<AdvantageRecord> out;
  for (const auto& [s, cov] : coverage_by_strategy) {
    if (s == Strategy::kRandom) continue;
    out.push_back({program, s, cov, cov - base->second});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rule derivation from experiment data.

struct ProgramObservation {
  std::string program;
  StructuralFeatures features;
  std::vector<AdvantageRecord> advantages;
};

struct Correlation {
  double r = 0.0;
  double p = 1.0;
};

// Pearson r with a two-sided t-test on n - 2 degrees of freedom. Returns
// nullopt when either side has zero variance or n < 3.
inline std::optional<Correlation> pearson(const std::vector<double>& x,
                                          const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 3) return std::nullopt;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return std::nullopt;
  Correlation c;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  if (1.0 - c.r * c.r <= 0) {
    c.p = 0.0;
  } else {
    double t = c.r * std::sqrt(df / (1.0 - c.r * c.r));
    boost::math::students_t dist(df);
    c.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return c;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw InputError("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct DerivedRules {
  std::vector<DecisionRule> rules;
  std::vector<std::string> warnings;
};

inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// For every (strategy, feature) pair whose correlation with the advantage is
// significant at p < p_cutoff, emits a rule thresholded at the median feature
// value over programs where the strategy beat random. Rules are grouped by
// strategy and sorted by descending weight.
inline DerivedRules derive_rules(const std::vector<ProgramObservation>& dataset,
                                 double p_cutoff = kDefaultCorrelationCutoff,
                                 const std::vector<std::string>& features = feature_names()) {
  if (dataset.size() < 3) throw InputError("rule derivation needs at least 3 programs");
  DerivedRules out;
  for (Strategy s : {Strategy::kClose, Strategy::kBet, Strategy::kDeg, Strategy::kPage}) {
    std::vector<double> adv;
    std::vector<const ProgramObservation*> rows;
    for (const auto& obs : dataset) {
      for (const auto& a : obs.advantages) {
        if (a.strategy == s) {
          adv.push_back(a.advantage);
          rows.push_back(&obs);
          break;
        }
      }
    }
    if (rows.empty()) continue;
    if (rows.size() != dataset.size()) {
      throw InputError("advantage for " + std::string(strategy_name(s)) +
                       " missing on some programs");
    }
    std::vector<DecisionRule> emitted;
    for (const auto& name : features) {
      std::vector<double> xs;
      for (const auto* obs : rows) {
        auto v = feature_value(obs->features, name);
        if (!v) throw InputError("unknown feature " + name);
        xs.push_back(*v);
      }
      auto corr = pearson(xs, adv);
      if (!corr) {
        out.warnings.push_back(std::string(strategy_name(s)) + "/" + name +
                               ": zero variance, correlation skipped");
        continue;
      }
      if (!(corr->p < p_cutoff) || corr->r == 0) continue;
      std::vector<double> winners;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (adv[i] > 0) winners.push_back(xs[i]);
      }
      if (winners.empty()) continue;
      DecisionRule rule;
      rule.strategy = s;
      rule.feature = name;
      rule.threshold = median(winners);
      rule.direction = corr->r > 0 ? Direction::kGeq : Direction::kLeq;
      rule.weight = std::abs(corr->r);
      rule.label = name + (rule.direction == Direction::kGeq ? " >= " : " <= ") +
                   format_number(rule.threshold);
      emitted.push_back(std::move(rule));
    }
    std::stable_sort(emitted.begin(), emitted.end(),
                     [](const DecisionRule& a, const DecisionRule& b) { return a.weight > b.weight; });
    out.rules.insert(out.rules.end(), emitted.begin(), emitted.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text format: one rule per line,
//   STRATEGY feature GEQ|LEQ threshold weight "label"
// Blank lines and lines starting with '#' are ignored.

inline std::string format_rules(const std::vector<DecisionRule>& rules) {
  std::string out;
  for (const auto& r : rules) {
    out += std::string(strategy_name(r.strategy)) + " " + r.feature + " " +
           (r.direction == Direction::kGeq ? "GEQ" : "LEQ") + " " + format_number(r.threshold) +
           " " + format_number(r.weight) + " \"";
    for (char c : r.label) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    out += "\"\n";
  }
  return out;
}

inline std::vector<DecisionRule> parse_rules(std::string_view text) {
  std::vector<DecisionRule> rules;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    auto fail = [&](const std::string& why) {
      return InputError("rules line " + std::to_string(lineno) + ": " + why);
    };
    auto quote = line.find('"');
    if (quote == std::string::npos) throw fail("missing quoted label");
    std::istringstream head(line.substr(0, quote));
    std::string strategy, feature, direction, threshold, weight;
    if (!(head >> strategy >> feature >> direction >> threshold >> weight)) {
      throw fail("expected: strategy feature direction threshold weight \"label\"");
    }
    std::string extra;
    if (head >> extra) throw fail("unexpected token " + extra);
    DecisionRule r;
    try {
      r.strategy = parse_strategy(strategy);
    } catch (const InputError& e) {
      throw fail(e.what());
    }
    if (r.strategy == Strategy::kRandom) throw fail("RANDOM takes no rules");
    if (!feature_value(StructuralFeatures{}, feature)) throw fail("unknown feature " + feature);
    r.feature = feature;
    if (direction == "GEQ") {
      r.direction = Direction::kGeq;
    } else if (direction == "LEQ") {
      r.direction = Direction::kLeq;
    } else {
      throw fail("direction must be GEQ or LEQ");
    }
    auto number = [&](const std::string& s) {
      double v = 0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw fail("bad number " + s);
      return v;
    };
    r.threshold = number(threshold);
    r.weight = number(weight);
    if (!(r.weight > 0 && r.weight <= 1)) throw fail("weight must lie in (0, 1]");
    std::size_t i = quote + 1;
    bool closed = false;
    for (; i < line.size(); ++i) {
      if (line[i] == '\\' && i + 1 < line.size()) {
        r.label += line[++i];
      } else if (line[i] == '"') {
        closed = true;
        ++i;
        break;
      } else {
        r.label += line[i];
      }
    }
    if (!closed) throw fail("unterminated label");
    if (line.find_first_not_of(" \t\r", i) != std::string::npos) throw fail("trailing text");
    rules.push_back(std::move(r));
  }
  return rules;
}

}  // namespace pilot
