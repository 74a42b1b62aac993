#pragma once

// Test-only references for constrained edge decoding: a validator for the
// structural constraints and an exhaustive search over edge subsets.

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "proofpgm/decode.hpp"

namespace proofpgm::testing {

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

/// C1 endpoints selected, C2 typing, C3 acyclic, C4 weakly connected,
/// C5 a single node has no edges.
inline bool satisfies_constraints(const std::vector<std::size_t>& nodes, const EdgeList& edges,
                                  const std::vector<NodeKind>& kinds) {
  const std::set<std::size_t> in(nodes.begin(), nodes.end());
  if (in.empty()) return false;
  if (in.size() == 1) return edges.empty();
  for (const auto& [s, t] : edges) {
    if (!in.contains(s) || !in.contains(t) || s == t) return false;
    if (kinds.at(t) != NodeKind::rule) return false;
  }
  // Acyclic: repeatedly strip nodes without incoming edges.
  std::set<std::size_t> alive = in;
  for (bool progress = true; progress && !alive.empty();) {
    progress = false;
    for (auto it = alive.begin(); it != alive.end();) {
      bool has_in = false;
      for (const auto& [s, t] : edges) has_in = has_in || (t == *it && alive.contains(s));
      if (!has_in) {
        it = alive.erase(it);
        progress = true;
      } else {
        ++it;
      }
    }
  }
  if (!alive.empty()) return false;
  // Weakly connected: flood fill ignoring direction.
  std::set<std::size_t> seen{*in.begin()};
  for (bool grew = true; grew;) {
    grew = false;
    for (const auto& [s, t] : edges)
      if (seen.contains(s) != seen.contains(t)) {
        seen.insert(s);
        seen.insert(t);
        grew = true;
      }
  }
  return seen.size() == in.size();
}

inline double log_odds(const QDist& q, std::size_t i, std::size_t j) {
  const auto& p = q.edge(i, j);
  return std::log(std::max(p[1], 1e-300)) - std::log(std::max(p[0], 1e-300));
}

struct Exhaustive {
  double score = 0.0;
  EdgeList edges;
};

/// Best feasible edge set over all subsets of rule-targeted pairs.
inline std::optional<Exhaustive> exhaustive_decode(const QDist& q, const std::vector<std::size_t>& nodes,
                                                   const std::vector<NodeKind>& kinds) {
  EdgeList cand;
  for (std::size_t s : nodes)
    for (std::size_t t : nodes)
      if (s != t && kinds[t] == NodeKind::rule) cand.emplace_back(s, t);
  std::optional<Exhaustive> best;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << cand.size()); ++mask) {
    EdgeList edges;
    double score = 0.0;
    for (std::size_t k = 0; k < cand.size(); ++k)
      if (mask >> k & 1) {
        edges.push_back(cand[k]);
        score += log_odds(q, cand[k].first, cand[k].second);
      }
    if (!satisfies_constraints(nodes, edges, kinds)) continue;
    if (!best || score > best->score) best = Exhaustive{score, edges};
  }
  return best;
}

}  // namespace proofpgm::testing
