#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "proofpgm/theory.hpp"

namespace proofpgm {

inline constexpr std::string_view kNafId = "NAF";

enum class NodeKind { fact, rule, naf };

using Edge = std::pair<std::string, std::string>;

/// Directed proof graph over statement ids and the shared "NAF" node.
struct ProofGraph {
  std::set<std::string> nodes;
  std::set<Edge> edges;

  bool operator==(const ProofGraph&) const = default;
  auto operator<=>(const ProofGraph&) const = default;
};

using NodeKinds = std::map<std::string, NodeKind, std::less<>>;

/// Kind of every node id usable in proofs over `t`, including "NAF".
inline NodeKinds node_kinds(const Theory& t) {
  NodeKinds out;
  out.emplace(std::string(kNafId), NodeKind::naf);
  for (const auto& s : t.statements)
    out.emplace(s.id, s.is_fact() ? NodeKind::fact : NodeKind::rule);
  return out;
}

/// Node ids in PGM index order: "NAF" first, then the statements.
inline std::vector<std::string> node_order(const Theory& t) {
  std::vector<std::string> out{std::string(kNafId)};
  for (const auto& s : t.statements) out.push_back(s.id);
  return out;
}

inline bool is_acyclic(const ProofGraph& g) {
  std::map<std::string, int> indegree;
  for (const auto& n : g.nodes) indegree[n] = 0;
  for (const auto& [src, dst] : g.edges) ++indegree[dst];
  std::vector<std::string> ready;
  for (const auto& [n, d] : indegree)
    if (d == 0) ready.push_back(n);
  std::size_t visited = 0;
  while (!ready.empty()) {
    const std::string n = ready.back();
    ready.pop_back();
    ++visited;
    for (auto it = g.edges.lower_bound({n, std::string()}); it != g.edges.end() && it->first == n;
         ++it)
      if (--indegree[it->second] == 0) ready.push_back(it->second);
  }
  return visited == indegree.size();
}

inline bool is_weakly_connected(const ProofGraph& g) {
  if (g.nodes.empty()) return true;
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& [src, dst] : g.edges) {
    adj[src].push_back(dst);
    adj[dst].push_back(src);
  }
  std::set<std::string> seen{*g.nodes.begin()};
  std::vector<std::string> stack{*g.nodes.begin()};
  while (!stack.empty()) {
    const std::string n = stack.back();
    stack.pop_back();
    for (const auto& m : adj[n])
      if (seen.insert(m).second) stack.push_back(m);
  }
  return seen.size() == g.nodes.size();
}

/// Returns a description of the first violated structural constraint, or
/// nullopt when the graph is a well-typed, acyclic, weakly connected proof.
inline std::optional<std::string> check_proof(const ProofGraph& g, const NodeKinds& kinds) {
  if (g.nodes.empty()) return "proof has no nodes";
  for (const auto& n : g.nodes)
    if (!kinds.contains(n)) return "unknown node '" + n + "'";
  for (const auto& [src, dst] : g.edges) {
    if (src == dst) return "self loop on '" + src + "'";
    if (!g.nodes.contains(src) || !g.nodes.contains(dst))
      return "edge (" + src + "," + dst + ") leaves the node set";
    if (kinds.find(dst)->second != NodeKind::rule)
      return "edge (" + src + "," + dst + ") does not end at a rule";
  }
  if (g.nodes.size() == 1 && !g.edges.empty()) return "single-node proof with edges";
  if (!is_acyclic(g)) return "proof has a cycle";
  if (!is_weakly_connected(g)) return "proof is not connected";
  return std::nullopt;
}

/// Number of rule nodes on the longest path of an acyclic proof.
inline int rule_depth(const ProofGraph& g, const NodeKinds& kinds) {
  std::map<std::string, int> best;
  std::map<std::string, int> indegree;
  for (const auto& n : g.nodes) indegree[n] = 0;
  for (const auto& [src, dst] : g.edges) ++indegree[dst];
  std::vector<std::string> ready;
  for (const auto& [n, d] : indegree)
    if (d == 0) ready.push_back(n);
  auto is_rule = [&](const std::string& n) {
    auto it = kinds.find(n);
    return it != kinds.end() && it->second == NodeKind::rule;
  };
  int deepest = 0;
  while (!ready.empty()) {
    const std::string n = ready.back();
    ready.pop_back();
    const int here = best[n] + (is_rule(n) ? 1 : 0);
    deepest = std::max(deepest, here);
    for (auto it = g.edges.lower_bound({n, std::string()}); it != g.edges.end() && it->first == n;
         ++it) {
      best[it->second] = std::max(best[it->second], here);
      if (--indegree[it->second] == 0) ready.push_back(it->second);
    }
  }
  return deepest;
}

/// Rule-node depth of a proof without a theory at hand. In a valid proof
/// exactly the rule nodes have incoming edges, since every rule consumes at
/// least one premise.
inline int rule_depth(const ProofGraph& g) {
  NodeKinds kinds;
  for (const auto& n : g.nodes) kinds.emplace(n, NodeKind::fact);
  for (const auto& [src, dst] : g.edges) kinds[dst] = NodeKind::rule;
  return rule_depth(g, kinds);
}

}  // namespace proofpgm
