#pragma once

// Forward-chaining closed-world reasoner with negation as failure.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "proofpgm/error.hpp"
#include "proofpgm/proof_graph.hpp"
#include "proofpgm/theory.hpp"

namespace proofpgm {

/// One satisfied grounding of a rule body.
struct DerivationStep {
  std::string rule_id;
  std::vector<Atom> premise_atoms;
  std::vector<Literal> naf_literals;  // grounded, negated

  auto operator<=>(const DerivationStep&) const = default;
  bool operator==(const DerivationStep&) const = default;
};

struct DerivationSet {
  std::map<Atom, int> depth;  // keys are the derived atoms
  std::map<Atom, std::set<DerivationStep>> supports;
  std::map<Atom, std::vector<std::string>> stated;  // fact ids stating each atom

  bool contains(const Atom& a) const { return depth.contains(a); }
  std::set<Atom> derived() const {
    std::set<Atom> out;
    for (const auto& [a, d] : depth) out.insert(a);
    return out;
  }
};

/// Throws StratificationError when an attribute occurs both negated in a rule
/// body and in a rule head.
inline void check_stratified(const Theory& t) {
  std::set<std::string> heads;
  for (const auto& s : t.statements)
    if (s.is_rule()) heads.insert(s.head.attribute);
  for (const auto& s : t.statements) {
    if (!s.is_rule()) continue;
    for (const auto& l : s.body)
      if (l.negated && heads.contains(l.attribute))
        throw StratificationError("attribute '" + l.attribute + "' is negated in " + s.id +
                                  " and concluded by a rule");
  }
}

namespace detail {

inline bool has_variable(const Statement& rule) {
  if (rule.head.is_variable()) return true;
  return std::any_of(rule.body.begin(), rule.body.end(),
                     [](const Literal& l) { return l.is_variable(); });
}

/// Bindings to try for the rule variable; one dummy binding for ground rules.
inline std::vector<std::string> bindings(const Statement& rule,
                                         const std::vector<std::string>& entities) {
  if (!has_variable(rule)) return {std::string()};
  return entities;
}

}  // namespace detail

/// Least fixpoint of rule application. Atoms are derived in rounds, so an
/// atom's depth is the round in which it first becomes derivable.
inline DerivationSet forward_chain(const Theory& theory) {
  validate_theory(theory);
  check_stratified(theory);

  DerivationSet ds;
  for (const auto& s : theory.statements) {
    if (!s.is_fact()) continue;
    ds.depth.emplace(s.fact, 0);
    ds.stated[s.fact].push_back(s.id);
  }
  // Under stratification no negated atom is ever concluded by a rule, so its
  // final truth value is already fixed by the stated facts.
  const std::map<Atom, int> stated_only = ds.depth;
  const auto entities = theory_entities(theory);

  auto satisfied = [&](const Statement& rule, const std::string& b,
                       const std::map<Atom, int>& known) {
    for (const auto& l : rule.body) {
      const bool present = (l.negated ? stated_only : known).contains(l.ground(b));
      if (present == l.negated) return false;
    }
    return true;
  };

  for (int round = 1;; ++round) {
    const std::map<Atom, int> snapshot = ds.depth;
    bool changed = false;
    for (const auto& s : theory.statements) {
      if (!s.is_rule()) continue;
      for (const auto& b : detail::bindings(s, entities)) {
        if (!satisfied(s, b, snapshot)) continue;
        if (ds.depth.emplace(s.head.ground(b), round).second) changed = true;
      }
    }
    if (!changed) break;
  }

  for (const auto& s : theory.statements) {
    if (!s.is_rule()) continue;
    for (const auto& b : detail::bindings(s, entities)) {
      if (!satisfied(s, b, ds.depth)) continue;
      DerivationStep step{s.id, {}, {}};
      for (const auto& l : s.body) {
        if (l.negated)
          step.naf_literals.push_back(Literal{l.ground(b).entity, l.attribute, true});
        else
          step.premise_atoms.push_back(l.ground(b));
      }
      ds.supports[s.head.ground(b)].insert(std::move(step));
    }
  }
  return ds;
}

/// Closed-world truth value of the query.
inline bool answer_query(const DerivationSet& ds, const Query& q) {
  return ds.contains(q.atom) != q.negated;
}

namespace detail {

struct PartialProof {
  ProofGraph graph;
  std::string root;  // node whose conclusion the partial proof establishes

  auto operator<=>(const PartialProof&) const = default;
  bool operator==(const PartialProof&) const = default;
};

inline bool includes(const ProofGraph& big, const ProofGraph& small) {
  return std::includes(big.nodes.begin(), big.nodes.end(), small.nodes.begin(),
                       small.nodes.end()) &&
         std::includes(big.edges.begin(), big.edges.end(), small.edges.begin(),
                       small.edges.end());
}

/// Drops every candidate that strictly contains another one with the same root.
inline std::vector<PartialProof> keep_minimal(std::set<PartialProof> candidates) {
  std::vector<PartialProof> out;
  for (const auto& c : candidates) {
    const bool dominated = std::any_of(candidates.begin(), candidates.end(), [&](const auto& o) {
      return o.root == c.root && o.graph != c.graph && includes(c.graph, o.graph);
    });
    if (!dominated) out.push_back(c);
  }
  return out;
}

// Upper bound on alternatives tracked per atom during enumeration.
inline constexpr std::size_t kMaxAlternatives = 256;

inline std::vector<PartialProof> proofs_of(const DerivationSet& ds, const Atom& atom,
                                           std::set<Atom>& visiting) {
  if (auto it = ds.stated.find(atom); it != ds.stated.end()) {
    std::vector<PartialProof> out;
    for (const auto& id : it->second) out.push_back({ProofGraph{{id}, {}}, id});
    return out;
  }
  auto sup = ds.supports.find(atom);
  if (sup == ds.supports.end()) return {};

  visiting.insert(atom);
  std::set<PartialProof> candidates;
  for (const auto& step : sup->second) {
    if (std::any_of(step.premise_atoms.begin(), step.premise_atoms.end(),
                    [&](const Atom& p) { return visiting.contains(p); }))
      continue;
    PartialProof seed;
    seed.root = step.rule_id;
    seed.graph.nodes.insert(step.rule_id);
    if (!step.naf_literals.empty()) {
      seed.graph.nodes.insert(std::string(kNafId));
      seed.graph.edges.insert({std::string(kNafId), step.rule_id});
    }
    std::vector<PartialProof> partial{seed};
    for (const auto& premise : step.premise_atoms) {
      const auto subs = proofs_of(ds, premise, visiting);
      std::vector<PartialProof> next;
      for (const auto& p : partial) {
        for (const auto& sub : subs) {
          PartialProof merged = p;
          merged.graph.nodes.insert(sub.graph.nodes.begin(), sub.graph.nodes.end());
          merged.graph.edges.insert(sub.graph.edges.begin(), sub.graph.edges.end());
          merged.graph.edges.insert({sub.root, step.rule_id});
          next.push_back(std::move(merged));
          if (next.size() >= kMaxAlternatives) break;
        }
        if (next.size() >= kMaxAlternatives) break;
      }
      partial = std::move(next);
      if (partial.empty()) break;
    }
    for (auto& p : partial)
      if (is_acyclic(p.graph) &&
          std::none_of(p.graph.edges.begin(), p.graph.edges.end(),
                       [](const Edge& e) { return e.first == e.second; }))
        candidates.insert(std::move(p));
  }
  visiting.erase(atom);

  auto out = keep_minimal(std::move(candidates));
  if (out.size() > kMaxAlternatives) out.resize(kMaxAlternatives);
  return out;
}

inline bool by_sorted_nodes(const ProofGraph& a, const ProofGraph& b) {
  // std::set already iterates in sorted order.
  if (a.nodes != b.nodes)
    return std::lexicographical_compare(a.nodes.begin(), a.nodes.end(), b.nodes.begin(),
                                        b.nodes.end());
  return a.edges < b.edges;
}

}  // namespace detail

/// Minimal proofs that decide the query's truth value, at most `cap`, in
/// lexicographic order of their sorted node ids. A stated atom is proved by
/// its fact node alone; an atom that is not derivable is refuted by the single
/// "NAF" node.
inline std::vector<ProofGraph> extract_proofs(const DerivationSet& ds, const Query& q,
                                              std::size_t cap) {
  if (cap == 0) throw Error("proof cap must be at least 1");
  if (!ds.contains(q.atom)) return {ProofGraph{{std::string(kNafId)}, {}}};

  std::set<Atom> visiting;
  auto partial = detail::proofs_of(ds, q.atom, visiting);
  std::set<detail::PartialProof> unique(partial.begin(), partial.end());
  // Minimality across roots: the query has a single conclusion node per proof
  // but different proofs may end at different rules.
  std::vector<ProofGraph> out;
  for (const auto& c : unique) {
    const bool dominated = std::any_of(unique.begin(), unique.end(), [&](const auto& o) {
      return o.graph != c.graph && detail::includes(c.graph, o.graph);
    });
    if (!dominated) out.push_back(c.graph);
  }
  std::sort(out.begin(), out.end(), detail::by_sorted_nodes);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.size() > cap) out.resize(cap);
  return out;
}

/// Reasoning depth of a query: the fewest rule nodes on the longest path over
/// its proofs.
inline int query_depth(const std::vector<ProofGraph>& proofs) {
  if (proofs.empty()) throw Error("query_depth needs at least one proof");
  int best = -1;
  for (const auto& p : proofs) {
    const int d = rule_depth(p);
    if (best < 0 || d < best) best = d;
  }
  return best;
}

}  // namespace proofpgm
