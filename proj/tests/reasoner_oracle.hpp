#pragma once

// Test-only reference semantics, written independently of forward_chain.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "proofpgm/proof_graph.hpp"
#include "proofpgm/rng.hpp"
#include "proofpgm/theory.hpp"

namespace proofpgm::testing {

inline std::set<std::string> entities_of(const Theory& t) {
  const auto v = theory_entities(t);
  return {v.begin(), v.end()};
}

/// Fixpoint with depths by relaxation: reapply every grounding until neither
/// the atom set nor any depth changes. Negated conditions are checked against
/// the current set, which is sound because negated attributes are never
/// concluded in a stratified theory.
inline std::map<Atom, int> naive_fixpoint(const Theory& t) {
  std::map<Atom, int> depth;
  for (const auto& s : t.statements)
    if (s.is_fact()) depth[s.fact] = 0;
  const auto entities = entities_of(t);
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& s : t.statements) {
      if (!s.is_rule()) continue;
      for (const auto& x : entities) {
        int worst = 0;
        bool ok = true;
        for (const auto& l : s.body) {
          const Atom a{l.entity ? *l.entity : x, l.attribute};
          auto it = depth.find(a);
          if (l.negated) {
            ok = ok && it == depth.end();
          } else if (it == depth.end()) {
            ok = false;
          } else {
            worst = std::max(worst, it->second);
          }
        }
        if (!ok) continue;
        const Atom head{s.head.entity ? *s.head.entity : x, s.head.attribute};
        auto it = depth.find(head);
        if (it == depth.end() || it->second > worst + 1) {
          depth[head] = worst + 1;
          changed = true;
        }
      }
    }
  }
  return depth;
}

/// Small random theory over two entities in which the attributes "cold" and
/// "blue" may be negated and are never concluded.
inline Theory random_stratified_theory(Rng& rng, std::size_t max_statements) {
  const std::vector<std::string> entities{"Alan", "Bob"};
  const std::vector<std::string> attrs{"big", "red", "kind", "nice", "cold", "blue"};
  const std::vector<std::string> heads{"big", "red", "kind", "nice"};
  Theory t;
  const auto total = static_cast<std::size_t>(rng.uniform_int(1, max_statements));
  const auto facts = static_cast<std::size_t>(rng.uniform_int(1, std::min<std::int64_t>(3, total)));
  for (std::size_t k = 0; k < facts; ++k)
    t.statements.push_back(make_fact("F" + std::to_string(k + 1),
                                     {entities[rng.index(2)], attrs[rng.index(attrs.size())]}));
  auto subject = [&]() -> std::optional<std::string> {
    if (rng.bernoulli(0.8)) return std::nullopt;
    return entities[rng.index(2)];
  };
  for (std::size_t k = facts; k < total; ++k) {
    std::vector<Literal> body;
    const auto len = rng.uniform_int(1, 2);
    for (int b = 0; b < len; ++b) {
      const std::string a = attrs[rng.index(attrs.size())];
      const bool negatable = a == "cold" || a == "blue";
      body.push_back({subject(), a, negatable && rng.bernoulli(0.5)});
    }
    t.statements.push_back(make_rule("R" + std::to_string(k - facts + 1), body,
                                     {subject(), heads[rng.index(heads.size())], false}));
  }
  return t;
}

/// Re-derives `atom` using only the facts and rules present in `proof` (NAF
/// conditions only when the NAF node is present). A failure-only proof must
/// be exactly {NAF} and the atom must not be derivable.
inline bool replays(const Theory& t, const ProofGraph& proof, const Atom& atom, bool derivable) {
  if (!derivable) return proof == ProofGraph{{"NAF"}, {}} && !naive_fixpoint(t).contains(atom);
  std::set<Atom> stated, have;
  for (const auto& s : t.statements) {
    if (!s.is_fact()) continue;
    stated.insert(s.fact);
    if (proof.nodes.contains(s.id)) have.insert(s.fact);
  }
  const bool naf = proof.nodes.contains("NAF");
  const auto entities = entities_of(t);
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& s : t.statements) {
      if (!s.is_rule() || !proof.nodes.contains(s.id)) continue;
      for (const auto& x : entities) {
        bool ok = true;
        for (const auto& l : s.body) {
          const Atom a{l.entity ? *l.entity : x, l.attribute};
          ok = ok && (l.negated ? naf && !stated.contains(a) : have.contains(a));
        }
        if (ok && have.insert({s.head.entity ? *s.head.entity : x, s.head.attribute}).second)
          changed = true;
      }
    }
  }
  return have.contains(atom);
}

}  // namespace proofpgm::testing
