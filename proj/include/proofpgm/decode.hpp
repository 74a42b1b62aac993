#pragma once

// Inference: node selection from q, constrained edge decoding by exact
// branch-and-bound, and answer prediction from the joint model.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "proofpgm/error.hpp"
#include "proofpgm/model.hpp"
#include "proofpgm/pgm.hpp"
#include "proofpgm/proof_graph.hpp"
#include "proofpgm/qdist.hpp"

namespace proofpgm {

struct DecodeConfig {
  double node_threshold = 0.5;
  std::size_t max_nodes_exact = 10;
  std::int64_t time_budget_ms = 2000;

  void validate() const {
    if (!(node_threshold > 0.0 && node_threshold < 1.0))
      throw Error("node threshold must lie strictly between 0 and 1");
  }
};

using IndexEdge = std::pair<std::size_t, std::size_t>;

struct DecodedProof {
  std::vector<std::size_t> nodes;  // ascending
  std::vector<IndexEdge> edges;    // ascending
  double objective = 0.0;
  bool exact = true;         // false when the greedy fallback produced the edges
  bool dropped_nodes = false;  // true when nodes were removed to restore feasibility
};

/// {i : q(V_i = 1) ≥ threshold}, or the single most probable node when that
/// set is empty (lowest index on ties).
inline std::vector<std::size_t> predict_nodes(const QDist& q, const DecodeConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < q.m(); ++i)
    if (q.qV[i][1] >= cfg.node_threshold) out.push_back(i);
  if (out.empty() && q.m() > 0) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < q.m(); ++i)
      if (q.qV[i][1] > q.qV[best][1]) best = i;
    out.push_back(best);
  }
  return out;
}

/// Log-odds of an edge under q; the per-edge objective weight.
inline double edge_log_odds(const BitDist& p) {
  constexpr double kFloor = 1e-300;
  return std::log(std::max(p[1], kFloor)) - std::log(std::max(p[0], kFloor));
}

namespace detail {

struct Candidate {
  std::size_t src;
  std::size_t dst;
  double score;
};

/// Edges allowed by the typing constraints among `nodes`, best score first.
inline std::vector<Candidate> candidate_edges(const QDist& q, const std::vector<std::size_t>& nodes,
                                              const std::vector<NodeKind>& kinds) {
  std::vector<Candidate> out;
  for (std::size_t i : nodes)
    for (std::size_t j : nodes)
      if (i != j && kinds[j] == NodeKind::rule) out.push_back({i, j, edge_log_odds(q.edge(i, j))});
  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  return out;
}

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

/// Node ids compressed to 0..k-1 for the search.
struct LocalGraph {
  std::vector<std::size_t> nodes;
  std::vector<std::size_t> local;  // global index -> local index

  LocalGraph(const std::vector<std::size_t>& ns, std::size_t m) : nodes(ns), local(m, SIZE_MAX) {
    for (std::size_t k = 0; k < ns.size(); ++k) local[ns[k]] = k;
  }
};

inline bool connects_all(const LocalGraph& g, const std::vector<Candidate>& cands,
                         const std::vector<char>& usable) {
  UnionFind uf(g.nodes.size());
  std::size_t components = g.nodes.size();
  for (std::size_t k = 0; k < cands.size(); ++k)
    if (usable[k] && uf.unite(g.local[cands[k].src], g.local[cands[k].dst])) --components;
  return components == 1;
}

class BranchAndBound {
 public:
  BranchAndBound(const LocalGraph& g, const std::vector<Candidate>& cands,
                 std::chrono::steady_clock::time_point deadline)
      : g_(g), cands_(cands), deadline_(deadline), out_(g.nodes.size()),
        chosen_(cands.size(), 0), state_(cands.size(), 0) {
    suffix_pos_.assign(cands.size() + 1, 0.0);
    for (std::size_t k = cands.size(); k-- > 0;)
      suffix_pos_[k] = suffix_pos_[k + 1] + std::max(0.0, cands[k].score);
  }

  /// Returns false when the deadline cut the search short.
  bool run() {
    search(0, 0.0);
    return !timed_out_;
  }
  bool found() const { return found_; }
  double best() const { return best_; }
  const std::vector<char>& best_set() const { return best_set_; }

 private:
  // state_: 0 undecided, 1 included, 2 excluded
  bool reaches(std::size_t from, std::size_t to) const {
    std::vector<char> seen(g_.nodes.size(), 0);
    std::vector<std::size_t> stack{from};
    seen[from] = 1;
    while (!stack.empty()) {
      const std::size_t n = stack.back();
      stack.pop_back();
      if (n == to) return true;
      for (std::size_t nb : out_[n])
        if (!seen[nb]) {
          seen[nb] = 1;
          stack.push_back(nb);
        }
    }
    return false;
  }

  bool still_connectable() const {
    std::vector<char> usable(cands_.size());
    for (std::size_t k = 0; k < cands_.size(); ++k) usable[k] = state_[k] != 2;
    return connects_all(g_, cands_, usable);
  }

  void search(std::size_t k, double current) {
    if (timed_out_) return;
    if ((++visited_ & 1023u) == 0 && std::chrono::steady_clock::now() > deadline_) {
      timed_out_ = true;
      return;
    }
    if (found_ && current + suffix_pos_[k] <= best_) return;
    if (!still_connectable()) return;
    if (k == cands_.size()) {
      found_ = true;
      best_ = current;
      best_set_ = chosen_;
      return;
    }
    const std::size_t s = g_.local[cands_[k].src], d = g_.local[cands_[k].dst];
    if (!reaches(d, s)) {
      chosen_[k] = 1;
      state_[k] = 1;
      out_[s].push_back(d);
      search(k + 1, current + cands_[k].score);
      out_[s].pop_back();
      chosen_[k] = 0;
    }
    state_[k] = 2;
    search(k + 1, current);
    state_[k] = 0;
  }

  const LocalGraph& g_;
  const std::vector<Candidate>& cands_;
  std::chrono::steady_clock::time_point deadline_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<char> chosen_;
  std::vector<char> state_;
  std::vector<double> suffix_pos_;
  std::vector<char> best_set_;
  double best_ = 0.0;
  bool found_ = false;
  bool timed_out_ = false;
  std::uint64_t visited_ = 0;
};

/// Positive edges best-first while acyclic, then the best edges joining
/// components until the graph is connected.
inline std::vector<char> greedy_connect(const LocalGraph& g, const std::vector<Candidate>& cands) {
  std::vector<char> chosen(cands.size(), 0);
  std::vector<std::vector<std::size_t>> out(g.nodes.size());
  auto reaches = [&](std::size_t from, std::size_t to) {
    std::vector<char> seen(g.nodes.size(), 0);
    std::vector<std::size_t> stack{from};
    seen[from] = 1;
    while (!stack.empty()) {
      const std::size_t n = stack.back();
      stack.pop_back();
      if (n == to) return true;
      for (std::size_t nb : out[n])
        if (!seen[nb]) {
          seen[nb] = 1;
          stack.push_back(nb);
        }
    }
    return false;
  };
  UnionFind uf(g.nodes.size());
  for (std::size_t k = 0; k < cands.size() && cands[k].score > 0.0; ++k) {
    const std::size_t s = g.local[cands[k].src], d = g.local[cands[k].dst];
    if (reaches(d, s)) continue;
    chosen[k] = 1;
    out[s].push_back(d);
    uf.unite(s, d);
  }
  // Joining two components can never close a directed cycle.
  for (std::size_t k = 0; k < cands.size(); ++k) {
    if (chosen[k]) continue;
    const std::size_t s = g.local[cands[k].src], d = g.local[cands[k].dst];
    if (uf.unite(s, d)) {
      chosen[k] = 1;
      out[s].push_back(d);
    }
  }
  return chosen;
}

}  // namespace detail

/// Highest-scoring edge set over `nodes` that is well typed, acyclic and
/// weakly connected. When no such set exists the least probable nodes are
/// dropped until one does.
inline DecodedProof decode_proof(const QDist& q, std::vector<std::size_t> nodes,
                                 const std::vector<NodeKind>& kinds, const DecodeConfig& cfg) {
  cfg.validate();
  if (nodes.empty()) throw Error("decode_proof needs at least one node");
  if (kinds.size() != q.m()) throw DimensionMismatch("node kinds do not match q");
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  for (std::size_t n : nodes)
    if (n >= q.m()) throw IndexOutOfRange("node " + std::to_string(n) + " out of range");

  DecodedProof result;
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(cfg.time_budget_ms);
  for (;;) {
    if (nodes.size() == 1) {
      result.nodes = nodes;
      return result;
    }
    const auto cands = detail::candidate_edges(q, nodes, kinds);
    const detail::LocalGraph g(nodes, q.m());
    if (!detail::connects_all(g, cands, std::vector<char>(cands.size(), 1))) {
      // Drop the least probable node; among ties the highest index goes first.
      auto worst = nodes.begin();
      for (auto it = nodes.begin(); it != nodes.end(); ++it)
        if (q.qV[*it][1] <= q.qV[*worst][1]) worst = it;
      nodes.erase(worst);
      result.dropped_nodes = true;
      continue;
    }

    std::vector<char> chosen;
    if (nodes.size() <= cfg.max_nodes_exact) {
      detail::BranchAndBound bnb(g, cands, deadline);
      const bool complete = bnb.run();
      if (bnb.found()) chosen = bnb.best_set();
      result.exact = complete;
    } else {
      result.exact = false;
    }
    if (!result.exact) {
      auto greedy = detail::greedy_connect(g, cands);
      auto total = [&](const std::vector<char>& set) {
        double s = 0.0;
        for (std::size_t k = 0; k < cands.size(); ++k)
          if (set[k]) s += cands[k].score;
        return s;
      };
      if (chosen.empty() || total(greedy) > total(chosen)) chosen = std::move(greedy);
    }

    result.nodes = nodes;
    for (std::size_t k = 0; k < cands.size(); ++k) {
      if (!chosen[k]) continue;
      result.edges.emplace_back(cands[k].src, cands[k].dst);
      result.objective += cands[k].score;
    }
    std::sort(result.edges.begin(), result.edges.end());
    return result;
  }
}

/// Indicator vectors (v, e) of a decoded proof over m nodes.
inline std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> indicators(
    const DecodedProof& p, std::size_t m) {
  std::vector<std::uint8_t> v(m, 0), e(num_pairs(m), 0);
  for (std::size_t n : p.nodes) v[n] = 1;
  for (const auto& [i, j] : p.edges) e[pair_index(i, j, m)] = 1;
  return {std::move(v), std::move(e)};
}

inline ProofGraph to_proof_graph(const DecodedProof& p, const std::vector<std::string>& ids) {
  ProofGraph g;
  for (std::size_t n : p.nodes) g.nodes.insert(ids.at(n));
  for (const auto& [i, j] : p.edges) g.edges.insert({ids.at(i), ids.at(j)});
  return g;
}

/// argmax_a p(A = a | v, e); ties resolve to 0.
inline int predict_answer(const LogPotentials& lp, const std::vector<std::uint8_t>& v,
                          const std::vector<std::uint8_t>& e) {
  return argmax_bit(conditional_answer(lp, v, e));
}

struct Prediction {
  std::string id;  // example id when known
  int answer = 0;
  ProofGraph proof;
  std::vector<std::uint8_t> v;
  std::vector<std::uint8_t> e;
  DecodedProof decoded;
};

/// Node kinds in model order (NAF, then statements).
inline std::vector<NodeKind> kinds_in_order(const Theory& theory) {
  std::vector<NodeKind> kinds{NodeKind::naf};
  for (const auto& s : theory.statements) kinds.push_back(s.is_rule() ? NodeKind::rule : NodeKind::fact);
  return kinds;
}

/// encode → q → node selection → constrained edge decoding → answer
/// conditioned on the decoded graph.
inline Prediction infer(const ModelParams& params, const Theory& theory, const Query& query,
                        const DecodeConfig& cfg = {}) {
  const Forward f = forward(params, extract_features(theory, query, params.config.hash_dim));
  Prediction out;
  out.decoded = decode_proof(f.q, predict_nodes(f.q, cfg), kinds_in_order(theory), cfg);
  std::tie(out.v, out.e) = indicators(out.decoded, f.q.m());
  out.answer = predict_answer(f.lp, out.v, out.e);
  out.proof = to_proof_graph(out.decoded, node_order(theory));
  return out;
}

inline Prediction infer(const ModelParams& params, const Example& ex, const DecodeConfig& cfg = {}) {
  Prediction p = infer(params, ex.theory, ex.query, cfg);
  p.id = ex.id;
  return p;
}

}  // namespace proofpgm
