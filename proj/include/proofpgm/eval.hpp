#pragma once

// Answer, proof and full accuracy with a per-depth breakdown.

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "proofpgm/data.hpp"
#include "proofpgm/decode.hpp"
#include "proofpgm/error.hpp"

namespace proofpgm {

struct DepthMetrics {
  std::size_t count = 0;
  double qa = 0.0;
  double pa = 0.0;
  double fa = 0.0;
};

struct Metrics {
  std::size_t count = 0;
  double qa = 0.0;
  double pa = 0.0;
  double fa = 0.0;
  std::map<int, DepthMetrics> per_depth;
};

/// Exact id-level match against any of the gold proofs.
inline bool proof_matches(const ProofGraph& predicted, const std::vector<ProofGraph>& gold) {
  return std::find(gold.begin(), gold.end(), predicted) != gold.end();
}

inline Metrics evaluate(const std::vector<Prediction>& predictions, const std::vector<Example>& gold) {
  if (predictions.size() != gold.size())
    throw LengthMismatch(std::to_string(predictions.size()) + " predictions for " + std::to_string(gold.size()) +
                         " examples");
  struct Tally {
    std::size_t n = 0, qa = 0, pa = 0, fa = 0;
  };
  Tally all;
  std::map<int, Tally> by_depth;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    const auto& p = predictions[k];
    const auto& g = gold[k];
    if (!p.id.empty() && p.id != g.id) throw IdMismatch("prediction " + p.id + " aligned with example " + g.id);
    const bool qa = (p.answer != 0) == g.answer;
    const bool pa = proof_matches(p.proof, g.gold_proofs);
    for (Tally* t : {&all, &by_depth[g.depth]}) {
      ++t->n;
      t->qa += qa;
      t->pa += pa;
      t->fa += qa && pa;
    }
  }
  auto frac = [](std::size_t a, std::size_t n) { return n ? static_cast<double>(a) / static_cast<double>(n) : 0.0; };
  Metrics m;
  m.count = all.n;
  m.qa = frac(all.qa, all.n);
  m.pa = frac(all.pa, all.n);
  m.fa = frac(all.fa, all.n);
  for (const auto& [d, t] : by_depth) m.per_depth[d] = {t.n, frac(t.qa, t.n), frac(t.pa, t.n), frac(t.fa, t.n)};
  return m;
}

inline nlohmann::ordered_json to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["qa"] = m.qa;
  j["pa"] = m.pa;
  j["fa"] = m.fa;
  j["count"] = m.count;
  nlohmann::ordered_json rows = nlohmann::ordered_json::object();
  for (const auto& [d, r] : m.per_depth)
    rows[std::to_string(d)] = {{"count", r.count}, {"qa", r.qa}, {"pa", r.pa}, {"fa", r.fa}};
  j["per_depth"] = std::move(rows);
  return j;
}

/// Plain-text table: one row per depth plus an "All" row, percentages.
inline std::string format_table(const Metrics& m) {
  std::string out;
  char line[96];
  std::snprintf(line, sizeof line, "%-6s %6s %7s %7s %7s\n", "Depth", "Cnt", "QA", "PA", "FA");
  out += line;
  auto row = [&](const std::string& label, std::size_t n, double qa, double pa, double fa) {
    std::snprintf(line, sizeof line, "%-6s %6zu %7.1f %7.1f %7.1f\n", label.c_str(), n, 100 * qa, 100 * pa,
                  100 * fa);
    out += line;
  };
  for (const auto& [d, r] : m.per_depth) row(std::to_string(d), r.count, r.qa, r.pa, r.fa);
  row("All", m.count, m.qa, m.pa, m.fa);
  return out;
}

inline std::vector<Prediction> predict_all(const ModelParams& params, const std::vector<Example>& examples,
                                           const DecodeConfig& cfg = {}) {
  std::vector<Prediction> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(infer(params, ex, cfg));
  return out;
}

}  // namespace proofpgm
