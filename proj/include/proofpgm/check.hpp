#pragma once

// Self-checks exposed through the command line: closed-form conditionals
// against the enumeration reference, and analytic gradients against central
// finite differences.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "proofpgm/data.hpp"
#include "proofpgm/model.hpp"
#include "proofpgm/pgm.hpp"
#include "proofpgm/rng.hpp"

namespace proofpgm {

struct ConditionalCheck {
  double max_conditional_error = 0.0;
  double max_pseudolikelihood_error = 0.0;
  std::size_t evaluations = 0;
};

inline LogPotentials random_log_potentials(Rng& rng, std::size_t m, double scale) {
  LogPotentials lp(m);
  for (double& x : lp.phiA) x = rng.uniform(-scale, scale);
  for (auto& r : lp.phiV)
    for (double& x : r) x = rng.uniform(-scale, scale);
  for (auto& r : lp.phiE)
    for (double& x : r) x = rng.uniform(-scale, scale);
  return lp;
}

inline Assignment random_assignment(Rng& rng, std::size_t m) {
  Assignment y(m);
  y.a = rng.bernoulli(0.5);
  for (auto& b : y.v) b = rng.bernoulli(0.5);
  for (auto& b : y.e) b = rng.bernoulli(0.5);
  return y;
}

inline ConditionalCheck check_conditionals(std::size_t m, std::size_t trials, std::uint64_t seed) {
  Rng rng(seed);
  ConditionalCheck out;
  auto track = [&](const BitDist& fast, const BitDist& ref) {
    out.max_conditional_error = std::max({out.max_conditional_error, std::abs(fast[0] - ref[0]),
                                          std::abs(fast[1] - ref[1])});
    ++out.evaluations;
  };
  for (std::size_t t = 0; t < trials; ++t) {
    const auto lp = random_log_potentials(rng, m, 2.0);
    const auto y = random_assignment(rng, m);
    double pl = 0.0;
    const auto pa = exact_conditional(lp, y, Variable::answer());
    track(conditional_answer(lp, y.v, y.e), pa);
    pl += std::log(pa[y.a]);
    for (std::size_t i = 0; i < m; ++i) {
      const auto ref = exact_conditional(lp, y, Variable::node(i));
      track(conditional_node(lp, y, i), ref);
      pl += std::log(ref[y.v[i]]);
    }
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j) continue;
        const auto ref = exact_conditional(lp, y, Variable::edge(i, j));
        track(conditional_edge(lp, y, i, j), ref);
        pl += std::log(ref[y.edge(i, j)]);
      }
    out.max_pseudolikelihood_error =
        std::max(out.max_pseudolikelihood_error, std::abs(pseudolikelihood_log(lp, y) - pl));
  }
  return out;
}

/// Parameters with every tensor (output layers included) drawn from
/// uniform(-scale, scale), so that all loss terms have non-trivial gradients.
inline ModelParams random_params(const EncoderConfig& cfg, Rng& rng, double scale) {
  ModelParams p = init_params(cfg);
  p.for_each_tensor([&](std::string_view, std::vector<double>& t) {
    for (double& x : t) x = rng.uniform(-scale, scale);
  });
  return p;
}

/// Small examples (at most four nodes including NAF) for gradient checks.
inline std::vector<Example> small_examples(std::size_t n, std::uint64_t seed) {
  GenConfig g;
  g.num_examples = n;
  g.max_depth = 1;
  g.num_attributes = 4;
  g.facts_range = {1, 2};
  g.rules_range = {1, 1};
  g.max_body = 1;
  g.seed = seed;
  return generate_dataset(g);
}

/// |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// Compares analytic gradients with central differences on `samples`
/// randomly chosen parameters. Parameters whose perturbation flips a hard
/// prediction (where the loss is not differentiable) are skipped.
inline GradientCheck check_gradients(const ModelParams& params, const Example& ex, Variant variant,
                                     std::size_t samples, double h, Rng& rng) {
  const auto feats = extract_features(ex.theory, ex.query, params.config.hash_dim);
  const auto gold = gold_target(ex);
  Gradients g = zeros_like(params);
  accumulate_gradient(params, feats, gold, variant, g);

  // Embedding rows that the example actually reads.
  std::vector<std::uint32_t> rows;
  for (const auto* bags : {&feats.content, &feats.align})
    for (const auto& b : *bags) rows.insert(rows.end(), b.begin(), b.end());
  rows.insert(rows.end(), feats.cls_content.begin(), feats.cls_content.end());
  rows.insert(rows.end(), feats.cls_align.begin(), feats.cls_align.end());

  ModelParams probe = params;
  std::vector<std::vector<double>*> tensors, grads;
  probe.for_each_tensor([&](std::string_view, std::vector<double>& t) { tensors.push_back(&t); });
  g.for_each_tensor([&](std::string_view, std::vector<double>& t) { grads.push_back(&t); });
  const auto base_hard = hard_predictions(forward(params, feats).q);
  const std::size_t d = params.rep_dim();

  GradientCheck out;
  for (std::size_t attempt = 0; out.checked < samples && attempt < 20 * samples; ++attempt) {
    const std::size_t k = rng.index(tensors.size());
    const std::size_t idx = k == 0 ? rows[rng.index(rows.size())] * d + rng.index(d) : rng.index(tensors[k]->size());
    double& x = (*tensors[k])[idx];
    const double saved = x;
    x = saved + h;
    const Forward fp = forward(probe, feats);
    x = saved - h;
    const Forward fm = forward(probe, feats);
    x = saved;
    auto same = [&](const HardPredictions& o) { return o.v == base_hard.v && o.e == base_hard.e && o.a == base_hard.a; };
    if (!same(hard_predictions(fp.q)) || !same(hard_predictions(fm.q))) continue;
    const double lp = detail::loss_and_grads(fp, gold, variant, nullptr).total();
    const double lm = detail::loss_and_grads(fm, gold, variant, nullptr).total();
    const double numeric = (lp - lm) / (2 * h);
    out.max_relative_error = std::max(out.max_relative_error, relative_error((*grads[k])[idx], numeric));
    ++out.checked;
  }
  return out;
}

}  // namespace proofpgm
