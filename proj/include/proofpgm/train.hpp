#pragma once

// Minibatch training with Adam, global gradient-norm clipping and selection
// of the parameters with the best development full accuracy.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <string_view>
#include <vector>

#include "proofpgm/data.hpp"
#include "proofpgm/error.hpp"
#include "proofpgm/eval.hpp"
#include "proofpgm/model.hpp"
#include "proofpgm/rng.hpp"

namespace proofpgm {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState make_adam_state(const ModelParams& p) { return {0, zeros_like(p), zeros_like(p)}; }

inline double gradient_norm(const Gradients& g) {
  double s = 0.0;
  g.for_each_tensor([&](std::string_view, const std::vector<double>& t) {
    for (double x : t) s += x * x;
  });
  return std::sqrt(s);
}

/// Rescales g so that its global L2 norm does not exceed max_norm; returns
/// the norm before clipping.
inline double clip_gradient(Gradients& g, double max_norm) {
  const double norm = gradient_norm(g);
  if (norm > max_norm) {
    const double c = max_norm / (norm + 1e-6);
    g.for_each_tensor([&](std::string_view, std::vector<double>& t) {
      for (double& x : t) x *= c;
    });
  }
  return norm;
}

inline void adam_step(ModelParams& p, const Gradients& g, AdamState& st, double lr, const AdamConfig& cfg = {}) {
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  std::vector<std::vector<double>*> ps, ms, vs;
  std::vector<const std::vector<double>*> gs;
  p.for_each_tensor([&](std::string_view, std::vector<double>& t) { ps.push_back(&t); });
  st.m.for_each_tensor([&](std::string_view, std::vector<double>& t) { ms.push_back(&t); });
  st.v.for_each_tensor([&](std::string_view, std::vector<double>& t) { vs.push_back(&t); });
  g.for_each_tensor([&](std::string_view, const std::vector<double>& t) { gs.push_back(&t); });
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto& w = *ps[k];
    auto& m = *ms[k];
    auto& v = *vs[k];
    const auto& d = *gs[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * d[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * d[i] * d[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<Metrics> dev;
};

struct TrainResult {
  ModelParams params;
  AdamState moments;
  std::size_t best_epoch = 0;  // 0 = initial parameters
  std::vector<EpochLog> history;
};

/// Pre-extracted inputs of one training example.
struct Prepared {
  Features features;
  GoldTarget gold;
};

inline std::vector<Prepared> prepare(const std::vector<Example>& examples, std::size_t hash_dim) {
  std::vector<Prepared> out;
  out.reserve(examples.size());
  for (const auto& ex : examples)
    out.push_back({extract_features(ex.theory, ex.query, hash_dim), gold_target(ex)});
  return out;
}

/// Trains from init_params(enc). With a non-empty dev set the returned
/// parameters are those of the epoch with the highest dev full accuracy
/// (earliest on ties); otherwise those of the last epoch.
inline TrainResult train(const std::vector<Example>& train_set, const std::vector<Example>& dev_set,
                         const EncoderConfig& enc, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (train_set.empty()) throw EmptyDataset("training set is empty");
  ModelParams params = init_params(enc);
  AdamState state = make_adam_state(params);
  TrainResult result{params, state, 0, {}};
  const auto data = prepare(train_set, enc.hash_dim);

  Rng order_rng = Rng::stream(cfg.seed, 1);
  Rng dropout_rng = Rng::stream(cfg.seed, 2);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Gradients g = zeros_like(params);
  double best_fa = -1.0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      g.for_each_tensor([](std::string_view, std::vector<double>& t) { std::fill(t.begin(), t.end(), 0.0); });
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = data[order[k]];
        total += accumulate_gradient(params, ex.features, ex.gold, cfg.variant, g, scale, &dropout_rng, cfg.dropout);
      }
      clip_gradient(g, cfg.grad_clip);
      adam_step(params, g, state, cfg.learning_rate);
    }

    EpochLog log{epoch, total / static_cast<double>(data.size()), std::nullopt};
    if (!dev_set.empty()) {
      log.dev = evaluate(predict_all(params, dev_set), dev_set);
      if (log.dev->fa > best_fa) {
        best_fa = log.dev->fa;
        result.params = params;
        result.moments = state;
        result.best_epoch = epoch;
      }
    } else {
      result.params = params;
      result.moments = state;
      result.best_epoch = epoch;
    }
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

}  // namespace proofpgm
