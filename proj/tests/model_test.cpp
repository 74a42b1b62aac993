#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "proofpgm/check.hpp"
#include "proofpgm/model.hpp"
#include "proofpgm/train.hpp"

using namespace proofpgm;

namespace {

Example single_fact_example() {
  Theory t{{parse_statement("Alan is big.", "F1")}};
  return label_example("ex0", t, parse_query("Alan is big."));
}

Example chain_example() {
  Theory t{{parse_statement("Alan is young.", "F1"), parse_statement("Alan is kind.", "F2"),
            parse_statement("If someone is young and someone is kind then someone is green.", "R1")}};
  return label_example("ex1", t, parse_query("Alan is green."));
}

EncoderConfig small_encoder() {
  EncoderConfig c;
  c.hash_dim = 64;
  c.embed_dim = 6;
  c.hidden_dim = 5;
  c.seed = 3;
  return c;
}

const std::vector<double>& tensor(const ModelParams& p, std::string_view name) {
  const std::vector<double>* out = nullptr;
  p.for_each_tensor([&](std::string_view n, const std::vector<double>& t) {
    if (n == name) out = &t;
  });
  return *out;
}

}  // namespace

TEST(model, zero_heads_give_zero_potentials_and_uniform_q) {
  const auto p = init_params(EncoderConfig{});
  const auto ex = chain_example();
  const auto reps = encode(p, ex.theory, ex.query);
  const auto lp = compute_potentials(p, reps);
  const auto q = compute_variational(p, reps);
  ASSERT_EQ(lp.m(), 4u);
  EXPECT_EQ(lp.phiA.size() + 4 * lp.phiV.size() + 16 * lp.phiE.size(), 2u + 16u + 192u);
  for (const auto& r : lp.phiE)
    for (double x : r) EXPECT_EQ(x, 0.0);
  for (const auto& r : q.qE) EXPECT_EQ(r, (BitDist{0.5, 0.5}));
  EXPECT_EQ(q.qA, (BitDist{0.5, 0.5}));
}

TEST(model, variational_softmax) {
  auto p = init_params(small_encoder());
  p.heads[kQE].l2.b = {0.0, std::log(4.0)};
  const auto q = compute_variational(p, encode(p, chain_example().theory, chain_example().query));
  for (const auto& r : q.qE) {
    EXPECT_NEAR(r[0], 0.2, 1e-12);
    EXPECT_NEAR(r[1], 0.8, 1e-12);
  }
}

TEST(model, rows_normalize_for_random_params) {
  Rng rng(2);
  const auto p = random_params(small_encoder(), rng, 1.0);
  const auto ex = chain_example();
  const auto q = compute_variational(p, encode(p, ex.theory, ex.query));
  for (const auto& r : q.qV) EXPECT_NEAR(r[0] + r[1], 1.0, 1e-12);
  for (const auto& r : q.qE) EXPECT_NEAR(r[0] + r[1], 1.0, 1e-12);
}

TEST(model, pair_representation_layout) {
  Rng rng(4);
  const auto p = random_params(small_encoder(), rng, 0.5);
  const auto ex = chain_example();
  const auto r = encode(p, ex.theory, ex.query);
  const auto hp = r.h_pair(2, 3);
  const std::size_t d = r.rep_dim();
  for (std::size_t k = 0; k < d; ++k) {
    EXPECT_EQ(hp[k], r.h_node(2, k));
    EXPECT_EQ(hp[d + k], r.h_node(3, k));
    EXPECT_EQ(hp[2 * d + k], r.h_node(2, k) - r.h_node(3, k));
  }
}

TEST(model, identical_sentences_share_representations) {
  Rng rng(6);
  const auto p = random_params(small_encoder(), rng, 0.5);
  Theory t{{parse_statement("Alan is big.", "F1"), parse_statement("Alan is big.", "F2"),
            parse_statement("If someone is big then someone is red.", "R1")}};
  const auto r = encode(p, t, parse_query("Alan is red."));
  const auto hp = r.h_pair(1, 2);
  for (std::size_t k = 0; k < r.rep_dim(); ++k) {
    EXPECT_EQ(r.h_node(1, k), r.h_node(2, k));
    EXPECT_EQ(hp[2 * r.rep_dim() + k], 0.0);
  }
  const auto lp = compute_potentials(p, r);
  EXPECT_EQ(lp.phiV[1], lp.phiV[2]);
}

TEST(model, permuting_sentences_permutes_rows) {
  Rng rng(8);
  const auto p = random_params(small_encoder(), rng, 0.5);
  const auto ex = chain_example();
  Theory swapped = ex.theory;
  std::swap(swapped.statements[0], swapped.statements[2]);
  const auto a = encode(p, ex.theory, ex.query);
  const auto b = encode(p, swapped, ex.query);
  for (std::size_t k = 0; k < a.rep_dim(); ++k) {
    EXPECT_NEAR(a.h_cls[k], b.h_cls[k], 1e-12);
    EXPECT_NEAR(a.h_node(1, k), b.h_node(3, k), 1e-12);
    EXPECT_NEAR(a.h_node(3, k), b.h_node(1, k), 1e-12);
    EXPECT_NEAR(a.h_node(2, k), b.h_node(2, k), 1e-12);
  }
}

TEST(model, empty_theory_is_rejected) {
  const auto p = init_params(small_encoder());
  EXPECT_THROW(encode(p, Theory{}, parse_query("Alan is big.")), EmptyTheory);
}

TEST(model, initial_loss_counts_uniform_variables) {
  const auto p = init_params(EncoderConfig{});
  const auto ex = single_fact_example();
  for (Variant v : {Variant::base, Variant::gold, Variant::kl, Variant::gold_kl})
    EXPECT_NEAR(loss(p, ex, v), 5 * std::numbers::ln2, 1e-12) << to_string(v);
}

TEST(model, missing_gold_is_an_error) {
  auto ex = single_fact_example();
  ex.gold_proofs.clear();
  EXPECT_THROW(loss(init_params(small_encoder()), ex, Variant::base), MissingGold);
}

TEST(model, kl_term_is_the_only_difference) {
  Rng rng(10);
  const auto p = random_params(small_encoder(), rng, 0.5);
  const auto ex = chain_example();
  const auto feats = extract_features(ex.theory, ex.query, p.config.hash_dim);
  const auto gold = gold_target(ex);
  const auto g = loss_terms(p, feats, gold, Variant::gold);
  const auto gk = loss_terms(p, feats, gold, Variant::gold_kl);
  EXPECT_EQ(g.kl, 0.0);
  EXPECT_GT(gk.kl, 0.0);
  EXPECT_EQ(g.node + g.edge + g.qa, gk.node + gk.edge + gk.qa);
  EXPECT_NEAR(gk.total() - g.total(), gk.kl, 1e-12);
}

TEST(model, variational_answer_head_untouched_without_kl) {
  Rng rng(12);
  const auto p = random_params(small_encoder(), rng, 0.5);
  const auto ex = chain_example();
  for (Variant v : {Variant::base, Variant::gold}) {
    const auto g = grad(p, ex, v);
    for (auto name : {"heads.3.l1.w", "heads.3.l1.b", "heads.3.l2.w", "heads.3.l2.b"})
      for (double x : tensor(g, name)) EXPECT_EQ(x, 0.0) << name;
  }
  double norm = 0.0;
  for (double x : tensor(grad(p, ex, Variant::kl), "heads.3.l2.w")) norm += x * x;
  EXPECT_GT(norm, 0.0);
}

TEST(model, gradient_scales_linearly) {
  Rng rng(14);
  const auto p = random_params(small_encoder(), rng, 0.5);
  const auto ex = chain_example();
  const auto feats = extract_features(ex.theory, ex.query, p.config.hash_dim);
  const auto gold = gold_target(ex);
  Gradients one = zeros_like(p), two = zeros_like(p);
  accumulate_gradient(p, feats, gold, Variant::kl, one, 1.0);
  accumulate_gradient(p, feats, gold, Variant::kl, two, 2.0);
  std::vector<double> a, b;
  one.for_each_tensor([&](std::string_view, const std::vector<double>& t) { a.insert(a.end(), t.begin(), t.end()); });
  two.for_each_tensor([&](std::string_view, const std::vector<double>& t) { b.insert(b.end(), t.begin(), t.end()); });
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(b[k], 2 * a[k], 1e-14 + 1e-12 * std::abs(a[k]));
}

TEST(model, gradients_match_finite_differences) {
  Rng rng(21);
  const auto examples = small_examples(6, 4);
  for (Variant v : {Variant::base, Variant::gold, Variant::kl, Variant::gold_kl}) {
    for (const auto& ex : examples) {
      const auto p = random_params(small_encoder(), rng, 0.3);
      const auto r = check_gradients(p, ex, v, 60, 1e-4, rng);
      EXPECT_GE(r.checked, 50u);
      EXPECT_LE(r.max_relative_error, 1e-4) << to_string(v) << " " << ex.id;
    }
  }
}

TEST(model, dropout_gradients_match_finite_differences) {
  // With a fixed mask the network is smooth, so differences still apply.
  Rng rng(23);
  const auto p = random_params(small_encoder(), rng, 0.3);
  const auto ex = chain_example();
  const auto feats = extract_features(ex.theory, ex.query, p.config.hash_dim);
  const auto gold = gold_target(ex);
  Gradients g = zeros_like(p);
  Rng mask_rng(1);
  accumulate_gradient(p, feats, gold, Variant::base, g, 1.0, &mask_rng, 0.3);
  auto probe = p;
  auto eval = [&] {
    Rng r(1);
    return detail::loss_and_grads(forward(probe, feats, &r, 0.3), gold, Variant::base, nullptr).total();
  };
  for (std::size_t k = 0; k < probe.hidden.w.data.size(); k += 7) {
    const double saved = probe.hidden.w.data[k];
    probe.hidden.w.data[k] = saved + 1e-5;
    const double up = eval();
    probe.hidden.w.data[k] = saved - 1e-5;
    const double down = eval();
    probe.hidden.w.data[k] = saved;
    EXPECT_LE(relative_error(g.hidden.w.data[k], (up - down) / 2e-5), 1e-4);
  }
}

TEST(model, swapping_identical_sentences_keeps_loss) {
  Rng rng(30);
  const auto p = random_params(small_encoder(), rng, 0.5);
  Theory t{{parse_statement("Alan is red.", "F1"), parse_statement("Alan is big.", "F2"),
            parse_statement("Alan is big.", "F3"), parse_statement("If someone is red then someone is nice.", "R1")}};
  const auto ex = label_example("a", t, parse_query("Alan is nice."));
  Theory s = t;
  std::swap(s.statements[1], s.statements[2]);
  const auto ex2 = label_example("b", s, parse_query("Alan is nice."));
  EXPECT_NEAR(loss(p, ex, Variant::kl), loss(p, ex2, Variant::kl), 1e-12);
}

TEST(model, checkpoint_round_trip) {
  Rng rng(40);
  const auto p = random_params(small_encoder(), rng, 1.0);
  TrainConfig cfg;
  cfg.variant = Variant::gold_kl;
  cfg.seed = 9;
  AdamState st{5, random_params(small_encoder(), rng, 1.0), random_params(small_encoder(), rng, 1.0)};
  const std::string path = ::testing::TempDir() + "proofpgm_ck.json";
  save_checkpoint(path, Checkpoint{p, cfg, st});
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.params, p);
  EXPECT_EQ(back.train, cfg);
  ASSERT_TRUE(back.moments);
  EXPECT_EQ(*back.moments, st);
  const auto j = to_json(Checkpoint{p, cfg, st});
  for (auto key : {"version", "encoder", "heads", "naf_map", "moments"}) EXPECT_TRUE(j.contains(key)) << key;
  std::remove(path.c_str());
}

TEST(model, checkpoint_errors) {
  EXPECT_THROW(load_checkpoint("/nonexistent/ck.json"), IoError);
  const std::string path = ::testing::TempDir() + "proofpgm_bad.json";
  {
    std::ofstream out(path);
    out << "{\"version\": 2}";
  }
  EXPECT_THROW(load_checkpoint(path), Error);
  std::remove(path.c_str());
}

TEST(train, zero_epochs_return_initial_params) {
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto r = train({single_fact_example()}, {}, small_encoder(), cfg);
  EXPECT_EQ(r.params, init_params(small_encoder()));
  EXPECT_EQ(r.best_epoch, 0u);
}

TEST(train, empty_training_set_is_rejected) {
  EXPECT_THROW(train({}, {}, small_encoder(), TrainConfig{}), EmptyDataset);
}

TEST(train, clipping_bounds_the_norm) {
  Rng rng(3);
  auto g = random_params(small_encoder(), rng, 1.0);
  const double before = clip_gradient(g, 1.0);
  EXPECT_GT(before, 1.0);
  EXPECT_NEAR(gradient_norm(g), 1.0, 1e-5);
}

TEST(train, deterministic_trajectory) {
  GenConfig gen;
  gen.num_examples = 24;
  gen.max_depth = 1;
  gen.seed = 2;
  const auto data = generate_dataset(gen);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.dropout = 0.1;
  cfg.variant = Variant::kl;
  const auto a = train(data, data, small_encoder(), cfg);
  const auto b = train(data, data, small_encoder(), cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.moments, b.moments);
  EXPECT_NE(a.params, init_params(small_encoder()));
}

TEST(train, learns_depth_zero_corpus) {
  GenConfig gen;
  gen.num_examples = 200;
  gen.max_depth = 0;
  gen.seed = 1;
  const auto tr = generate_dataset(gen);
  gen.seed = 2;
  const auto dev = generate_dataset(gen);
  const auto r = train(tr, dev, EncoderConfig{}, TrainConfig{});
  const auto m = evaluate(predict_all(r.params, dev), dev);
  EXPECT_GE(m.qa, 0.95);
}
