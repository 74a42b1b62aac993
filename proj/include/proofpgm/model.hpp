#pragma once

// Neural parameterization: a hashed bag-of-features encoder, six shared MLP
// heads producing the log-potentials of the joint model and the logits of the
// mean-field distribution q, the training losses and their reverse-mode
// gradients, and checkpoint (de)serialization.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "proofpgm/data.hpp"
#include "proofpgm/error.hpp"
#include "proofpgm/pgm.hpp"
#include "proofpgm/proof_graph.hpp"
#include "proofpgm/qdist.hpp"
#include "proofpgm/rng.hpp"
#include "proofpgm/theory.hpp"

namespace proofpgm {

struct EncoderConfig {
  std::size_t hash_dim = 2048;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
  std::uint64_t seed = 0;

  void validate() const {
    if (hash_dim < 1 || embed_dim < 1 || hidden_dim < 1)
      throw Error("encoder dimensions must be at least 1");
  }
  bool operator==(const EncoderConfig&) const = default;
};

enum class Variant { base, gold, kl, gold_kl };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::base: return "base";
    case Variant::gold: return "gold";
    case Variant::kl: return "kl";
    case Variant::gold_kl: return "gold_kl";
  }
  return "base";
}

inline Variant parse_variant(std::string_view s) {
  for (Variant v : {Variant::base, Variant::gold, Variant::kl, Variant::gold_kl})
    if (to_string(v) == s) return v;
  throw Error("unknown variant '" + std::string(s) + "'");
}

inline bool conditions_on_gold(Variant v) { return v == Variant::gold || v == Variant::gold_kl; }
inline bool uses_kl(Variant v) { return v == Variant::kl || v == Variant::gold_kl; }

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double grad_clip = 1.0;
  double dropout = 0.0;
  Variant variant = Variant::base;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw Error("batch size must be positive");
    if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
    if (!(grad_clip > 0.0)) throw Error("gradient clip must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must lie in [0, 1)");
  }
  bool operator==(const TrainConfig&) const = default;
};

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool operator==(const Matrix&) const = default;
};

/// y = W x + b.
struct Affine {
  Matrix w;  // out × in
  std::vector<double> b;

  Affine() = default;
  Affine(std::size_t out, std::size_t in) : w(out, in), b(out, 0.0) {}
  std::size_t in() const { return w.cols; }
  std::size_t out() const { return w.rows; }

  bool operator==(const Affine&) const = default;
};

/// Two-layer perceptron with a tanh hidden layer.
struct Mlp {
  Affine l1;
  Affine l2;
  bool operator==(const Mlp&) const = default;
};

enum HeadIndex : std::size_t { kPhiA = 0, kPhiV = 1, kPhiE = 2, kQA = 3, kQV = 4, kQE = 5 };
inline constexpr std::array<std::size_t, 6> kHeadOutputs{2, 4, 16, 2, 2, 2};

struct ModelParams {
  EncoderConfig config;
  Matrix embedding;  // hash_dim × embed_dim
  Affine hidden;     // [content mean; alignment sum] → rep
  Affine naf_map;    // rep → rep
  std::array<Mlp, 6> heads;

  std::size_t rep_dim() const { return config.embed_dim; }

  template <class F>
  void for_each_tensor(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    visit(*this, f);
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for_each_tensor([&](std::string_view, const std::vector<double>& t) { n += t.size(); });
    return n;
  }

  bool operator==(const ModelParams&) const = default;

 private:
  template <class Self, class F>
  static void visit(Self& p, F& f) {
    f("embedding", p.embedding.data);
    f("hidden.w", p.hidden.w.data);
    f("hidden.b", p.hidden.b);
    f("naf_map.w", p.naf_map.w.data);
    f("naf_map.b", p.naf_map.b);
    static constexpr std::array<std::string_view, 6> names{
        "heads.0", "heads.1", "heads.2", "heads.3", "heads.4", "heads.5"};
    for (std::size_t k = 0; k < 6; ++k) {
      const std::string base(names[k]);
      f(base + ".l1.w", p.heads[k].l1.w.data);
      f(base + ".l1.b", p.heads[k].l1.b);
      f(base + ".l2.w", p.heads[k].l2.w.data);
      f(base + ".l2.b", p.heads[k].l2.b);
    }
  }
};

using Gradients = ModelParams;

/// Same shapes as `p`, every entry zero.
inline ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  z.for_each_tensor([](std::string_view, std::vector<double>& t) { std::fill(t.begin(), t.end(), 0.0); });
  return z;
}

/// Hidden weights and embeddings from a seeded uniform(-0.05, 0.05); biases
/// and every head output layer start at zero, so initial potentials are zero
/// and initial q is uniform.
inline ModelParams init_params(const EncoderConfig& cfg) {
  cfg.validate();
  const std::size_t e = cfg.embed_dim, h = cfg.hidden_dim;
  ModelParams p;
  p.config = cfg;
  p.embedding = Matrix(cfg.hash_dim, e);
  p.hidden = Affine(e, 2 * e);
  p.naf_map = Affine(e, e);
  const std::array<std::size_t, 6> in{e, e, 3 * e, e, e, 3 * e};
  for (std::size_t k = 0; k < 6; ++k) p.heads[k] = Mlp{Affine(h, in[k]), Affine(kHeadOutputs[k], h)};

  Rng rng(cfg.seed);
  auto fill = [&](std::vector<double>& t) {
    for (double& x : t) x = rng.uniform(-0.05, 0.05);
  };
  fill(p.embedding.data);
  fill(p.hidden.w.data);
  fill(p.naf_map.w.data);
  for (auto& head : p.heads) fill(head.l1.w.data);
  return p;
}

// ---------------------------------------------------------------------------
// Features

/// Hashed feature ids of one example. Each sentence has a content bag (its
/// own tokens, mean-pooled) and an alignment bag (sum-pooled) describing
/// where its tokens match the query and how it overlaps other sentences that
/// match the query. The whole-input [CLS] row is built the same way.
struct Features {
  std::vector<std::vector<std::uint32_t>> content;
  std::vector<std::vector<std::uint32_t>> align;
  std::vector<std::uint32_t> cls_content;
  std::vector<std::uint32_t> cls_align;

  std::size_t num_statements() const { return content.size(); }
};

namespace detail {

inline std::uint32_t hash_feature(std::string_view s, std::size_t dim) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::uint32_t>(h % dim);
}

inline std::vector<std::string> feature_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '.') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline bool is_function_word(const std::string& w) {
  return w == "is" || w == "someone" || w == "if" || w == "then" || w == "and" || w == "not";
}

using Tokens = std::vector<std::string>;
using Match = std::pair<int, int>;

/// Positions (counted from the end) of equal content tokens in a and b.
inline std::vector<Match> matches(const Tokens& a, const Tokens& b) {
  std::vector<Match> out;
  const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
  for (int p = 0; p < na; ++p) {
    if (is_function_word(a[p])) continue;
    for (int r = 0; r < nb; ++r)
      if (a[p] == b[r]) out.emplace_back(na - p, nb - r);
  }
  return out;
}

/// Order-free summary of how a sentence matches the query.
inline std::string signature(const Tokens& t, const Tokens& q) {
  auto m = matches(t, q);
  std::sort(m.begin(), m.end());
  std::string s;
  for (const auto& [p, r] : m) {
    if (!s.empty()) s += ',';
    s += std::to_string(p) + ':' + std::to_string(r);
  }
  return s;
}

inline std::string join(std::initializer_list<std::string> parts) {
  std::string s;
  for (const auto& p : parts) {
    if (!s.empty()) s += ':';
    s += p;
  }
  return s;
}

inline std::string statement_text(const Statement& s) { return s.text.empty() ? render_statement(s) : s.text; }

}  // namespace detail

inline Features extract_features(const Theory& theory, const Query& query, std::size_t hash_dim) {
  using detail::join;
  using std::to_string;
  if (theory.empty()) throw EmptyTheory("cannot encode an empty theory");
  const std::size_t n = theory.size();
  std::vector<detail::Tokens> sent(n);
  for (std::size_t i = 0; i < n; ++i) sent[i] = detail::feature_tokens(detail::statement_text(theory.statements[i]));
  const auto q = detail::feature_tokens(query.text.empty() ? render_query(query) : query.text);

  std::vector<std::vector<detail::Match>> qmatch(n);
  std::vector<std::string> sig(n);
  for (std::size_t i = 0; i < n; ++i) {
    qmatch[i] = detail::matches(sent[i], q);
    sig[i] = detail::signature(sent[i], q);
  }
  auto id = [&](const std::string& s) { return detail::hash_feature(s, hash_dim); };

  Features f;
  f.content.resize(n);
  f.align.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& w : sent[i]) f.content[i].push_back(id("w:" + w));
    auto& al = f.align[i];
    for (const auto& [p, r] : qmatch[i]) al.push_back(id(join({"qa", to_string(p), to_string(r)})));
    al.push_back(id(join({"os", to_string(sent[i].size()), sig[i]})));
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const std::string len_j = to_string(sent[j].size());
      if (!sig[j].empty()) al.push_back(id(join({"gs", len_j, sig[j]})));
      for (const auto& [p, r] : detail::matches(sent[i], sent[j])) {
        al.push_back(id(join({"xs", to_string(p), to_string(r), len_j, sig[j]})));
        for (const auto& [s, s2] : qmatch[j])
          al.push_back(id(join({"xa", to_string(p), to_string(r), to_string(s), to_string(s2)})));
      }
    }
  }

  for (const auto& t : sent)
    for (const auto& w : t) f.cls_content.push_back(id("w:" + w));
  for (const auto& w : q) f.cls_content.push_back(id("w:" + w));
  for (const auto& w : q) f.cls_align.push_back(id("q:" + w));
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [p, r] : qmatch[i]) f.cls_align.push_back(id(join({"cq", to_string(p), to_string(r)})));
    if (!sig[i].empty()) f.cls_align.push_back(id(join({"cs", to_string(sent[i].size()), sig[i]})));
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      for (const auto& [p, r] : detail::matches(sent[i], sent[j]))
        for (const auto& [s, s2] : qmatch[j])
          f.cls_align.push_back(id(join({"cx", to_string(p), to_string(r), to_string(s), to_string(s2)})));
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Forward pass

struct Reps {
  std::vector<double> h_cls;
  Matrix h_node;  // m × rep, row 0 = NAF

  std::size_t m() const { return h_node.rows; }
  std::size_t rep_dim() const { return h_cls.size(); }

  /// h_i ⊕ h_j ⊕ (h_i − h_j).
  std::vector<double> h_pair(std::size_t i, std::size_t j) const {
    const std::size_t d = rep_dim();
    std::vector<double> out(3 * d);
    for (std::size_t k = 0; k < d; ++k) {
      out[k] = h_node(i, k);
      out[d + k] = h_node(j, k);
      out[2 * d + k] = h_node(i, k) - h_node(j, k);
    }
    return out;
  }
};

namespace detail {

inline void affine_forward(const Affine& f, const double* x, double* y) {
  for (std::size_t o = 0; o < f.out(); ++o) {
    const double* w = f.w.row(o);
    double s = f.b[o];
    for (std::size_t k = 0; k < f.in(); ++k) s += w[k] * x[k];
    y[o] = s;
  }
}

/// Accumulates dW, db and (when dx is non-null) dx for y = W x + b.
inline void affine_backward(const Affine& f, const double* x, const double* dy, Affine& g, double* dx) {
  for (std::size_t o = 0; o < f.out(); ++o) {
    const double d = dy[o];
    if (d == 0.0) continue;
    g.b[o] += d;
    double* gw = g.w.row(o);
    for (std::size_t k = 0; k < f.in(); ++k) gw[k] += d * x[k];
    if (dx) {
      const double* w = f.w.row(o);
      for (std::size_t k = 0; k < f.in(); ++k) dx[k] += d * w[k];
    }
  }
}

/// Activations of an MLP applied to every row of an input matrix.
struct MlpCache {
  Matrix hidden;
  Matrix out;
};

inline MlpCache mlp_forward(const Mlp& mlp, const Matrix& x) {
  MlpCache c{Matrix(x.rows, mlp.l1.out()), Matrix(x.rows, mlp.l2.out())};
  for (std::size_t r = 0; r < x.rows; ++r) {
    affine_forward(mlp.l1, x.row(r), c.hidden.row(r));
    for (std::size_t k = 0; k < c.hidden.cols; ++k) c.hidden(r, k) = std::tanh(c.hidden(r, k));
    affine_forward(mlp.l2, c.hidden.row(r), c.out.row(r));
  }
  return c;
}

inline void mlp_backward(const Mlp& mlp, const Matrix& x, const MlpCache& c, const Matrix& dout, Mlp& g,
                         Matrix& dx) {
  std::vector<double> da(mlp.l1.out());
  for (std::size_t r = 0; r < x.rows; ++r) {
    std::fill(da.begin(), da.end(), 0.0);
    affine_backward(mlp.l2, c.hidden.row(r), dout.row(r), g.l2, da.data());
    for (std::size_t k = 0; k < da.size(); ++k) da[k] *= 1.0 - c.hidden(r, k) * c.hidden(r, k);
    affine_backward(mlp.l1, x.row(r), da.data(), g.l1, dx.row(r));
  }
}

// The first layer of a pair head sees [h_i; h_j; h_i - h_j], so it splits
// into U h_i + V h_j with U = W₁ + W₃ and V = W₂ − W₃. Projecting each node
// once avoids building the m(m−1) concatenated inputs.
struct PairProjection {
  Matrix u, v;  // hidden × rep
};

inline PairProjection pair_projection(const Affine& l1, std::size_t d) {
  PairProjection p{Matrix(l1.out(), d), Matrix(l1.out(), d)};
  for (std::size_t o = 0; o < l1.out(); ++o)
    for (std::size_t k = 0; k < d; ++k) {
      p.u(o, k) = l1.w(o, k) + l1.w(o, 2 * d + k);
      p.v(o, k) = l1.w(o, d + k) - l1.w(o, 2 * d + k);
    }
  return p;
}

inline MlpCache pair_forward(const Mlp& mlp, const Matrix& h) {
  const std::size_t m = h.rows, d = h.cols, hid = mlp.l1.out();
  const auto proj = pair_projection(mlp.l1, d);
  Matrix pu(m, hid), pv(m, hid);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t o = 0; o < hid; ++o) {
      double su = 0.0, sv = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        su += proj.u(o, k) * h(i, k);
        sv += proj.v(o, k) * h(i, k);
      }
      pu(i, o) = su;
      pv(i, o) = sv;
    }
  MlpCache c{Matrix(num_pairs(m), hid), Matrix(num_pairs(m), mlp.l2.out())};
  std::size_t row = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      double* a = c.hidden.row(row);
      for (std::size_t o = 0; o < hid; ++o) a[o] = std::tanh(pu(i, o) + pv(j, o) + mlp.l1.b[o]);
      affine_forward(mlp.l2, a, c.out.row(row));
      ++row;
    }
  return c;
}

inline void pair_backward(const Mlp& mlp, const Matrix& h, const MlpCache& c, const Matrix& dout, Mlp& g,
                          Matrix& dh) {
  const std::size_t m = h.rows, d = h.cols, hid = mlp.l1.out();
  Matrix dpu(m, hid), dpv(m, hid);
  std::vector<double> da(hid);
  std::size_t row = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      std::fill(da.begin(), da.end(), 0.0);
      affine_backward(mlp.l2, c.hidden.row(row), dout.row(row), g.l2, da.data());
      for (std::size_t o = 0; o < hid; ++o) {
        const double a = c.hidden(row, o);
        const double dz = da[o] * (1.0 - a * a);
        g.l1.b[o] += dz;
        dpu(i, o) += dz;
        dpv(j, o) += dz;
      }
      ++row;
    }
  const auto proj = pair_projection(mlp.l1, d);
  for (std::size_t o = 0; o < hid; ++o) {
    double* gw = g.l1.w.row(o);
    for (std::size_t i = 0; i < m; ++i) {
      const double du = dpu(i, o), dv = dpv(i, o);
      if (du == 0.0 && dv == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) {
        const double x = h(i, k);
        gw[k] += du * x;
        gw[d + k] += dv * x;
        gw[2 * d + k] += (du - dv) * x;
        dh(i, k) += du * proj.u(o, k) + dv * proj.v(o, k);
      }
    }
  }
}

inline Matrix single_row(const std::vector<double>& x) {
  Matrix out(1, x.size());
  std::copy(x.begin(), x.end(), out.data.begin());
  return out;
}

}  // namespace detail

/// Everything the backward pass needs from one forward evaluation.
struct Forward {
  Matrix x_node;               // n × 2·rep encoder inputs (statements only)
  std::vector<double> x_cls;   // 2·rep
  Matrix mask_node;            // n × rep dropout scales (empty when unused)
  std::vector<double> mask_cls;
  Matrix t_node;               // n × rep tanh outputs before dropout
  std::vector<double> t_cls;
  Reps reps;
  std::array<detail::MlpCache, 6> heads;
  LogPotentials lp;
  QDist q;
};

namespace detail {

inline void bag_into(const Matrix& emb, const std::vector<std::uint32_t>& ids, bool mean, double* out) {
  const std::size_t d = emb.cols;
  for (std::uint32_t id : ids) {
    const double* e = emb.row(id);
    for (std::size_t k = 0; k < d; ++k) out[k] += e[k];
  }
  if (mean && !ids.empty())
    for (std::size_t k = 0; k < d; ++k) out[k] /= static_cast<double>(ids.size());
}

inline void check_features(const ModelParams& p, const Features& f) {
  if (f.num_statements() == 0) throw EmptyTheory("cannot encode an empty theory");
  if (f.align.size() != f.content.size()) throw DimensionMismatch("feature bags disagree on sentence count");
  auto check = [&](const std::vector<std::uint32_t>& ids) {
    for (auto id : ids)
      if (id >= p.embedding.rows) throw IndexOutOfRange("feature id beyond the hash table");
  };
  for (const auto& b : f.content) check(b);
  for (const auto& b : f.align) check(b);
  check(f.cls_content);
  check(f.cls_align);
}

inline void dropout_mask(Rng& rng, double rate, double* out, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) out[k] = rng.bernoulli(rate) ? 0.0 : 1.0 / (1.0 - rate);
}

inline void heads_forward(const ModelParams& p, Forward& f) {
  const Reps& r = f.reps;
  const std::size_t m = r.m();
  const Matrix cls = single_row(r.h_cls);
  for (std::size_t k : {kPhiA, kQA}) f.heads[k] = mlp_forward(p.heads[k], cls);
  for (std::size_t k : {kPhiV, kQV}) f.heads[k] = mlp_forward(p.heads[k], r.h_node);
  for (std::size_t k : {kPhiE, kQE}) f.heads[k] = pair_forward(p.heads[k], r.h_node);

  f.lp = LogPotentials(m);
  f.q = QDist(m);
  const auto& a = f.heads[kPhiA].out;
  f.lp.phiA = {a(0, 0), a(0, 1)};
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < 4; ++c) f.lp.phiV[i][c] = f.heads[kPhiV].out(i, c);
  for (std::size_t e = 0; e < f.lp.phiE.size(); ++e)
    for (std::size_t c = 0; c < 16; ++c) f.lp.phiE[e][c] = f.heads[kPhiE].out(e, c);
  const auto& qa = f.heads[kQA].out;
  f.q.qA = softmax2(qa(0, 0), qa(0, 1));
  for (std::size_t i = 0; i < m; ++i) f.q.qV[i] = softmax2(f.heads[kQV].out(i, 0), f.heads[kQV].out(i, 1));
  for (std::size_t e = 0; e < f.q.qE.size(); ++e)
    f.q.qE[e] = softmax2(f.heads[kQE].out(e, 0), f.heads[kQE].out(e, 1));
}

}  // namespace detail

/// Full forward pass. With a non-null rng and a positive rate, inverted
/// dropout is applied to the sentence and [CLS] representations.
inline Forward forward(const ModelParams& p, const Features& feats, Rng* dropout_rng = nullptr,
                       double dropout = 0.0) {
  detail::check_features(p, feats);
  const std::size_t n = feats.num_statements(), d = p.rep_dim();
  Forward f;
  f.x_node = Matrix(n, 2 * d);
  f.x_cls.assign(2 * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    detail::bag_into(p.embedding, feats.content[i], true, f.x_node.row(i));
    detail::bag_into(p.embedding, feats.align[i], false, f.x_node.row(i) + d);
  }
  detail::bag_into(p.embedding, feats.cls_content, true, f.x_cls.data());
  detail::bag_into(p.embedding, feats.cls_align, false, f.x_cls.data() + d);

  f.t_node = Matrix(n, d);
  f.t_cls.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) detail::affine_forward(p.hidden, f.x_node.row(i), f.t_node.row(i));
  detail::affine_forward(p.hidden, f.x_cls.data(), f.t_cls.data());
  for (double& x : f.t_node.data) x = std::tanh(x);
  for (double& x : f.t_cls) x = std::tanh(x);

  f.reps.h_cls = f.t_cls;
  f.reps.h_node = Matrix(n + 1, d);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(f.t_node.row(i), d, f.reps.h_node.row(i + 1));
  if (dropout_rng && dropout > 0.0) {
    f.mask_node = Matrix(n, d);
    f.mask_cls.assign(d, 0.0);
    detail::dropout_mask(*dropout_rng, dropout, f.mask_node.data.data(), f.mask_node.data.size());
    detail::dropout_mask(*dropout_rng, dropout, f.mask_cls.data(), d);
    for (std::size_t k = 0; k < d; ++k) f.reps.h_cls[k] *= f.mask_cls[k];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) f.reps.h_node(i + 1, k) *= f.mask_node(i, k);
  }
  detail::affine_forward(p.naf_map, f.reps.h_cls.data(), f.reps.h_node.row(0));

  detail::heads_forward(p, f);
  return f;
}

inline Reps encode(const ModelParams& p, const Theory& theory, const Query& query) {
  return forward(p, extract_features(theory, query, p.config.hash_dim)).reps;
}

inline LogPotentials compute_potentials(const ModelParams& p, const Reps& r) {
  if (r.rep_dim() != p.rep_dim() || r.h_node.cols != p.rep_dim())
    throw DimensionMismatch("representation size does not match the model");
  Forward f;
  f.reps = r;
  detail::heads_forward(p, f);
  return f.lp;
}

inline QDist compute_variational(const ModelParams& p, const Reps& r) {
  if (r.rep_dim() != p.rep_dim() || r.h_node.cols != p.rep_dim())
    throw DimensionMismatch("representation size does not match the model");
  Forward f;
  f.reps = r;
  detail::heads_forward(p, f);
  return f.q;
}

// ---------------------------------------------------------------------------
// Losses

/// Gold bits of an example: the answer and the indicators of its first gold
/// proof over the node order NAF, statements.
struct GoldTarget {
  std::uint8_t a = 0;
  std::vector<std::uint8_t> v;
  std::vector<std::uint8_t> e;
};

inline GoldTarget gold_target(const Example& ex) {
  if (ex.gold_proofs.empty()) throw MissingGold("example " + ex.id + " has no gold proof");
  const auto order = node_order(ex.theory);
  const std::size_t m = order.size();
  auto index = [&](const std::string& id) {
    const auto it = std::find(order.begin(), order.end(), id);
    if (it == order.end()) throw IdMismatch("proof node " + id + " is not in the theory of " + ex.id);
    return static_cast<std::size_t>(it - order.begin());
  };
  GoldTarget g;
  g.a = ex.answer ? 1 : 0;
  g.v.assign(m, 0);
  g.e.assign(num_pairs(m), 0);
  const auto& proof = ex.gold_proofs.front();
  for (const auto& n : proof.nodes) g.v[index(n)] = 1;
  for (const auto& [s, t] : proof.edges) {
    const std::size_t i = index(s), j = index(t);
    if (i == j) throw IdMismatch("self edge in gold proof of " + ex.id);
    g.e[pair_index(i, j, m)] = 1;
  }
  return g;
}

struct LossTerms {
  double node = 0.0;
  double edge = 0.0;
  double qa = 0.0;
  double kl = 0.0;
  double total() const { return node + edge + qa + kl; }
};

namespace detail {

/// Gradients of the loss with respect to every head output.
struct OutputGrads {
  std::array<Matrix, 6> d;
};

inline std::array<double, 2> log_softmax2(double s0, double s1) {
  const double z = log_sum_exp2(s0, s1);
  return {s0 - z, s1 - z};
}

/// Cross-entropy −log softmax(l)[target]; adds its logit gradient to g.
inline double cross_entropy(const double* l, int target, double* g) {
  const auto lq = log_softmax2(l[0], l[1]);
  if (g) {
    g[0] += std::exp(lq[0]) - (target == 0 ? 1.0 : 0.0);
    g[1] += std::exp(lq[1]) - (target == 1 ? 1.0 : 0.0);
  }
  return -lq[target];
}

/// KL(softmax(l) ‖ softmax(s)). Adds gradients to gl (logits of q) and
/// returns the score gradient in gs.
inline double kl_bits(const double* l, const std::array<double, 2>& s, double* gl, std::array<double, 2>& gs) {
  const auto lq = log_softmax2(l[0], l[1]);
  const auto lp = log_softmax2(s[0], s[1]);
  const double q0 = std::exp(lq[0]), q1 = std::exp(lq[1]);
  const double g0 = lq[0] - lp[0], g1 = lq[1] - lp[1];
  const double kl = q0 * g0 + q1 * g1;
  if (gl) {
    gl[0] += q0 * (g0 - kl);
    gl[1] += q1 * (g1 - kl);
  }
  gs = {std::exp(lp[0]) - q0, std::exp(lp[1]) - q1};
  return kl;
}

inline LossTerms loss_and_grads(const Forward& f, const GoldTarget& gold, Variant variant, OutputGrads* out) {
  const LogPotentials& lp = f.lp;
  const std::size_t m = lp.m();
  if (gold.v.size() != m || gold.e.size() != num_pairs(m))
    throw DimensionMismatch("gold proof does not match the number of nodes");
  if (out)
    for (std::size_t k = 0; k < 6; ++k) out->d[k] = Matrix(f.heads[k].out.rows, f.heads[k].out.cols);
  auto grad_row = [&](std::size_t head, std::size_t r) -> double* { return out ? out->d[head].row(r) : nullptr; };

  LossTerms t;
  for (std::size_t i = 0; i < m; ++i) t.node += cross_entropy(f.heads[kQV].out.row(i), gold.v[i], grad_row(kQV, i));
  for (std::size_t e = 0; e < num_pairs(m); ++e)
    t.edge += cross_entropy(f.heads[kQE].out.row(e), gold.e[e], grad_row(kQE, e));

  const HardPredictions hard = hard_predictions(f.q);
  const auto& cv = conditions_on_gold(variant) ? gold.v : hard.v;
  const auto& ce = conditions_on_gold(variant) ? gold.e : hard.e;

  // Adds `scale` to every potential cell feeding the answer score for value a.
  auto answer_cells = [&](const std::vector<std::uint8_t>& v, const std::vector<std::uint8_t>& e, int a,
                          double scale) {
    if (!out || scale == 0.0) return;
    out->d[kPhiA](0, a) += scale;
    for (std::size_t i = 0; i < m; ++i) out->d[kPhiV](i, node_cell(v[i], a)) += scale;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (i != j) {
          const std::size_t pe = pair_index(i, j, m);
          out->d[kPhiE](pe, edge_cell(v[i], v[j], e[pe], a)) += scale;
        }
  };

  {
    const std::array<double, 2> s{answer_score(lp, cv, ce, 0), answer_score(lp, cv, ce, 1)};
    const auto ls = log_softmax2(s[0], s[1]);
    t.qa = -ls[gold.a];
    for (int a = 0; a < 2; ++a) answer_cells(cv, ce, a, std::exp(ls[a]) - (a == gold.a ? 1.0 : 0.0));
  }

  if (uses_kl(variant)) {
    const auto& v = hard.v;
    const auto& e = hard.e;
    const int a = hard.a;
    std::array<double, 2> gs{};

    const std::array<double, 2> sa{answer_score(lp, v, e, 0), answer_score(lp, v, e, 1)};
    t.kl += kl_bits(f.heads[kQA].out.row(0), sa, grad_row(kQA, 0), gs);
    for (int b = 0; b < 2; ++b) answer_cells(v, e, b, gs[b]);

    for (std::size_t i = 0; i < m; ++i) {
      std::array<double, 2> s{};
      for (int b = 0; b < 2; ++b) {
        s[b] = lp.phiV[i][node_cell(b, a)];
        for (std::size_t j = 0; j < m; ++j) {
          if (j == i) continue;
          s[b] += lp.edge(i, j)[edge_cell(b, v[j], e[pair_index(i, j, m)], a)];
          s[b] += lp.edge(j, i)[edge_cell(v[j], b, e[pair_index(j, i, m)], a)];
        }
      }
      t.kl += kl_bits(f.heads[kQV].out.row(i), s, grad_row(kQV, i), gs);
      if (!out) continue;
      for (int b = 0; b < 2; ++b) {
        out->d[kPhiV](i, node_cell(b, a)) += gs[b];
        for (std::size_t j = 0; j < m; ++j) {
          if (j == i) continue;
          const std::size_t ij = pair_index(i, j, m), ji = pair_index(j, i, m);
          out->d[kPhiE](ij, edge_cell(b, v[j], e[ij], a)) += gs[b];
          out->d[kPhiE](ji, edge_cell(v[j], b, e[ji], a)) += gs[b];
        }
      }
    }

    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j) continue;
        const std::size_t pe = pair_index(i, j, m);
        const auto& row = lp.phiE[pe];
        const std::array<double, 2> s{row[edge_cell(v[i], v[j], 0, a)], row[edge_cell(v[i], v[j], 1, a)]};
        t.kl += kl_bits(f.heads[kQE].out.row(pe), s, grad_row(kQE, pe), gs);
        if (!out) continue;
        for (int b = 0; b < 2; ++b) out->d[kPhiE](pe, edge_cell(v[i], v[j], b, a)) += gs[b];
      }
  }
  return t;
}

inline void backward(const ModelParams& p, const Features& feats, const Forward& f, const OutputGrads& dout,
                     double scale, Gradients& g) {
  const std::size_t n = feats.num_statements(), d = p.rep_dim();
  std::array<Matrix, 6> scaled = dout.d;
  if (scale != 1.0)
    for (auto& mat : scaled)
      for (double& x : mat.data) x *= scale;

  const Matrix cls = single_row(f.reps.h_cls);
  Matrix dcls(1, d), dnode(n + 1, d);
  for (std::size_t k : {kPhiA, kQA}) mlp_backward(p.heads[k], cls, f.heads[k], scaled[k], g.heads[k], dcls);
  for (std::size_t k : {kPhiV, kQV})
    mlp_backward(p.heads[k], f.reps.h_node, f.heads[k], scaled[k], g.heads[k], dnode);
  for (std::size_t k : {kPhiE, kQE})
    pair_backward(p.heads[k], f.reps.h_node, f.heads[k], scaled[k], g.heads[k], dnode);

  affine_backward(p.naf_map, f.reps.h_cls.data(), dnode.row(0), g.naf_map, dcls.row(0));

  const bool masked = !f.mask_cls.empty();
  std::vector<double> dz(d), dx(2 * d);
  auto through_encoder = [&](const double* dh, const double* t, const double* mask, const double* x,
                             const std::vector<std::uint32_t>& content, const std::vector<std::uint32_t>& align) {
    for (std::size_t k = 0; k < d; ++k) dz[k] = dh[k] * (mask ? mask[k] : 1.0) * (1.0 - t[k] * t[k]);
    std::fill(dx.begin(), dx.end(), 0.0);
    affine_backward(p.hidden, x, dz.data(), g.hidden, dx.data());
    if (!content.empty()) {
      const double inv = 1.0 / static_cast<double>(content.size());
      for (auto id : content) {
        double* ge = g.embedding.row(id);
        for (std::size_t k = 0; k < d; ++k) ge[k] += dx[k] * inv;
      }
    }
    for (auto id : align) {
      double* ge = g.embedding.row(id);
      for (std::size_t k = 0; k < d; ++k) ge[k] += dx[d + k];
    }
  };
  for (std::size_t i = 0; i < n; ++i)
    through_encoder(dnode.row(i + 1), f.t_node.row(i), masked ? f.mask_node.row(i) : nullptr, f.x_node.row(i),
                    feats.content[i], feats.align[i]);
  through_encoder(dcls.row(0), f.t_cls.data(), masked ? f.mask_cls.data() : nullptr, f.x_cls.data(),
                  feats.cls_content, feats.cls_align);
}

}  // namespace detail

inline LossTerms loss_terms(const ModelParams& p, const Features& feats, const GoldTarget& gold, Variant variant) {
  return detail::loss_and_grads(forward(p, feats), gold, variant, nullptr);
}

inline double loss(const ModelParams& p, const Example& ex, Variant variant) {
  const auto gold = gold_target(ex);
  return loss_terms(p, extract_features(ex.theory, ex.query, p.config.hash_dim), gold, variant).total();
}

/// Adds scale · ∂loss/∂params to g and returns the unscaled loss. Hard
/// predictions are treated as constants.
inline double accumulate_gradient(const ModelParams& p, const Features& feats, const GoldTarget& gold,
                                  Variant variant, Gradients& g, double scale = 1.0, Rng* dropout_rng = nullptr,
                                  double dropout = 0.0) {
  const Forward f = forward(p, feats, dropout_rng, dropout);
  detail::OutputGrads dout;
  const LossTerms t = detail::loss_and_grads(f, gold, variant, &dout);
  detail::backward(p, feats, f, dout, scale, g);
  return t.total();
}

inline Gradients grad(const ModelParams& p, const Example& ex, Variant variant) {
  Gradients g = zeros_like(p);
  const auto gold = gold_target(ex);
  accumulate_gradient(p, extract_features(ex.theory, ex.query, p.config.hash_dim), gold, variant, g);
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoints

struct AdamState {
  std::uint64_t step = 0;
  ModelParams m;
  ModelParams v;
  bool operator==(const AdamState&) const = default;
};

struct Checkpoint {
  ModelParams params;
  TrainConfig train;
  std::optional<AdamState> moments;
};

namespace detail {

inline nlohmann::ordered_json tensor_json(const std::vector<double>& t) { return nlohmann::ordered_json(t); }

inline void read_tensor(const nlohmann::json& j, std::vector<double>& t, std::string_view name) {
  if (!j.is_array() || j.size() != t.size())
    throw DimensionMismatch("checkpoint tensor " + std::string(name) + " has the wrong size");
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = j[k].get<double>();
}

inline nlohmann::ordered_json affine_json(const Affine& a) {
  return {{"w", tensor_json(a.w.data)}, {"b", tensor_json(a.b)}};
}

inline nlohmann::ordered_json named_tensors(const ModelParams& p) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  p.for_each_tensor([&](std::string_view name, const std::vector<double>& t) { j[std::string(name)] = tensor_json(t); });
  return j;
}

inline void read_named_tensors(const nlohmann::json& j, ModelParams& p) {
  p.for_each_tensor([&](std::string_view name, std::vector<double>& t) {
    const std::string key(name);
    if (!j.contains(key)) throw Error("checkpoint moments lack " + key);
    read_tensor(j.at(key), t, key);
  });
}

}  // namespace detail

inline nlohmann::ordered_json train_config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},         {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"grad_clip", c.grad_clip},   {"dropout", c.dropout},       {"variant", std::string(to_string(c.variant))},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::ordered_json to_json(const Checkpoint& ck) {
  using detail::tensor_json;
  const ModelParams& p = ck.params;
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["encoder"] = {{"hash_dim", p.config.hash_dim},
                  {"embed_dim", p.config.embed_dim},
                  {"hidden_dim", p.config.hidden_dim},
                  {"seed", p.config.seed},
                  {"embedding", tensor_json(p.embedding.data)},
                  {"hidden", detail::affine_json(p.hidden)}};
  nlohmann::ordered_json heads = nlohmann::ordered_json::array();
  for (const auto& h : p.heads) heads.push_back({{"l1", detail::affine_json(h.l1)}, {"l2", detail::affine_json(h.l2)}});
  j["heads"] = std::move(heads);
  j["naf_map"] = detail::affine_json(p.naf_map);
  if (ck.moments) {
    j["moments"] = {{"step", ck.moments->step},
                    {"m", detail::named_tensors(ck.moments->m)},
                    {"v", detail::named_tensors(ck.moments->v)}};
  } else {
    j["moments"] = nullptr;
  }
  j["train_config"] = train_config_json(ck.train);
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw Error("unsupported checkpoint version");
    const auto& enc = j.at("encoder");
    EncoderConfig cfg;
    cfg.hash_dim = enc.at("hash_dim").get<std::size_t>();
    cfg.embed_dim = enc.at("embed_dim").get<std::size_t>();
    cfg.hidden_dim = enc.at("hidden_dim").get<std::size_t>();
    cfg.seed = enc.at("seed").get<std::uint64_t>();
    Checkpoint ck;
    ck.params = init_params(cfg);
    ModelParams& p = ck.params;
    auto read_affine = [](const nlohmann::json& a, Affine& out, std::string_view name) {
      detail::read_tensor(a.at("w"), out.w.data, name);
      detail::read_tensor(a.at("b"), out.b, name);
    };
    detail::read_tensor(enc.at("embedding"), p.embedding.data, "embedding");
    read_affine(enc.at("hidden"), p.hidden, "hidden");
    read_affine(j.at("naf_map"), p.naf_map, "naf_map");
    const auto& heads = j.at("heads");
    if (!heads.is_array() || heads.size() != 6) throw DimensionMismatch("checkpoint must have six heads");
    for (std::size_t k = 0; k < 6; ++k) {
      read_affine(heads[k].at("l1"), p.heads[k].l1, "head");
      read_affine(heads[k].at("l2"), p.heads[k].l2, "head");
    }
    if (j.contains("train_config")) ck.train = train_config_from_json(j.at("train_config"));
    if (j.contains("moments") && !j.at("moments").is_null()) {
      const auto& mo = j.at("moments");
      AdamState st{mo.at("step").get<std::uint64_t>(), zeros_like(p), zeros_like(p)};
      detail::read_named_tensors(mo.at("m"), st.m);
      detail::read_named_tensors(mo.at("v"), st.v);
      ck.moments = std::move(st);
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << to_json(ck).dump() << '\n';
  if (!out) throw IoError("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace proofpgm
