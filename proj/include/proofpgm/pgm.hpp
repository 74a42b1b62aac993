#pragma once

// Undirected joint model over the answer A, node indicators V_i and edge
// indicators E_ij:
//
//   p(y) ∝ Φᴬ(a) · Π_i Φᵛ_i(v_i, a) · Π_{i≠j} Φᴱ_ij(v_i, v_j, e_ij, a)
//
// All potentials are kept in log space. Node index 0 is the NAF node and
// indices 1..n follow the statement order of the theory.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "proofpgm/error.hpp"

namespace proofpgm {

/// Probability of a binary variable taking value 0 and 1.
using BitDist = std::array<double, 2>;

/// Number of ordered pairs (i, j), i ≠ j, over m nodes.
constexpr std::size_t num_pairs(std::size_t m) { return m * (m ? m - 1 : 0); }

/// Row-major position of ordered pair (i, j) with the diagonal skipped.
constexpr std::size_t pair_index(std::size_t i, std::size_t j, std::size_t m) {
  return i * (m - 1) + (j < i ? j : j - 1);
}

/// Index into a Φᵛ row.
constexpr std::size_t node_cell(int v, int a) { return 2 * v + a; }
/// Index into a Φᴱ row; v_i is the most significant bit.
constexpr std::size_t edge_cell(int vi, int vj, int e, int a) { return 8 * vi + 4 * vj + 2 * e + a; }

inline BitDist softmax2(double s0, double s1) {
  const double hi = std::max(s0, s1);
  const double e0 = std::exp(s0 - hi), e1 = std::exp(s1 - hi);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

inline double log_sum_exp2(double s0, double s1) {
  const double hi = std::max(s0, s1);
  return hi + std::log(std::exp(s0 - hi) + std::exp(s1 - hi));
}

struct Assignment {
  std::uint8_t a = 0;
  std::vector<std::uint8_t> v;  // size m
  std::vector<std::uint8_t> e;  // size m(m-1), pair_index order

  Assignment() = default;
  explicit Assignment(std::size_t m) : v(m, 0), e(num_pairs(m), 0) {}

  std::size_t m() const { return v.size(); }
  std::uint8_t edge(std::size_t i, std::size_t j) const { return e[pair_index(i, j, m())]; }
  std::uint8_t& edge(std::size_t i, std::size_t j) { return e[pair_index(i, j, m())]; }
  /// Total number of binary variables, 1 + m + m(m-1).
  std::size_t num_bits() const { return 1 + v.size() + e.size(); }

  bool operator==(const Assignment&) const = default;
};

struct LogPotentials {
  std::array<double, 2> phiA{0.0, 0.0};
  std::vector<std::array<double, 4>> phiV;   // m rows
  std::vector<std::array<double, 16>> phiE;  // m(m-1) rows, pair_index order

  LogPotentials() = default;
  explicit LogPotentials(std::size_t m) : phiV(m, std::array<double, 4>{}), phiE(num_pairs(m), std::array<double, 16>{}) {}

  std::size_t m() const { return phiV.size(); }
  const std::array<double, 16>& edge(std::size_t i, std::size_t j) const {
    return phiE[pair_index(i, j, m())];
  }
  std::array<double, 16>& edge(std::size_t i, std::size_t j) { return phiE[pair_index(i, j, m())]; }

  bool all_finite() const {
    auto ok = [](double x) { return std::isfinite(x); };
    for (double x : phiA)
      if (!ok(x)) return false;
    for (const auto& r : phiV)
      for (double x : r)
        if (!ok(x)) return false;
    for (const auto& r : phiE)
      for (double x : r)
        if (!ok(x)) return false;
    return true;
  }
};

/// Identifies one of the binary variables of the model.
struct Variable {
  enum class Kind { answer, node, edge };
  Kind kind = Kind::answer;
  std::size_t i = 0;
  std::size_t j = 0;

  static Variable answer() { return {Kind::answer, 0, 0}; }
  static Variable node(std::size_t i) { return {Kind::node, i, 0}; }
  static Variable edge(std::size_t i, std::size_t j) { return {Kind::edge, i, j}; }
};

namespace detail {

inline void check_dims(const LogPotentials& lp, std::size_t m_v, std::size_t n_e) {
  if (lp.phiE.size() != num_pairs(lp.m()))
    throw DimensionMismatch("edge table has " + std::to_string(lp.phiE.size()) + " rows for m=" +
                            std::to_string(lp.m()));
  if (m_v != lp.m() || n_e != lp.phiE.size())
    throw DimensionMismatch("assignment of size m=" + std::to_string(m_v) +
                            " does not match potentials of size m=" + std::to_string(lp.m()));
}

inline void check_node(const LogPotentials& lp, std::size_t i) {
  if (i >= lp.m())
    throw IndexOutOfRange("node " + std::to_string(i) + " out of range for m=" +
                          std::to_string(lp.m()));
}

inline constexpr std::size_t kMaxEnumerationBits = 22;

inline void check_enumerable(std::size_t bits) {
  if (bits > kMaxEnumerationBits)
    throw TooLarge(std::to_string(bits) + " variables exceed the enumeration limit of " +
                   std::to_string(kMaxEnumerationBits));
}

}  // namespace detail

/// Unnormalized log probability of a full assignment.
inline double joint_log_score(const LogPotentials& lp, const Assignment& y) {
  detail::check_dims(lp, y.v.size(), y.e.size());
  const std::size_t m = lp.m();
  double s = lp.phiA[y.a];
  for (std::size_t i = 0; i < m; ++i) s += lp.phiV[i][node_cell(y.v[i], y.a)];
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) s += lp.edge(i, j)[edge_cell(y.v[i], y.v[j], y.edge(i, j), y.a)];
  return s;
}

/// Decodes bit pattern `bits` into an assignment: bit 0 is A, bits 1..m are
/// the V_i and the remaining bits the E_ij in pair_index order.
inline Assignment assignment_from_bits(std::uint64_t bits, std::size_t m) {
  Assignment y(m);
  y.a = bits & 1u;
  for (std::size_t i = 0; i < m; ++i) y.v[i] = (bits >> (1 + i)) & 1u;
  for (std::size_t k = 0; k < y.e.size(); ++k) y.e[k] = (bits >> (1 + m + k)) & 1u;
  return y;
}

/// log Z by enumerating all 2^B assignments; B = 1 + m + m(m-1) ≤ 22.
inline double exact_log_partition(const LogPotentials& lp) {
  const std::size_t m = lp.m();
  const std::size_t bits = 1 + m + num_pairs(m);
  detail::check_enumerable(bits);
  double hi = -std::numeric_limits<double>::infinity();
  double acc = 0.0;  // Σ exp(score - hi)
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << bits); ++mask) {
    const double s = joint_log_score(lp, assignment_from_bits(mask, m));
    if (s > hi) {
      acc = acc * std::exp(hi - s) + 1.0;
      hi = s;
    } else {
      acc += std::exp(s - hi);
    }
  }
  return hi + std::log(acc);
}

namespace detail {

inline std::uint8_t& slot(Assignment& y, const Variable& var) {
  switch (var.kind) {
    case Variable::Kind::answer:
      return y.a;
    case Variable::Kind::node:
      if (var.i >= y.m()) throw IndexOutOfRange("node index out of range");
      return y.v[var.i];
    case Variable::Kind::edge:
      if (var.i >= y.m() || var.j >= y.m() || var.i == var.j)
        throw IndexOutOfRange("edge index out of range");
      return y.edge(var.i, var.j);
  }
  throw IndexOutOfRange("unknown variable");
}

}  // namespace detail

/// p(var | all other variables fixed at y), from the full joint score of both
/// completions. Reference implementation for the closed-form conditionals.
inline BitDist exact_conditional(const LogPotentials& lp, const Assignment& y, const Variable& var) {
  detail::check_dims(lp, y.v.size(), y.e.size());
  detail::check_enumerable(y.num_bits());
  Assignment z = y;
  auto& bit = detail::slot(z, var);
  bit = 0;
  const double s0 = joint_log_score(lp, z);
  bit = 1;
  const double s1 = joint_log_score(lp, z);
  return softmax2(s0, s1);
}

/// Score of answer value `a` with every other variable fixed.
inline double answer_score(const LogPotentials& lp, const std::vector<std::uint8_t>& v,
                           const std::vector<std::uint8_t>& e, int a) {
  const std::size_t m = lp.m();
  double s = lp.phiA[a];
  for (std::size_t i = 0; i < m; ++i) s += lp.phiV[i][node_cell(v[i], a)];
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) s += lp.edge(i, j)[edge_cell(v[i], v[j], e[pair_index(i, j, m)], a)];
  return s;
}

/// p(A | V = v, E = e).
inline BitDist conditional_answer(const LogPotentials& lp, const std::vector<std::uint8_t>& v,
                                  const std::vector<std::uint8_t>& e) {
  detail::check_dims(lp, v.size(), e.size());
  return softmax2(answer_score(lp, v, e, 0), answer_score(lp, v, e, 1));
}

/// p(V_i | Y₋V_i): only Φᵛ_i and the edge factors touching node i matter.
inline BitDist conditional_node(const LogPotentials& lp, const Assignment& y, std::size_t i) {
  detail::check_dims(lp, y.v.size(), y.e.size());
  detail::check_node(lp, i);
  const std::size_t m = lp.m();
  std::array<double, 2> s{};
  for (int vi = 0; vi < 2; ++vi) {
    s[vi] = lp.phiV[i][node_cell(vi, y.a)];
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      s[vi] += lp.edge(i, j)[edge_cell(vi, y.v[j], y.edge(i, j), y.a)];
      s[vi] += lp.edge(j, i)[edge_cell(y.v[j], vi, y.edge(j, i), y.a)];
    }
  }
  return softmax2(s[0], s[1]);
}

/// p(E_ij | Y₋E_ij): depends on the single factor Φᴱ_ij.
inline BitDist conditional_edge(const LogPotentials& lp, const Assignment& y, std::size_t i,
                                std::size_t j) {
  detail::check_dims(lp, y.v.size(), y.e.size());
  detail::check_node(lp, i);
  detail::check_node(lp, j);
  if (i == j) throw IndexOutOfRange("edge (" + std::to_string(i) + "," + std::to_string(i) + ") is a self pair");
  const auto& row = lp.edge(i, j);
  return softmax2(row[edge_cell(y.v[i], y.v[j], 0, y.a)], row[edge_cell(y.v[i], y.v[j], 1, y.a)]);
}

/// log Π_var p(var = y_var | Y₋var).
inline double pseudolikelihood_log(const LogPotentials& lp, const Assignment& y) {
  detail::check_dims(lp, y.v.size(), y.e.size());
  const std::size_t m = lp.m();
  double total = std::log(conditional_answer(lp, y.v, y.e)[y.a]);
  for (std::size_t i = 0; i < m; ++i) total += std::log(conditional_node(lp, y, i)[y.v[i]]);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) total += std::log(conditional_edge(lp, y, i, j)[y.edge(i, j)]);
  return total;
}

}  // namespace proofpgm
