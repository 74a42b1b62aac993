#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "proofpgm/pgm.hpp"

namespace proofpgm {

/// Mean-field marginals q(A), q(V_i), q(E_ij).
struct QDist {
  BitDist qA{0.5, 0.5};
  std::vector<BitDist> qV;  // m rows
  std::vector<BitDist> qE;  // m(m-1) rows, pair_index order

  QDist() = default;
  explicit QDist(std::size_t m)
      : qV(m, BitDist{0.5, 0.5}), qE(num_pairs(m), BitDist{0.5, 0.5}) {}

  std::size_t m() const { return qV.size(); }
  const BitDist& edge(std::size_t i, std::size_t j) const { return qE[pair_index(i, j, m())]; }
  BitDist& edge(std::size_t i, std::size_t j) { return qE[pair_index(i, j, m())]; }
};

/// Per-variable argmax; an exact tie resolves to 0.
inline int argmax_bit(const BitDist& p) { return p[1] > p[0] ? 1 : 0; }

struct HardPredictions {
  std::vector<std::uint8_t> v;
  std::vector<std::uint8_t> e;
  std::uint8_t a = 0;
};

inline HardPredictions hard_predictions(const QDist& q) {
  HardPredictions out;
  out.a = static_cast<std::uint8_t>(argmax_bit(q.qA));
  out.v.reserve(q.qV.size());
  for (const auto& p : q.qV) out.v.push_back(static_cast<std::uint8_t>(argmax_bit(p)));
  out.e.reserve(q.qE.size());
  for (const auto& p : q.qE) out.e.push_back(static_cast<std::uint8_t>(argmax_bit(p)));
  return out;
}

}  // namespace proofpgm
