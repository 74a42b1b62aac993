#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "pgm_oracle.hpp"
#include "proofpgm/pgm.hpp"
#include "proofpgm/rng.hpp"

using namespace proofpgm;
using proofpgm::testing::BruteForce;
using proofpgm::testing::random_potentials;

TEST(pgm, pair_index_is_a_bijection) {
  for (std::size_t m = 1; m <= 6; ++m) {
    std::vector<int> seen(num_pairs(m), 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (i != j) ++seen.at(pair_index(i, j, m));
    for (int c : seen) EXPECT_EQ(c, 1);
  }
  EXPECT_EQ(pair_index(0, 1, 3), 0u);
  EXPECT_EQ(pair_index(2, 1, 3), 5u);
}

TEST(pgm, cell_layout) {
  EXPECT_EQ(node_cell(1, 0), 2u);
  EXPECT_EQ(edge_cell(1, 0, 1, 1), 11u);
  EXPECT_EQ(edge_cell(0, 1, 0, 0), 4u);
}

TEST(pgm, zero_potentials_give_uniform_partition) {
  for (std::size_t m = 1; m <= 4; ++m) {
    const LogPotentials lp(m);
    const double bits = 1.0 + m + m * (m - 1);
    EXPECT_NEAR(exact_log_partition(lp), bits * std::numbers::ln2, 1e-12);
  }
  EXPECT_NEAR(exact_log_partition(LogPotentials(2)), 5 * std::numbers::ln2, 1e-12);
}

TEST(pgm, partition_matches_brute_force) {
  Rng rng(21);
  for (std::size_t m = 1; m <= 3; ++m) {
    const auto lp = random_potentials(rng, m, 2.0);
    EXPECT_NEAR(exact_log_partition(lp), BruteForce(lp).log_z(), 1e-9);
  }
}

TEST(pgm, refuses_oversized_enumeration) {
  EXPECT_THROW(exact_log_partition(LogPotentials(5)), TooLarge);
  EXPECT_NO_THROW(exact_log_partition(LogPotentials(4)));
}

TEST(pgm, dimension_checks) {
  const LogPotentials lp(3);
  EXPECT_THROW(joint_log_score(lp, Assignment(2)), DimensionMismatch);
  EXPECT_THROW(conditional_node(lp, Assignment(3), 3), IndexOutOfRange);
  EXPECT_THROW(conditional_edge(lp, Assignment(3), 1, 1), IndexOutOfRange);
}

TEST(pgm, conditionals_match_brute_force) {
  Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 2 + trial % 2;
    const auto lp = random_potentials(rng, m, 3.0);
    const BruteForce oracle(lp);
    const auto y = oracle.random_assignment(rng);
    EXPECT_NEAR(conditional_answer(lp, y.v, y.e)[1], oracle.conditional(y, Variable::answer()), 1e-9);
    for (std::size_t i = 0; i < m; ++i)
      EXPECT_NEAR(conditional_node(lp, y, i)[1], oracle.conditional(y, Variable::node(i)), 1e-9);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        if (i != j) {
          EXPECT_NEAR(conditional_edge(lp, y, i, j)[1], oracle.conditional(y, Variable::edge(i, j)), 1e-9);
        }
      }
    EXPECT_NEAR(pseudolikelihood_log(lp, y), oracle.pseudolikelihood(y), 1e-8);
  }
}

TEST(pgm, exact_conditional_agrees_with_closed_form) {
  Rng rng(3);
  const auto lp = random_potentials(rng, 3, 1.0);
  const auto y = BruteForce(lp).random_assignment(rng);
  EXPECT_NEAR(exact_conditional(lp, y, Variable::node(1))[0], conditional_node(lp, y, 1)[0], 1e-12);
  EXPECT_NEAR(exact_conditional(lp, y, Variable::edge(2, 0))[1], conditional_edge(lp, y, 2, 0)[1], 1e-12);
}

TEST(pgm, softmax_is_stable_for_large_scores) {
  const auto p = softmax2(1000.0, 1001.0);
  EXPECT_NEAR(p[1], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(log_sum_exp2(-1000.0, -1000.0), -1000.0 + std::numbers::ln2, 1e-9);
}
