#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "detox/adversary.hpp"
#include "detox/engine.hpp"
#include "oracles.hpp"

using namespace detox;

namespace {

int captured_groups(const NodeGroupPartition& part, const std::vector<bool>& mask) {
  int n = 0;
  for (const auto& g : part.groups) {
    int byz = 0;
    for (int w : g) byz += mask[static_cast<std::size_t>(w)];
    n += 2 * byz > static_cast<int>(g.size());
  }
  return n;
}

// Best achievable capture count over all q-subsets of {0..p-1}.
int exhaustive_max_capture(const NodeGroupPartition& part, int p, int q) {
  std::vector<bool> pick(static_cast<std::size_t>(p), false);
  std::fill(pick.begin(), pick.begin() + q, true);
  int best = 0;
  do {
    best = std::max(best, captured_groups(part, pick));
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

std::vector<GradVec> honest_outputs(const NodeGroupPartition& part, const std::vector<GradVec>& truth) {
  std::vector<GradVec> out(part.group_of.size());
  for (std::size_t w = 0; w < out.size(); ++w) out[w] = truth[static_cast<std::size_t>(part.group_of[w])];
  return out;
}

}  // namespace

TEST(PlaceByzantine, NoneWhenQZero) {
  RngStream rng = split_rng(1, "place");
  const auto part = partition_nodes(9, 3, rng);
  EXPECT_TRUE(place_byzantine(9, 0, part, Placement::random_fixed, rng).empty());
  EXPECT_TRUE(place_byzantine(9, 0, part, Placement::adversarial_grouped, rng).empty());
}

TEST(PlaceByzantine, GroupedMatchesExhaustiveSearch) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    RngStream rng = split_rng(s, "place");
    const auto part = partition_nodes(9, 3, rng);
    const auto ids = place_byzantine(9, 4, part, Placement::adversarial_grouped, rng);
    ASSERT_EQ(ids.size(), 4u);
    const auto mask = byzantine_mask(9, ids);
    EXPECT_EQ(exhaustive_max_capture(part, 9, 4), 2);
    EXPECT_EQ(captured_groups(part, mask), 2);

    const std::vector<GradVec> truth{{1}, {2}, {3}};
    AttackSpec atk{AttackKind::constant};
    const auto outs = apply_attack(atk, honest_outputs(part, truth), mask, part);
    EXPECT_EQ(filter_votes(outs, part, truth).q_hat(), 2);
  }
}

TEST(PlaceByzantine, GroupedCaptureCountFormula) {
  for (int r : {3, 5, 7})
    for (int q = 0; 2 * q < 10 * r; ++q) {
      RngStream rng = split_rng(static_cast<std::uint64_t>(q), "place");
      const int p = 10 * r;
      const auto part = partition_nodes(p, r, rng);
      const auto mask = byzantine_mask(p, place_byzantine(p, q, part, Placement::adversarial_grouped, rng));
      EXPECT_EQ(captured_groups(part, mask), q / ((r + 1) / 2)) << "r=" << r << " q=" << q;
    }
}

TEST(PlaceByzantine, RandomFixedDeterministicAndUniform) {
  RngStream a = split_rng(2, "place"), b = split_rng(2, "place");
  RngStream pr = split_rng(2, "partition");
  const auto part = partition_nodes(45, 3, pr);
  EXPECT_EQ(place_byzantine(45, 5, part, Placement::random_fixed, a),
            place_byzantine(45, 5, part, Placement::random_fixed, b));

  std::vector<int> hits(10, 0);
  const int n = 20000;
  for (int t = 0; t < n; ++t) {
    RngStream rng = split_rng(static_cast<std::uint64_t>(t), "uniform");
    const auto pp = partition_nodes(10, 1, rng);
    for (int w : place_byzantine(10, 3, pp, Placement::random_fixed, rng)) ++hits[static_cast<std::size_t>(w)];
  }
  const double p = 0.3, se = std::sqrt(p * (1 - p) / n);
  for (int h : hits) EXPECT_NEAR(static_cast<double>(h) / n, p, 4 * se);
}

TEST(PlaceByzantine, RatioError) {
  RngStream rng = split_rng(3, "place");
  const auto part = partition_nodes(6, 3, rng);
  EXPECT_THROW(place_byzantine(6, 3, part, Placement::random_fixed, rng), ByzantineRatioError);
}

TEST(ApplyAttack, ReverseGradient) {
  RngStream rng = split_rng(4, "attack");
  const auto part = partition_nodes(3, 3, rng);
  const std::vector<GradVec> honest(3, GradVec{1, -2});
  const auto out = apply_attack({AttackKind::reverse_gradient, 1.0}, honest, byzantine_mask(3, std::vector<int>{1}), part);
  EXPECT_EQ(out[1], (GradVec{-1, 2}));
  EXPECT_EQ(out[0], (GradVec{1, -2}));
}

TEST(ApplyAttack, ConstantDefault) {
  RngStream rng = split_rng(5, "attack");
  const auto part = partition_nodes(3, 3, rng);
  const std::vector<GradVec> honest(3, GradVec{4, 5, 6});
  AttackSpec a{AttackKind::constant};
  const auto out = apply_attack(a, honest, byzantine_mask(3, std::vector<int>{2}), part);
  EXPECT_EQ(out[2], (GradVec{-1, -1, -1}));
}

TEST(ApplyAttack, AlieZeroSendsObservedMean) {
  RngStream rng = split_rng(6, "attack");
  const auto part = partition_nodes(9, 3, rng);
  const std::vector<GradVec> truth{{1, 10}, {2, 20}, {4, 40}};
  const auto honest = honest_outputs(part, truth);
  // Byzantine workers in groups 0 and 2 observe g_0 and g_2 only.
  const std::vector<int> byz{part.groups[0][1], part.groups[2][0]};
  AttackSpec a{AttackKind::alie};
  a.z = 0.0;
  const auto out = apply_attack(a, honest, byzantine_mask(9, byz), part);
  for (int w : byz) EXPECT_EQ(out[static_cast<std::size_t>(w)], (GradVec{2.5, 25}));

  a.alie_scope = AlieScope::all;
  const auto all = apply_attack(a, honest, byzantine_mask(9, byz), part);
  EXPECT_EQ(all[static_cast<std::size_t>(byz[0])], oracle::mean(truth));
}

TEST(ApplyAttack, AlieDeviation) {
  RngStream rng = split_rng(7, "attack");
  const auto part = partition_nodes(6, 3, rng);
  const std::vector<GradVec> truth{{1}, {3}};
  AttackSpec a{AttackKind::alie};
  a.z = 2.0;
  const std::vector<int> byz{part.groups[0][0], part.groups[1][0]};
  const auto out = apply_attack(a, honest_outputs(part, truth), byzantine_mask(6, byz), part);
  // mean 2, population std 1
  EXPECT_EQ(out[static_cast<std::size_t>(byz[0])], (GradVec{4}));
}

TEST(ApplyAttack, Invariants) {
  RngStream rng = split_rng(8, "attack");
  const auto part = partition_nodes(15, 3, rng);
  const auto truth = oracle::random_vectors(rng, 5, 4);
  const auto honest = honest_outputs(part, truth);
  const auto mask = byzantine_mask(15, place_byzantine(15, 6, part, Placement::adversarial_grouped, rng));
  for (auto kind : {AttackKind::none, AttackKind::reverse_gradient, AttackKind::constant, AttackKind::alie}) {
    AttackSpec a{kind};
    const auto out = apply_attack(a, honest, mask, part);
    for (std::size_t w = 0; w < 15; ++w)
      if (!mask[w] || kind == AttackKind::none) {
        EXPECT_EQ(out[w], honest[w]);
      }
    for (const auto& g : part.groups) {
      const GradVec* first = nullptr;
      for (int w : g) {
        if (!mask[static_cast<std::size_t>(w)]) continue;
        if (!first) first = &out[static_cast<std::size_t>(w)];
        else EXPECT_TRUE(bitwise_equal(*first, out[static_cast<std::size_t>(w)]));
      }
    }
  }
}
