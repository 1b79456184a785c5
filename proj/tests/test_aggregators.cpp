#include <gtest/gtest.h>

#include <algorithm>

#include "detox/aggregators.hpp"
#include "oracles.hpp"

using namespace detox;

namespace {

std::vector<GradVec> copies(const GradVec& v, std::size_t n) { return std::vector<GradVec>(n, v); }

std::vector<GradVec> shuffled(std::vector<GradVec> vs, RngStream& rng) {
  rng.shuffle(vs);
  return vs;
}

std::vector<GradVec> shifted(std::vector<GradVec> vs, const GradVec& c) {
  for (auto& v : vs) v = add(v, c);
  return vs;
}

}  // namespace

// ---- mean ----------------------------------------------------------------

TEST(Mean, TwoPoints) {
  EXPECT_EQ(mean(std::vector<GradVec>{{1, 2}, {3, 4}}), (GradVec{2, 3}));
}

TEST(Mean, Singleton) {
  const GradVec v{0.1, -7.25, 3e10};
  EXPECT_EQ(mean(std::vector<GradVec>{v}), v);
}

TEST(Mean, MatchesCompensatedOracle) {
  RngStream rng = split_rng(1, "mean");
  for (int trial = 0; trial < 20; ++trial) {
    const auto vs = oracle::random_vectors(rng, 100, 8);
    EXPECT_LE(oracle::max_rel_diff(mean(vs), oracle::mean(vs)), 1e-12);
  }
}

TEST(Mean, Errors) {
  EXPECT_THROW(mean(std::vector<GradVec>{}), EmptyInput);
  EXPECT_THROW(mean(std::vector<GradVec>{{1, 2}, {3}}), DimensionMismatch);
}

// ---- coordinate median ---------------------------------------------------

TEST(CoordMedian, OddAndEvenCounts) {
  EXPECT_EQ(coord_median(std::vector<GradVec>{{0}, {10}, {1}}), (GradVec{1}));
  EXPECT_EQ(coord_median(std::vector<GradVec>{{0}, {10}}), (GradVec{5}));
}

TEST(CoordMedian, MatchesSortOracle) {
  RngStream rng = split_rng(2, "median");
  for (int trial = 0; trial < 50; ++trial) {
    const auto vs = oracle::random_vectors(rng, 15, 5);
    EXPECT_EQ(coord_median(vs), oracle::coord_median(vs));
    const auto even = oracle::random_vectors(rng, 14, 5);
    EXPECT_EQ(coord_median(even), oracle::coord_median(even));
  }
}

// ---- geometric median ----------------------------------------------------

TEST(GeoMedian, IdenticalPoints) {
  const GradVec v{1.5, -2.0, 3.25};
  const auto res = geo_median(copies(v, 3), 1e-10, 100);
  EXPECT_LE(distance(res.point, v), 1e-10);
}

TEST(GeoMedian, BeatsDenseGrid) {
  const std::vector<GradVec> vs{{0, 0}, {2, 0}, {1, 5}};
  const auto res = geo_median(vs, 1e-10, 10000);
  const double grid = oracle::grid_min_objective(vs, -1, 3, -1, 6);
  EXPECT_LE(oracle::objective(vs, res.point[0], res.point[1]), grid + 1e-8);
}

TEST(GeoMedian, CollinearIsMedian) {
  const auto res = geo_median(std::vector<GradVec>{{0}, {1}, {10}}, 1e-10, 10000);
  EXPECT_NEAR(res.point[0], 1.0, 1e-8);
}

TEST(GeoMedian, ObjectiveNeverIncreases) {
  RngStream rng = split_rng(3, "geo");
  for (int trial = 0; trial < 30; ++trial) {
    auto vs = oracle::random_vectors(rng, 9, 4);
    vs[0] = scaled(vs[0], 50.0);
    const auto res = geo_median(vs, 1e-12, 500);
    for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
      EXPECT_LE(res.objective_trace[i], res.objective_trace[i - 1] * (1 + 1e-15) + 1e-15);
  }
}

TEST(GeoMedian, NonConvergenceFlagged) {
  RngStream rng = split_rng(4, "geo");
  const auto vs = oracle::random_vectors(rng, 20, 3);
  const auto res = geo_median(vs, 1e-300, 2);
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.iterations, 2);
  EXPECT_GT(res.residual, 1e-300);
}

// ---- trimmed mean --------------------------------------------------------

TEST(TrimmedMean, TrimsOnePerSide) {
  EXPECT_EQ(trimmed_mean(std::vector<GradVec>{{0}, {1}, {2}, {100}}, 0.25), (GradVec{1.5}));
}

TEST(TrimmedMean, ZeroAlphaIsMean) {
  RngStream rng = split_rng(5, "tm");
  const auto vs = oracle::random_vectors(rng, 7, 3);
  EXPECT_EQ(trimmed_mean(vs, 0.0), mean(vs));
}

TEST(TrimmedMean, MatchesSliceOracle) {
  RngStream rng = split_rng(6, "tm");
  for (int trial = 0; trial < 50; ++trial) {
    const auto vs = oracle::random_vectors(rng, 8, 4);
    EXPECT_EQ(trimmed_mean(vs, 0.25), oracle::trimmed_mean(vs, 2));
  }
}

TEST(TrimmedMean, TrimTooLarge) {
  EXPECT_THROW(trimmed_mean(std::vector<GradVec>{{0}, {1}, {2}}, 0.4), TrimTooLarge);
  EXPECT_THROW(trimmed_mean(std::vector<GradVec>{{0}, {1}}, 0.5), BadParameter);
}

TEST(TrimmedMean, CeilingRoundingIsExact) {
  EXPECT_EQ(trim_count(0.3, 10), 3u);
  EXPECT_EQ(trim_count(0.25, 9), 3u);
  EXPECT_EQ(trim_count(0.1, 10), 1u);
}

// ---- Krum family ---------------------------------------------------------

TEST(Krum, RejectsOutlier) {
  const GradVec v{1, 1}, w{100, -100};
  std::vector<GradVec> vs{v, v, w, v, v};
  EXPECT_EQ(krum(vs, 1), v);
}

TEST(Krum, MatchesDirectScoring) {
  RngStream rng = split_rng(7, "krum");
  for (int trial = 0; trial < 50; ++trial) {
    const auto vs = oracle::random_vectors(rng, 7, 6);
    EXPECT_EQ(krum_index(vs, 2), oracle::krum_index(vs, 2));
    EXPECT_EQ(krum(vs, 2), vs[oracle::krum_index(vs, 2)]);
  }
}

TEST(Krum, IdenticalInputsPickFirst) {
  const std::vector<GradVec> vs(5, GradVec{3, 4});
  EXPECT_EQ(krum_index(vs, 1), 0u);
}

TEST(Krum, TooFewVectors) {
  EXPECT_THROW(krum(std::vector<GradVec>(4, GradVec{1}), 1), TooFewVectors);
}

TEST(MultiKrum, MOneIsKrum) {
  RngStream rng = split_rng(8, "mk");
  const auto vs = oracle::random_vectors(rng, 9, 4);
  EXPECT_EQ(multi_krum(vs, 2, 1), krum(vs, 2));
}

TEST(MultiKrum, IdenticalInputs) {
  const GradVec v{0.1, 0.2, 0.3};
  EXPECT_EQ(multi_krum(copies(v, 6), 0, 4), mean(copies(v, 4)));
}

TEST(MultiKrum, MatchesDirectScoring) {
  RngStream rng = split_rng(9, "mk");
  for (int trial = 0; trial < 50; ++trial) {
    const auto vs = oracle::random_vectors(rng, 9, 5);
    EXPECT_EQ(multi_krum(vs, 2, 3), oracle::multi_krum(vs, 2, 3));
  }
}

TEST(MultiKrum, BadM) {
  const auto vs = std::vector<GradVec>(9, GradVec{1});
  EXPECT_THROW(multi_krum(vs, 2, 0), BadM);
  EXPECT_THROW(multi_krum(vs, 2, 6), BadM);
  EXPECT_NO_THROW(multi_krum(vs, 2, 5));
}

// ---- Bulyan ----------------------------------------------------------------

TEST(Bulyan, DegenerateIdentical) {
  const GradVec v{2, -1};
  EXPECT_EQ(bulyan(copies(v, 3), 0), v);
}

TEST(Bulyan, OutlierRemoved) {
  const GradVec v{2, -1}, w{1e6, 1e6};
  auto vs = copies(v, 6);
  vs.insert(vs.begin() + 3, w);
  EXPECT_EQ(bulyan(vs, 1), v);
}

TEST(Bulyan, MatchesTwoPhaseOracle) {
  RngStream rng = split_rng(10, "bulyan");
  for (int trial = 0; trial < 50; ++trial) {
    const auto vs = oracle::random_vectors(rng, 11, 5);
    EXPECT_EQ(bulyan(vs, 2), oracle::bulyan(vs, 2));
  }
}

TEST(Bulyan, OutputWithinSelectedRange) {
  RngStream rng = split_rng(11, "bulyan");
  for (int trial = 0; trial < 20; ++trial) {
    const auto vs = oracle::random_vectors(rng, 11, 3);
    const auto out = bulyan(vs, 2);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto col = oracle::column(vs, c);
      EXPECT_GE(out[c], col.front());
      EXPECT_LE(out[c], col.back());
    }
  }
}

TEST(Bulyan, NonKrumInner) {
  RngStream rng = split_rng(12, "bulyan");
  const auto vs = oracle::random_vectors(rng, 11, 3);
  EXPECT_NO_THROW(bulyan(vs, 2, AggregatorSpec{AggregatorKind::coord_median}));
  EXPECT_THROW(bulyan(vs, 2, AggregatorSpec{AggregatorKind::bulyan}), BadParameter);
}

// Once the pool shrinks to 2q+1 a mutual nearest pair shares its score, so
// the index tie-break can change the selection under permutation.
TEST(Bulyan, LateSelectionTiesFollowInputOrder) {
  RngStream rng = split_rng(17, "bulyan");
  int differing = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const auto vs = oracle::random_vectors(rng, 11, 4);
    const auto ps = shuffled(vs, rng);
    EXPECT_EQ(bulyan(ps, 2), oracle::bulyan(ps, 2));
    differing += bulyan(ps, 2) != bulyan(vs, 2);
  }
  EXPECT_GT(differing, 0);
}

TEST(Bulyan, TooFewVectors) {
  EXPECT_THROW(bulyan(std::vector<GradVec>(10, GradVec{1}), 2), TooFewVectors);
}

// ---- sign majority -------------------------------------------------------

TEST(SignMajority, Examples) {
  EXPECT_EQ(sign_majority(std::vector<GradVec>{{2}, {-1}, {0.5}}), (GradVec{1}));
  EXPECT_EQ(sign_majority(std::vector<GradVec>{{1}, {-1}}), (GradVec{0}));
}

TEST(SignMajority, MatchesCountingOracle) {
  RngStream rng = split_rng(13, "sign");
  for (int trial = 0; trial < 50; ++trial) {
    auto vs = oracle::random_vectors(rng, 9, 7);
    vs[trial % 9][trial % 7] = 0.0;
    EXPECT_EQ(sign_majority(vs), oracle::sign_majority(vs));
  }
}

// ---- properties ------------------------------------------------------------

TEST(Properties, PermutationInvariance) {
  RngStream rng = split_rng(14, "perm");
  for (int trial = 0; trial < 30; ++trial) {
    const auto vs = oracle::random_vectors(rng, 11, 4);
    const auto ps = shuffled(vs, rng);
    EXPECT_EQ(coord_median(ps), coord_median(vs));
    EXPECT_EQ(trimmed_mean(ps, 0.2), trimmed_mean(vs, 0.2));
    EXPECT_EQ(sign_majority(ps), sign_majority(vs));
    EXPECT_EQ(krum(ps, 2), krum(vs, 2));
    EXPECT_EQ(bulyan(ps, 0), bulyan(vs, 0));
    // Input-order summation: equal up to rounding.
    EXPECT_LE(oracle::max_rel_diff(mean(ps), mean(vs)), 1e-14);
    EXPECT_LE(oracle::max_rel_diff(multi_krum(ps, 2, 3), multi_krum(vs, 2, 3)), 1e-14);
    EXPECT_LE(distance(geo_median(ps, 1e-12).point, geo_median(vs, 1e-12).point), 1e-6);
  }
}

TEST(Properties, IdempotentOnConstants) {
  const GradVec v{0.5, -3, 7};
  const auto vs = copies(v, 11);
  EXPECT_EQ(mean(vs), v);
  EXPECT_EQ(coord_median(vs), v);
  EXPECT_LE(distance(geo_median(vs).point, v), 1e-8);
  EXPECT_EQ(trimmed_mean(vs, 0.25), v);
  EXPECT_EQ(krum(vs, 2), v);
  EXPECT_EQ(multi_krum(vs, 2, 4), v);
  EXPECT_EQ(bulyan(vs, 2), v);
  EXPECT_EQ(sign_majority(vs), (GradVec{1, -1, 1}));
}

TEST(Properties, TranslationEquivariance) {
  RngStream rng = split_rng(15, "shift");
  for (int trial = 0; trial < 30; ++trial) {
    const auto vs = oracle::random_vectors(rng, 9, 3);
    const GradVec c{rng.normal(), rng.normal(), rng.normal()};
    const auto ws = shifted(vs, c);
    EXPECT_LE(oracle::max_rel_diff(mean(ws), add(mean(vs), c)), 1e-12);
    EXPECT_LE(oracle::max_rel_diff(coord_median(ws), add(coord_median(vs), c)), 1e-12);
    EXPECT_LE(oracle::max_rel_diff(trimmed_mean(ws, 0.2), add(trimmed_mean(vs, 0.2), c)), 1e-12);
    EXPECT_LE(distance(geo_median(ws, 1e-12).point, add(geo_median(vs, 1e-12).point, c)), 1e-8);
  }
}

TEST(Dispatch, RoutesEveryKind) {
  RngStream rng = split_rng(16, "dispatch");
  const auto vs = oracle::random_vectors(rng, 11, 3);
  AggregatorSpec s;
  s.q = 2;
  s.m = 3;
  s.alpha = 0.2;
  s.kind = AggregatorKind::mean;
  EXPECT_EQ(aggregate(s, vs), mean(vs));
  s.kind = AggregatorKind::coord_median;
  EXPECT_EQ(aggregate(s, vs), coord_median(vs));
  s.kind = AggregatorKind::trimmed_mean;
  EXPECT_EQ(aggregate(s, vs), trimmed_mean(vs, 0.2));
  s.kind = AggregatorKind::krum;
  EXPECT_EQ(aggregate(s, vs), krum(vs, 2));
  s.kind = AggregatorKind::multi_krum;
  EXPECT_EQ(aggregate(s, vs), multi_krum(vs, 2, 3));
  s.kind = AggregatorKind::bulyan;
  EXPECT_EQ(aggregate(s, vs), bulyan(vs, 2));
  s.kind = AggregatorKind::sign_majority;
  EXPECT_EQ(aggregate(s, vs), sign_majority(vs));
  s.kind = AggregatorKind::geo_median;
  EXPECT_EQ(aggregate(s, vs), geo_median(vs, s.tol, s.max_iter).point);
}

TEST(Dispatch, KindStrings) {
  for (auto k : {AggregatorKind::mean, AggregatorKind::coord_median, AggregatorKind::geo_median,
                 AggregatorKind::trimmed_mean, AggregatorKind::krum, AggregatorKind::multi_krum,
                 AggregatorKind::bulyan, AggregatorKind::sign_majority})
    EXPECT_EQ(aggregator_kind_from_string(to_string(k)), k);
  EXPECT_FALSE(aggregator_kind_from_string("median_of_means").has_value());
}
