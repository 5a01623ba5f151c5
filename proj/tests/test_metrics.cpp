#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "dfm/metrics.hpp"
#include "oracles.hpp"

using namespace dfm;

namespace {

LabelVolume points(int d, int h, int w, const std::vector<std::array<int, 3>>& on) {
  std::vector<std::int32_t> v(static_cast<std::size_t>(d) * h * w, 0);
  for (auto [z, y, x] : on) v[(static_cast<std::size_t>(z) * h + y) * w + x] = 1;
  return LabelVolume(d, h, w, v);
}

LabelVolume random_volume(std::mt19937_64& rng, int d, int h, int w, int k) {
  std::vector<LabelMask> slices;
  for (int z = 0; z < d; ++z) slices.push_back(oracle::random_blob_mask(rng, h, w, k));
  return LabelVolume::stack(slices);
}

LabelVolume permuted(const LabelVolume& v, const std::vector<std::size_t>& perm) {
  std::vector<std::int32_t> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v.labels[perm[i]];
  return LabelVolume(v.depth, v.height, v.width, out);
}

}  // namespace

TEST(Dice, Fixtures) {
  const LabelVolume a = points(1, 1, 6, {{0, 0, 0}, {0, 0, 1}, {0, 0, 2}, {0, 0, 3}});
  const LabelVolume b = points(1, 1, 6, {{0, 0, 2}, {0, 0, 3}, {0, 0, 4}, {0, 0, 5}});
  EXPECT_DOUBLE_EQ(dice_3d(a, a, 1), 1.0);
  EXPECT_DOUBLE_EQ(dice_3d(a, b, 1), 0.5);
  const LabelVolume c = points(1, 1, 6, {{0, 0, 4}, {0, 0, 5}});
  EXPECT_DOUBLE_EQ(dice_3d(a, c, 1), 0.0);
  const LabelVolume empty = points(1, 1, 6, {});
  EXPECT_DOUBLE_EQ(dice_3d(empty, empty, 1), 1.0);
  EXPECT_DOUBLE_EQ(dice_3d(empty, a, 1), 0.0);
  EXPECT_DOUBLE_EQ(dice_3d(a, empty, 1), 0.0);
  EXPECT_THROW(dice_3d(a, points(1, 2, 3, {}), 1), std::invalid_argument);
}

TEST(Hausdorff, Fixtures) {
  const LabelVolume a = points(1, 1, 6, {{0, 0, 0}});
  EXPECT_DOUBLE_EQ(hausdorff_3d(a, a, 1, {1, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(hausdorff_3d(a, points(1, 1, 6, {{0, 0, 3}}), 1, {1, 1, 1}), 3.0);

  const LabelVolume p = points(1, 1, 6, {{0, 0, 0}});
  const LabelVolume q = points(1, 1, 6, {{0, 0, 0}, {0, 0, 5}});
  EXPECT_DOUBLE_EQ(hausdorff_3d(p, q, 1, {1, 1, 1}), 5.0);
  EXPECT_DOUBLE_EQ(hausdorff_3d(q, p, 1, {1, 1, 1}), 5.0);

  const LabelVolume z = points(3, 1, 1, {{0, 0, 0}});
  EXPECT_DOUBLE_EQ(hausdorff_3d(z, points(3, 1, 1, {{2, 0, 0}}), 1, {10, 1, 1}), 20.0);
}

TEST(Hausdorff, EmptySetIsUndefined) {
  const LabelVolume a = points(1, 2, 2, {{0, 0, 0}});
  const LabelVolume empty = points(1, 2, 2, {});
  const std::vector<std::pair<LabelVolume, LabelVolume>> cases{{a, empty}, {empty, a}, {empty, empty}};
  for (const auto& [x, y] : cases) {
    try {
      hausdorff_3d(x, y, 1, {1, 1, 1});
      FAIL() << "expected domain_error";
    } catch (const std::domain_error& e) {
      EXPECT_STREQ(e.what(), "undefined Hausdorff");
    }
  }
  EXPECT_THROW(hausdorff_3d(a, a, 1, {1, 0, 1}), std::invalid_argument);
}

TEST(Hausdorff, MatchesBruteForceAndScalesWithSpacing) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> sp(0.5, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const LabelVolume a = random_volume(rng, 3, 9, 11, 2);
    const LabelVolume b = random_volume(rng, 3, 9, 11, 2);
    const std::array<double, 3> spacing{sp(rng), sp(rng), sp(rng)};
    for (int c : {1, 2}) {
      double oracle;
      try {
        oracle = oracle::brute_force_hausdorff(a, b, c, spacing);
      } catch (const std::domain_error&) {
        EXPECT_THROW(hausdorff_3d(a, b, c, spacing), std::domain_error);
        continue;
      }
      const double fast = hausdorff_3d(a, b, c, spacing);
      ASSERT_NEAR(fast, oracle, 1e-9);
      EXPECT_EQ(fast, hausdorff_3d(b, a, c, spacing));
      for (double s : {0.5, 2.0, 4.0}) {
        const std::array<double, 3> scaled{spacing[0] * s, spacing[1] * s, spacing[2] * s};
        EXPECT_EQ(hausdorff_3d(a, b, c, scaled), fast * s);
      }
      EXPECT_EQ(hausdorff_3d(a, a, c, spacing), 0.0);
    }
  }
}

TEST(Dice, SymmetricBoundedAndPermutationInvariant) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const LabelVolume a = random_volume(rng, 2, 8, 10, 3);
    const LabelVolume b = random_volume(rng, 2, 8, 10, 3);
    std::vector<std::size_t> perm(a.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int c = 1; c <= 3; ++c) {
      const double d = dice_3d(a, b, c);
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 1.0);
      EXPECT_EQ(d, dice_3d(b, a, c));
      EXPECT_DOUBLE_EQ(d, dice_3d(permuted(a, perm), permuted(b, perm), c));
    }
  }
}

TEST(Hausdorff95, BoundedByExactHausdorff) {
  std::mt19937_64 rng(3);
  const LabelVolume a = random_volume(rng, 2, 12, 12, 1);
  const LabelVolume b = random_volume(rng, 2, 12, 12, 1);
  EXPECT_LE(hausdorff95_3d(a, b, 1, {1, 1, 1}), hausdorff_3d(a, b, 1, {1, 1, 1}));
  EXPECT_EQ(hausdorff95_3d(a, a, 1, {1, 1, 1}), 0.0);
}

TEST(Stratified, PerfectPredictionIsOneEverywhere) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const LabelMask m = oracle::random_blob_mask(rng, 20, 24, 3);
    const StratifiedAccuracy r = boundary_distance_accuracy(m, m, 10);
    ASSERT_FALSE(r.distances.empty());
    ASSERT_EQ(r.distances.size(), r.accuracy.size());
    for (double a : r.accuracy) EXPECT_EQ(a, 1.0);
  }
}

TEST(Stratified, AllBackgroundAgainstBlockFixture) {
  LabelMask block(5, 5, 1);
  for (int y = 1; y <= 3; ++y)
    for (int x = 1; x <= 3; ++x) block.set(y, x, 1);
  const StratifiedAccuracy r = boundary_distance_accuracy(LabelMask(5, 5, 1), block, 5);
  // By hand: the ring of 16 background pixels and the 8 inner-edge block
  // pixels sit 1 from a differently labelled pixel; the centre sits 2 away.
  ASSERT_EQ(r.distances, (std::vector<int>{1, 2}));
  EXPECT_EQ(r.counts, (std::vector<std::size_t>{24, 1}));
  EXPECT_DOUBLE_EQ(r.accuracy[0], 16.0 / 24.0);
  EXPECT_DOUBLE_EQ(r.accuracy[1], 0.0);

  const StratifiedAccuracy oracle = oracle::brute_force_stratified(LabelMask(5, 5, 1), block, 5);
  EXPECT_EQ(oracle.distances, r.distances);
  EXPECT_EQ(oracle.accuracy, r.accuracy);
}

TEST(Stratified, MatchesBruteForceAndAccumulates) {
  std::mt19937_64 rng(5);
  StratifiedCounter counter(8);
  std::vector<std::size_t> correct(9, 0), total(9, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const LabelMask gt = oracle::random_blob_mask(rng, 18, 18, 3);
    const LabelMask pred = oracle::random_blob_mask(rng, 18, 18, 3);
    const StratifiedAccuracy fast = boundary_distance_accuracy(pred, gt, 8);
    const StratifiedAccuracy slow = oracle::brute_force_stratified(pred, gt, 8);
    ASSERT_EQ(fast.distances, slow.distances);
    for (std::size_t i = 0; i < fast.accuracy.size(); ++i) {
      ASSERT_NEAR(fast.accuracy[i], slow.accuracy[i], 1e-12);
      const auto d = static_cast<std::size_t>(fast.distances[i]);
      total[d] += fast.counts[i];
      correct[d] += static_cast<std::size_t>(std::lround(fast.accuracy[i] * fast.counts[i]));
    }
    counter.add(pred, gt);
  }
  const StratifiedAccuracy pooled = counter.result();
  for (std::size_t i = 0; i < pooled.distances.size(); ++i) {
    const auto d = static_cast<std::size_t>(pooled.distances[i]);
    EXPECT_EQ(pooled.counts[i], total[d]);
    EXPECT_DOUBLE_EQ(pooled.accuracy[i], static_cast<double>(correct[d]) / total[d]);
  }
}

TEST(Stratified, EmptyBucketsAreOmitted) {
  LabelMask gt(3, 40, 1);
  for (int y = 0; y < 3; ++y)
    for (int x = 20; x < 40; ++x) gt.set(y, x, 1);
  const StratifiedAccuracy r = boundary_distance_accuracy(gt, gt, 30);
  EXPECT_EQ(r.distances.front(), 1);
  EXPECT_EQ(r.distances.back(), 20);
  EXPECT_EQ(r.distances.size(), 20u);
  EXPECT_THROW(boundary_distance_accuracy(gt, LabelMask(3, 39, 1), 5), std::invalid_argument);
  EXPECT_THROW(StratifiedCounter(0), std::invalid_argument);
}
