#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include <cssl/error.hpp>
#include <cssl/metrics.hpp>
#include <cssl/rng.hpp>

using namespace cssl;

namespace {

LabelMask random_mask(std::size_t k, std::uint64_t seed, double ignore = 0.0) {
  LabelMask m(11, 13);
  Rng rng(seed);
  for (auto& v : m.labels())
    v = uniform01(rng) < ignore ? kIgnore : static_cast<std::uint8_t>(uniform_index(rng, k));
  return m;
}

}  // namespace

TEST(Confusion, PerfectIsDiagonal) {
  ConfusionMatrix cm(3);
  auto t = random_mask(3, 1);
  cm.accumulate(t, t);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      if (a != b) EXPECT_EQ(cm.at(a, b), 0u);
  EXPECT_EQ(cm.total(), t.size());
  EXPECT_DOUBLE_EQ(miou(cm), 1.0);
}

TEST(Confusion, IgnoreTruthSkipped) {
  ConfusionMatrix cm(3);
  cm.accumulate(LabelMask(4, 4, kIgnore), LabelMask(4, 4, 1));
  EXPECT_EQ(cm.total(), 0u);
  EXPECT_THROW(miou(cm), ArgumentError);
}

TEST(Confusion, MatchesCountingOracle) {
  ConfusionMatrix cm(4);
  auto t = random_mask(4, 2, 0.1), p = random_mask(4, 3);
  cm.accumulate(t, p);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) {
      std::uint64_t n = 0;
      for (std::size_t i = 0; i < t.size(); ++i) n += t[i] == a && p[i] == b;
      EXPECT_EQ(cm.at(a, b), n);
    }
}

TEST(Confusion, RejectsOutOfRange) {
  ConfusionMatrix cm(2);
  EXPECT_THROW(cm.accumulate(LabelMask(2, 2, 2), LabelMask(2, 2, 0)), ArgumentError);
  EXPECT_THROW(cm.accumulate(LabelMask(2, 2, 0), LabelMask(2, 2, 5)), ArgumentError);
  EXPECT_THROW(cm.accumulate(LabelMask(2, 2, 0), LabelMask(2, 3, 0)), ShapeError);
}

TEST(Miou, HalfSplitAllZero) {
  LabelMask t(2, 4, 0);
  for (std::size_t i = 4; i < 8; ++i) t[i] = 1;
  ConfusionMatrix cm(2);
  cm.accumulate(t, LabelMask(2, 4, 0));
  auto iou = cm.class_iou();
  EXPECT_DOUBLE_EQ(*iou[0], 0.5);
  EXPECT_DOUBLE_EQ(*iou[1], 0.0);
  EXPECT_DOUBLE_EQ(miou(cm), 0.25);
}

TEST(Miou, AbsentClassExcluded) {
  ConfusionMatrix cm(3);
  cm.accumulate(LabelMask(2, 2, 0), LabelMask(2, 2, 0));
  EXPECT_FALSE(cm.class_iou()[2].has_value());
  EXPECT_DOUBLE_EQ(miou(cm), 1.0);
}

TEST(Miou, PermutationInvariantAndBounded) {
  auto t = random_mask(4, 4), p = random_mask(4, 5);
  ConfusionMatrix a(4), b(4);
  a.accumulate(t, p);
  const std::uint8_t perm[4] = {2, 0, 3, 1};
  for (auto& v : t.labels()) v = perm[v];
  for (auto& v : p.labels()) v = perm[v];
  b.accumulate(t, p);
  EXPECT_NEAR(miou(a), miou(b), 1e-15);
  EXPECT_GE(miou(a), 0.0);
  EXPECT_LT(miou(a), 1.0);
}

TEST(Confusion, MergeIsOrderIndependent) {
  std::vector<std::pair<LabelMask, LabelMask>> pairs;
  for (std::uint64_t s = 0; s < 6; ++s) pairs.emplace_back(random_mask(3, 10 + s), random_mask(3, 20 + s));
  ConfusionMatrix fwd(3), rev(3), merged(3);
  for (const auto& [t, p] : pairs) fwd.accumulate(t, p);
  for (auto it = pairs.rbegin(); it != pairs.rend(); ++it) rev.accumulate(it->first, it->second);
  EXPECT_EQ(fwd, rev);
  for (const auto& [t, p] : pairs) {
    ConfusionMatrix one(3);
    one.accumulate(t, p);
    merged.merge(one);
  }
  EXPECT_EQ(merged, fwd);
}

TEST(Report, EvaluationCsv) {
  LabelMask t(2, 4, 0);
  for (std::size_t i = 4; i < 8; ++i) t[i] = 1;
  ConfusionMatrix cm(3);
  cm.accumulate(t, LabelMask(2, 4, 0));
  const auto csv = evaluation_csv(cm);
  EXPECT_EQ(csv, "class,iou\n0,0.5\n1,0\n2,\nmean,0.25\n");
}
