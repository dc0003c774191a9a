#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <queue>

#include <cssl/error.hpp>
#include <cssl/cowmask.hpp>
#include <cssl/tensor.hpp>

using namespace cssl;

namespace {

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Image img(h, w);
  Rng rng(seed);
  for (float& v : img.pixels()) v = static_cast<float>(uniform01(rng));
  return img;
}

LabelMask random_labels(std::size_t h, std::size_t w, std::uint64_t seed) {
  LabelMask m(h, w);
  Rng rng(seed);
  for (auto& v : m.labels()) v = uniform01(rng) < 0.2 ? kIgnore : static_cast<std::uint8_t>(uniform_index(rng, 4));
  return m;
}

WeightMap random_weights(std::size_t h, std::size_t w, std::uint64_t seed) {
  WeightMap m(h, w);
  Rng rng(seed);
  for (float& v : m.w) v = static_cast<float>(uniform01(rng));
  return m;
}

CowMask constant_mask(std::size_t h, std::size_t w, std::uint8_t v) {
  return CowMask{h, w, std::vector<std::uint8_t>(h * w, v), 1.0, 0.5};
}

}  // namespace

TEST(CowMask, BinaryAndDeterministic) {
  auto a = generate_cowmask(48, 48, 8.0, 0.4, 11);
  auto b = generate_cowmask(48, 48, 8.0, 0.4, 11);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, generate_cowmask(48, 48, 8.0, 0.4, 12));
  for (auto v : a.mask) EXPECT_TRUE(v == 0 || v == 1);
}

TEST(CowMask, FarTail) {
  EXPECT_GE(generate_cowmask(48, 48, 4.0, 0.999, 3).fraction_of_ones(), 0.99);
  EXPECT_GE(generate_cowmask(48, 48, 4.0, 0.999, 3, CowMaskThreshold::kGaussianFit).fraction_of_ones(),
            0.99);
}

TEST(CowMask, MeanFractionOverManySeeds) {
  double sum = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) sum += generate_cowmask(48, 48, 8.0, 0.5, s).fraction_of_ones();
  EXPECT_NEAR(sum / 1000.0, 0.5, 0.01);
}

TEST(CowMask, QuantileThresholdHitsTargetPerMask) {
  for (double p : {0.3, 0.5, 0.7})
    for (double sigma : {4.0, 16.0})
      for (std::uint64_t s = 0; s < 20; ++s)
        EXPECT_NEAR(generate_cowmask(48, 48, sigma, p, s).fraction_of_ones(), p, 1.0 / 2304.0);
}

// Independent recomputation of the Gaussian-fit threshold from the filtered noise.
TEST(CowMask, GaussianFitMatchesFormula) {
  const std::uint64_t seed = 77;
  const double sigma = 5.0, p = 0.35;
  Rng rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  TensorF noise({32, 40});
  for (float& v : noise.data()) v = normal(rng);
  auto smooth = gaussian_filter(noise, sigma);
  double mean = 0.0;
  for (float v : smooth.data()) mean += v;
  mean /= static_cast<double>(smooth.size());
  double var = 0.0;
  for (float v : smooth.data()) var += (v - mean) * (v - mean);
  const double tau = mean + std::sqrt(2.0) * boost::math::erf_inv(2 * p - 1) *
                                std::sqrt(var / static_cast<double>(smooth.size()));
  auto m = generate_cowmask(32, 40, sigma, p, seed, CowMaskThreshold::kGaussianFit);
  for (std::size_t i = 0; i < smooth.size(); ++i) EXPECT_EQ(m.mask[i], smooth[i] <= tau ? 1 : 0);
}

TEST(CowMask, RejectsBadArguments) {
  EXPECT_THROW(generate_cowmask(8, 8, 2.0, 0.0, 1), ArgumentError);
  EXPECT_THROW(generate_cowmask(8, 8, 2.0, 1.0, 1), ArgumentError);
  EXPECT_THROW(generate_cowmask(8, 8, 0.0, 0.5, 1), ArgumentError);
  EXPECT_THROW(generate_cutmix_mask(8, 8, 1.5, 1), ArgumentError);
}

TEST(MaskParams, RangesAndLogMean) {
  Rng rng(5);
  double log_sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    auto mp = sample_mask_params(rng);
    ASSERT_GE(mp.sigma, 4.0);
    ASSERT_LE(mp.sigma, 16.0);
    ASSERT_GE(mp.p, 0.3);
    ASSERT_LE(mp.p, 0.7);
    log_sum += std::log(mp.sigma);
  }
  const double mid = 0.5 * (std::log(4.0) + std::log(16.0));
  EXPECT_NEAR(log_sum / 10000.0, mid, 0.02 * mid);
}

TEST(MaskParams, DeterministicAndScaled) {
  EXPECT_EQ(sample_mask_params(9).sigma, sample_mask_params(9).sigma);
  EXPECT_EQ(sample_mask_params(9).p, sample_mask_params(9).p);
  EXPECT_DOUBLE_EQ(sample_mask_params(9, 96, 120).sigma, 2.0 * sample_mask_params(9).sigma);
}

TEST(CutMix, MeanAreaAndDeterminism) {
  double sum = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    auto m = generate_cutmix_mask(48, 48, 0.5, s);
    const double zeros = 1.0 - m.fraction_of_ones();
    EXPECT_GE(zeros, 0.4);
    EXPECT_LE(zeros, 0.6);
    sum += m.fraction_of_ones();
  }
  EXPECT_NEAR(sum / 1000.0, 0.5, 0.02);
  EXPECT_EQ(generate_cutmix_mask(48, 48, 0.5, 4), generate_cutmix_mask(48, 48, 0.5, 4));
}

// The zero set is one 4-connected component equal to its bounding box.
TEST(CutMix, SingleRectangularZeroRegion) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const std::size_t h = 40, w = 56;
    auto m = generate_cutmix_mask(h, w, 0.3 + 0.01 * static_cast<double>(s % 40), s);
    std::size_t y0 = h, y1 = 0, x0 = w, x1 = 0, zeros = 0;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        if (m.mask[y * w + x] == 0) {
          ++zeros;
          y0 = std::min(y0, y), y1 = std::max(y1, y), x0 = std::min(x0, x), x1 = std::max(x1, x);
        }
    ASSERT_GT(zeros, 0u);
    EXPECT_EQ(zeros, (y1 - y0 + 1) * (x1 - x0 + 1));

    std::vector<std::uint8_t> seen(h * w, 0);
    std::queue<std::size_t> q;
    q.push(y0 * w + x0);
    seen[y0 * w + x0] = 1;
    std::size_t reached = 0;
    while (!q.empty()) {
      const std::size_t i = q.front();
      q.pop();
      ++reached;
      const std::size_t y = i / w, x = i % w;
      auto visit = [&](std::size_t j) {
        if (!seen[j] && m.mask[j] == 0) seen[j] = 1, q.push(j);
      };
      if (y > 0) visit(i - w);
      if (y + 1 < h) visit(i + w);
      if (x > 0) visit(i - 1);
      if (x + 1 < w) visit(i + 1);
    }
    EXPECT_EQ(reached, zeros);
  }
}

TEST(Mix, ConstantMasksSelectOneSource) {
  const auto x1 = random_image(12, 9, 1), x2 = random_image(12, 9, 2);
  const auto y1 = random_labels(12, 9, 3), y2 = random_labels(12, 9, 4);
  const auto w1 = random_weights(12, 9, 5), w2 = random_weights(12, 9, 6);
  auto a = mix(x1, x2, y1, y2, w1, w2, constant_mask(12, 9, 1));
  EXPECT_EQ(a.image, x1);
  EXPECT_EQ(a.labels, y1);
  EXPECT_EQ(a.weights, w1);
  auto b = mix(x1, x2, y1, y2, w1, w2, constant_mask(12, 9, 0));
  EXPECT_EQ(b.image, x2);
  EXPECT_EQ(b.labels, y2);
  EXPECT_EQ(b.weights, w2);
}

TEST(Mix, MatchesElementwiseSelect) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const std::size_t h = 48, w = 48;
    const auto x1 = random_image(h, w, 10 + s), x2 = random_image(h, w, 20 + s);
    const auto y1 = random_labels(h, w, 30 + s), y2 = random_labels(h, w, 40 + s);
    const auto w1 = random_weights(h, w, 50 + s), w2 = random_weights(h, w, 60 + s);
    const auto m = generate_cowmask(h, w, 6.0, 0.45, s);
    const auto out = mix(x1, x2, y1, y2, w1, w2, m);
    std::size_t from_first = 0;
    for (std::size_t i = 0; i < h * w; ++i) {
      const bool one = m.mask[i] == 1;
      from_first += one;
      for (std::size_t c = 0; c < 3; ++c) {
        const float want = one ? x1.pixels()[i * 3 + c] : x2.pixels()[i * 3 + c];
        EXPECT_EQ(out.image.pixels()[i * 3 + c], want);
      }
      EXPECT_EQ(out.labels[i], one ? y1[i] : y2[i]);
      EXPECT_EQ(out.weights.w[i], one ? w1.w[i] : w2.w[i]);
    }
    EXPECT_DOUBLE_EQ(static_cast<double>(from_first) / (h * w), m.fraction_of_ones());
  }
}

TEST(Mix, EqualInputsAreFixedPoint) {
  const auto x = random_image(16, 16, 7);
  const auto y = random_labels(16, 16, 8);
  const auto wt = random_weights(16, 16, 9);
  const auto out = mix(x, x, y, y, wt, wt, generate_cowmask(16, 16, 3.0, 0.5, 1));
  EXPECT_EQ(out.image, x);
  EXPECT_EQ(out.labels, y);
  EXPECT_EQ(out.weights, wt);
}

TEST(Mix, RejectsShapeMismatch) {
  const auto x = random_image(8, 8, 1);
  const auto y = random_labels(8, 8, 2);
  const auto wt = random_weights(8, 8, 3);
  EXPECT_THROW(mix(x, random_image(8, 9, 1), y, y, wt, wt, constant_mask(8, 8, 1)), ShapeError);
  EXPECT_THROW(mix(x, x, y, y, wt, wt, constant_mask(8, 7, 1)), ShapeError);
  EXPECT_THROW(mix(x, x, y, y, wt, random_weights(7, 8, 1), constant_mask(8, 8, 1)), ShapeError);
}
