#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <cssl/error.hpp>
#include <cssl/tensor.hpp>

#include "oracles.hpp"

using namespace cssl;

TEST(Conv2d, OneByOneIdentity) {
  auto in = oracle::random_tensor<float>({1, 7, 5}, 1);
  TensorF k({1, 1, 1, 1}, 1.0f), b({1});
  EXPECT_EQ(conv2d(in, k, b), in);
}

TEST(Conv2d, ZeroKernelGivesBias) {
  auto in = oracle::random_tensor<float>({3, 6, 9}, 2);
  TensorF k({2, 3, 3, 3}), b({2}, std::vector<float>{0.5f, -1.25f});
  auto out = conv2d(in, k, b);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 6; ++y)
      for (std::size_t x = 0; x < 9; ++x) EXPECT_EQ(out.at(c, y, x), b[c]);
}

TEST(Conv2d, MatchesNaiveLoop) {
  // Sizes straddle the vector width so partial lanes and channel blocks are hit.
  const std::vector<std::array<std::size_t, 5>> cases = {
      {3, 16, 48, 48, 3}, {16, 4, 13, 17, 3}, {5, 23, 9, 70, 3}, {2, 3, 11, 8, 5}, {1, 1, 1, 1, 3}};
  std::uint64_t seed = 10;
  for (auto [ci, co, h, w, k] : cases) {
    auto in = oracle::random_tensor<float>({ci, h, w}, seed++);
    auto ker = oracle::random_tensor<float>({co, ci, k, k}, seed++);
    auto b = oracle::random_tensor<float>({co}, seed++);
    auto got = conv2d(in, ker, b);
    auto want = oracle::naive_conv(in, ker, b);
    ASSERT_EQ(got.shape(), want.shape());
    float worst = 0.0f;
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    EXPECT_LT(worst, 1e-5f) << "cin=" << ci << " cout=" << co << " " << h << "x" << w;
  }
}

TEST(Conv2d, RejectsShapeMismatch) {
  TensorF in({3, 4, 4}), k({2, 2, 3, 3}), b({2});
  EXPECT_THROW(conv2d(in, k, b), ShapeError);
  TensorF k2({2, 3, 3, 3}), b2({3});
  EXPECT_THROW(conv2d(in, k2, b2), ShapeError);
  TensorF even({2, 3, 2, 2});
  EXPECT_THROW(conv2d(in, even, b), ShapeError);
  TensorF flat({3, 16});
  EXPECT_THROW(conv2d(flat, k2, b), ShapeError);
}

TEST(Conv2dBackward, ZeroUpstream) {
  auto in = oracle::random_tensor<float>({3, 8, 8}, 3);
  auto k = oracle::random_tensor<float>({4, 3, 3, 3}, 4);
  auto g = conv2d_backward(TensorF({4, 8, 8}), in, k);
  for (float v : g.input.data()) EXPECT_EQ(v, 0.0f);
  for (float v : g.kernel.data()) EXPECT_EQ(v, 0.0f);
  for (float v : g.bias.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2dBackward, SinglePixelOneByOne) {
  auto in = oracle::random_tensor<float>({2, 5, 6}, 5);
  auto k = oracle::random_tensor<float>({1, 2, 1, 1}, 6);
  TensorF go({1, 5, 6});
  go.at(0, 3, 4) = 1.0f;
  auto g = conv2d_backward(go, in, k);
  EXPECT_EQ(g.kernel[0], in.at(0, 3, 4));
  EXPECT_EQ(g.kernel[1], in.at(1, 3, 4));
  EXPECT_EQ(g.bias[0], 1.0f);
}

TEST(Conv2dBackward, RejectsShapeMismatch) {
  TensorF in({3, 4, 4}), k({2, 3, 3, 3});
  EXPECT_THROW(conv2d_backward(TensorF({3, 4, 4}), in, k), ShapeError);
  EXPECT_THROW(conv2d_backward(TensorF({2, 4, 5}), in, k), ShapeError);
}

// Loss L = sum(G * conv(x, k, b)); its exact gradients are those returned by
// conv2d_backward(G, x, k).
TEST(Conv2dBackward, MatchesCentralDifferences) {
  for (std::uint64_t inst = 0; inst < 24; ++inst) {
    const std::size_t ci = 1 + inst % 3, co = 1 + (inst / 3) % 4, h = 3 + inst % 5, w = 2 + inst % 7;
    const std::size_t ks = inst % 4 == 3 ? 5 : 3;
    auto x = oracle::random_tensor<double>({ci, h, w}, 100 + inst);
    auto k = oracle::random_tensor<double>({co, ci, ks, ks}, 200 + inst);
    auto b = oracle::random_tensor<double>({co}, 300 + inst);
    auto go = oracle::random_tensor<double>({co, h, w}, 400 + inst);
    auto loss = [&] {
      auto y = conv2d(x, k, b);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += go[i] * y[i];
      return s;
    };
    auto g = conv2d_backward(go, x, k);
    auto check = [&](TensorD& param, const TensorD& analytic, const char* what) {
      std::vector<double> fd, an(analytic.data().begin(), analytic.data().end());
      for (auto& v : param.data()) fd.push_back(oracle::central_difference(loss, v, 1e-3));
      EXPECT_LT(oracle::rel_error(an, fd), 1e-6) << what << " instance " << inst;
    };
    check(x, g.input, "input");
    check(k, g.kernel, "kernel");
    check(b, g.bias, "bias");
  }
}

TEST(GaussianFilter, ConstantFieldUnchanged) {
  TensorF f({20, 13}, 0.37f);
  for (double sigma : {0.5, 2.0, 8.0}) {
    auto out = gaussian_filter(f, sigma);
    for (float v : out.data()) EXPECT_NEAR(v, 0.37f, 1e-6f);
  }
}

TEST(GaussianFilter, SubPixelSigmaIsNearIdentity) {
  auto f = oracle::random_tensor<float>({16, 16}, 7, 0.0, 1.0);
  auto out = gaussian_filter(f, 0.2);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(out[i], f[i], 1e-4f);
}

TEST(GaussianFilter, ImpulseResponse) {
  const double sigma = 2.0;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) norm += std::exp(-0.5 * i * i / (sigma * sigma));
  const double center_tap = 1.0 / norm;

  TensorF f({33, 33});
  f[16 * 33 + 16] = 1.0f;
  auto out = gaussian_filter(f, sigma);
  EXPECT_NEAR(out[16 * 33 + 16], center_tap * center_tap, 1e-7);
  const double total = std::accumulate(out.data().begin(), out.data().end(), 0.0);
  EXPECT_NEAR(total, 1.0, 1e-5);

  auto taps = gaussian_kernel(sigma);
  ASSERT_EQ(taps.size(), static_cast<std::size_t>(2 * radius + 1));
  EXPECT_NEAR(taps[static_cast<std::size_t>(radius)], center_tap, 1e-15);
}

TEST(GaussianFilter, PreservesMean) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto f = oracle::random_tensor<float>({48, 48}, 50 + seed, -2.0, 2.0);
    const double before = std::accumulate(f.data().begin(), f.data().end(), 0.0) / 2304.0;
    for (double sigma : {1.0, 4.0, 15.0}) {
      auto out = gaussian_filter(f, sigma);
      const double after = std::accumulate(out.data().begin(), out.data().end(), 0.0) / 2304.0;
      EXPECT_NEAR(after, before, 1e-4) << "sigma " << sigma;
    }
  }
}

TEST(GaussianFilter, RejectsBadSigma) {
  TensorF f({4, 4});
  EXPECT_THROW(gaussian_filter(f, 0.0), ArgumentError);
  EXPECT_THROW(gaussian_filter(f, -1.0), ArgumentError);
  EXPECT_THROW(gaussian_filter(TensorF({2, 4, 4}), 1.0), ShapeError);
}

TEST(Softmax, EqualLogitsAreUniform) {
  TensorF z({4, 3, 2}, 1.5f);
  const auto probs = softmax_channel(z);
  for (float p : probs.data()) EXPECT_FLOAT_EQ(p, 0.25f);
}

TEST(Softmax, LargeLogitsStayFinite) {
  TensorF z({2, 1, 1}, std::vector<float>{1000.0f, 0.0f});
  auto p = softmax_channel(z);
  EXPECT_NEAR(p[0], 1.0f, 1e-7f);
  EXPECT_NEAR(p[1], 0.0f, 1e-7f);
}

TEST(Softmax, KnownValues) {
  TensorF z({3, 1, 1}, std::vector<float>{1.0f, 2.0f, 3.0f});
  auto p = softmax_channel(z);
  EXPECT_NEAR(p[0], 0.09003, 1e-5);
  EXPECT_NEAR(p[1], 0.24473, 1e-5);
  EXPECT_NEAR(p[2], 0.66524, 1e-5);
}

TEST(Softmax, SumsToOneForExtremeLogits) {
  auto z = oracle::random_tensor<float>({5, 9, 9}, 8, -1e4, 1e4);
  auto p = softmax_channel(z);
  for (std::size_t i = 0; i < 81; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      const float v = p[c * 81 + i];
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Argmax, OneHot) {
  TensorF p({3, 2, 2});
  const std::uint8_t hot[4] = {2, 0, 1, 2};
  for (std::size_t i = 0; i < 4; ++i) p[hot[i] * 4u + i] = 1.0f;
  auto m = argmax_channel(p);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(m[i], hot[i]);
}

TEST(Argmax, TiesGoToLowestIndex) {
  TensorF p({4, 3, 3}, 0.25f);
  const auto arg = argmax_channel(p);
  for (std::uint8_t v : arg.labels()) EXPECT_EQ(v, 0);
}

TEST(Argmax, MatchesLinearScanAndCommutesWithSoftmax) {
  auto z = oracle::random_tensor<float>({6, 10, 11}, 9, -3.0, 3.0);
  auto m = argmax_channel(z);
  for (std::size_t i = 0; i < 110; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < 6; ++c)
      if (z[c * 110 + i] > z[best * 110 + i]) best = c;
    EXPECT_EQ(m[i], best);
  }
  EXPECT_EQ(argmax_channel(softmax_channel(z)), m);
}

TEST(Tensor, RejectsDataLengthMismatch) {
  EXPECT_THROW(TensorF({2, 3}, std::vector<float>(5)), ShapeError);
}

TEST(Tensor, AllFinite) {
  std::vector<float> v{1.0f, 2.0f};
  EXPECT_TRUE(all_finite<float>(v));
  v.push_back(std::nanf(""));
  EXPECT_FALSE(all_finite<float>(v));
}
