#include "cssl/cowmask.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <limits>
#include <numeric>

#include "cssl/error.hpp"
#include "cssl/tensor.hpp"

namespace cssl {

double CowMask::fraction_of_ones() const {
  if (mask.empty()) return 0.0;
  const auto ones = std::count(mask.begin(), mask.end(), std::uint8_t{1});
  return static_cast<double>(ones) / static_cast<double>(mask.size());
}

namespace {

void check_fraction(double p, const char* who) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ArgumentError(std::string(who) + ": p must be in (0,1), got " + std::to_string(p));
  }
}

}  // namespace

CowMask generate_cowmask(std::size_t height, std::size_t width, double sigma, double p,
                         std::uint64_t seed, CowMaskThreshold threshold) {
  check_fraction(p, "generate_cowmask");
  if (!(sigma > 0.0)) {
    throw ArgumentError("generate_cowmask: sigma must be positive, got " + std::to_string(sigma));
  }
  Rng rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  TensorF noise({height, width});
  for (float& v : noise.data()) v = normal(rng);
  const TensorF smooth = gaussian_filter(noise, sigma);

  double tau = 0.0;
  if (threshold == CowMaskThreshold::kGaussianFit) {
    const auto n = static_cast<double>(smooth.size());
    double sum = 0.0;
    for (float v : smooth.data()) sum += v;
    const double mean = sum / n;
    double sq = 0.0;
    for (float v : smooth.data()) sq += (v - mean) * (v - mean);
    const double stddev = std::sqrt(sq / n);
    tau = mean + std::sqrt(2.0) * boost::math::erf_inv(2.0 * p - 1.0) * stddev;
  } else {
    const auto ones = static_cast<std::size_t>(std::lround(p * static_cast<double>(smooth.size())));
    if (ones == 0) {
      tau = -std::numeric_limits<double>::infinity();
    } else {
      std::vector<float> sorted(smooth.data().begin(), smooth.data().end());
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(ones - 1),
                       sorted.end());
      tau = sorted[ones - 1];
    }
  }

  CowMask m{height, width, std::vector<std::uint8_t>(smooth.size()), sigma, p};
  for (std::size_t i = 0; i < smooth.size(); ++i) {
    m.mask[i] = static_cast<double>(smooth[i]) <= tau ? 1 : 0;
  }
  return m;
}

MaskParams sample_mask_params(Rng& rng, std::size_t height, std::size_t width) {
  const double scale = static_cast<double>(std::min(height, width)) / kMaskReferenceSize;
  const double lo = kMaskSigmaMin * scale;
  const double hi = kMaskSigmaMax * scale;
  const double sigma = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * uniform01(rng));
  const double p = kMaskPMin + (kMaskPMax - kMaskPMin) * uniform01(rng);
  return {std::clamp(sigma, lo, hi), p};
}

MaskParams sample_mask_params(std::uint64_t seed, std::size_t height, std::size_t width) {
  Rng rng(seed);
  return sample_mask_params(rng, height, width);
}

CowMask generate_cutmix_mask(std::size_t height, std::size_t width, double p,
                             std::uint64_t seed) {
  check_fraction(p, "generate_cutmix_mask");
  Rng rng(seed);
  const double side = std::sqrt(1.0 - p);
  const auto rect_h = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(side * static_cast<double>(height))), 1, height);
  const auto rect_w = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(side * static_cast<double>(width))), 1, width);
  const std::size_t y0 = uniform_index(rng, height - rect_h + 1);
  const std::size_t x0 = uniform_index(rng, width - rect_w + 1);
  CowMask m{height, width, std::vector<std::uint8_t>(height * width, 1), 0.0, p};
  for (std::size_t y = y0; y < std::min(height, y0 + rect_h); ++y) {
    for (std::size_t x = x0; x < std::min(width, x0 + rect_w); ++x) m.mask[y * width + x] = 0;
  }
  return m;
}

MixResult mix(const Image& x1, const Image& x2, const LabelMask& y1, const LabelMask& y2,
              const WeightMap& w1, const WeightMap& w2, const CowMask& m) {
  const std::size_t h = m.height;
  const std::size_t w = m.width;
  const auto same = [&](std::size_t hh, std::size_t ww) { return hh == h && ww == w; };
  if (!same(x1.height(), x1.width()) || !same(x2.height(), x2.width()) ||
      !same(y1.height(), y1.width()) || !same(y2.height(), y2.width()) ||
      !same(w1.height, w1.width) || !same(w2.height, w2.width) || m.mask.size() != h * w) {
    throw ShapeError("mix: all inputs must share the mask's " + std::to_string(h) + "x" +
                     std::to_string(w) + " extent");
  }
  MixResult out{Image(h, w), LabelMask(h, w), WeightMap(h, w)};
  for (std::size_t i = 0; i < h * w; ++i) {
    const float a = static_cast<float>(m.mask[i]);
    for (std::size_t c = 0; c < Image::kChannels; ++c) {
      const std::size_t k = i * Image::kChannels + c;
      out.image.pixels()[k] = a * x1.pixels()[k] + (1.0f - a) * x2.pixels()[k];
    }
    const bool first = m.mask[i] != 0;
    out.labels[i] = first ? y1[i] : y2[i];
    out.weights.w[i] = first ? w1.w[i] : w2.w[i];
  }
  return out;
}

}  // namespace cssl
