#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cssl/rng.hpp"
#include "cssl/types.hpp"

namespace cssl {

/// Binary mixing mask; 1 selects the first source, 0 the second.
struct CowMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> mask;
  double sigma = 0.0;  // smoothing scale, 0 for rectangular masks
  double p = 0.0;      // target fraction of ones

  double fraction_of_ones() const;

  bool operator==(const CowMask&) const = default;
};

enum class MixMode { kNone, kCow, kCutMix };

/// How the smoothed noise is cut. kGaussianFit puts the threshold at
/// mean + sqrt(2) * erfinv(2p - 1) * stddev of the field, which only hits p on
/// average: at sigma >= 8 on 48x48 single masks stray by 0.1-0.2. The empirical
/// quantile hits p to within one pixel on every mask.
enum class CowMaskThreshold { kEmpiricalQuantile, kGaussianFit };

/// Thresholded Gaussian-smoothed white noise; 1 where the field is <= threshold.
CowMask generate_cowmask(std::size_t height, std::size_t width, double sigma, double p,
                         std::uint64_t seed,
                         CowMaskThreshold threshold = CowMaskThreshold::kEmpiricalQuantile);

struct MaskParams {
  double sigma;
  double p;
};

inline constexpr double kMaskReferenceSize = 48.0;
inline constexpr double kMaskSigmaMin = 4.0;
inline constexpr double kMaskSigmaMax = 16.0;
inline constexpr double kMaskPMin = 0.3;
inline constexpr double kMaskPMax = 0.7;

/// sigma log-uniform on [4, 16] at 48x48, scaled with min(H, W); p uniform on [0.3, 0.7].
MaskParams sample_mask_params(Rng& rng, std::size_t height = 48, std::size_t width = 48);
MaskParams sample_mask_params(std::uint64_t seed, std::size_t height = 48, std::size_t width = 48);

/// A field of ones with one axis-aligned zero rectangle of area ~ (1 - p) H W,
/// placed uniformly inside the frame.
CowMask generate_cutmix_mask(std::size_t height, std::size_t width, double p,
                             std::uint64_t seed);

struct MixResult {
  Image image;
  LabelMask labels;
  WeightMap weights;
};

/// Image blend M * x1 + (1 - M) * x2; labels and weights are selected per pixel.
MixResult mix(const Image& x1, const Image& x2, const LabelMask& y1, const LabelMask& y2,
              const WeightMap& w1, const WeightMap& w2, const CowMask& m);

}  // namespace cssl
