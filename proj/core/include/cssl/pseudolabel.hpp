#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cssl/model.hpp"
#include "cssl/types.hpp"

namespace cssl {

/// Teacher pseudo-labels with per-pixel confidence and validity.
/// Invalid pixels behave as kIgnore in every loss.
struct PseudoLabelRecord {
  LabelMask labels;
  std::vector<float> confidence;
  std::vector<std::uint8_t> valid;

  std::size_t valid_count() const;
  /// Labels with invalid pixels replaced by kIgnore.
  LabelMask effective_labels() const;

  bool operator==(const PseudoLabelRecord&) const = default;
};

/// One validity vector per record.
using ValiditySet = std::vector<std::vector<std::uint8_t>>;

/// Argmax labels and max-probability confidence from [K,H,W] probabilities.
PseudoLabelRecord record_from_probs(const TensorF& probs);

/// argmax(softmax(teacher(image))); every pixel valid.
PseudoLabelRecord generate_pseudo_labels(const SegModel& teacher, const Image& image);

/// Averages per-view distributions already mapped to the original frame.
PseudoLabelRecord average_views(std::span<const TensorF> view_probs);

/// Views cycle identity, horizontal flip; flipped outputs are flipped back
/// before averaging.
PseudoLabelRecord ensemble_confidence(const SegModel& teacher, const Image& image,
                                      std::size_t n_views);

inline constexpr std::size_t kDefaultBins = 100;

/// Confidence counts of one class over B uniform bins on [0,1]; the last bin
/// is closed on the right.
struct ClassHistogram {
  std::uint8_t class_id = 0;
  std::vector<std::uint64_t> counts;

  std::size_t bins() const noexcept { return counts.size(); }
  double bin_lo(std::size_t j) const { return static_cast<double>(j) / static_cast<double>(bins()); }
  double bin_hi(std::size_t j) const { return static_cast<double>(j + 1) / static_cast<double>(bins()); }
  std::uint64_t total() const;
};

/// Bin index of a confidence value among `bins` bins.
std::size_t confidence_bin(float confidence, std::size_t bins);

std::vector<ClassHistogram> class_histograms(std::span<const PseudoLabelRecord> records,
                                             std::size_t classes,
                                             std::size_t bins = kDefaultBins);

/// Per class, the largest bin edge with at most q of the class total below it,
/// so no more than q is ever removed. Empty classes and q == 0 give 0.
std::vector<double> classwise_thresholds(std::span<const ClassHistogram> histograms, double q);

/// Invalidates pixels whose confidence is strictly below the threshold of
/// their pseudo-label class. Labels are left untouched.
void filter_inplace(std::span<PseudoLabelRecord> records, std::span<const double> thresholds);
std::vector<PseudoLabelRecord> filter(std::span<const PseudoLabelRecord> records,
                                      std::span<const double> thresholds);

/// Histogram + threshold + filter in one call; q == 0 is a no-op.
std::vector<double> filter_by_quantile(std::span<PseudoLabelRecord> records,
                                       std::size_t classes, double q,
                                       std::size_t bins = kDefaultBins);

inline constexpr std::size_t kDeciles = 10;

/// Subset d holds, for every class, the valid pixels in that class's d-th
/// confidence decile. Ties keep (record, pixel) order.
std::array<ValiditySet, kDeciles> decile_split(std::span<const PseudoLabelRecord> records,
                                               std::size_t classes);

/// Copies of `records` with validity replaced by `validity`.
std::vector<PseudoLabelRecord> with_validity(std::span<const PseudoLabelRecord> records,
                                             const ValiditySet& validity);

inline constexpr std::size_t kNoBoundary = std::numeric_limits<std::size_t>::max();

/// Chessboard distance from each pixel to the nearest non-ignored pixel with a
/// different label; kNoBoundary where none exists or the pixel is ignored.
std::vector<std::size_t> boundary_distance(const LabelMask& labels);

struct BoundarySplit {
  std::vector<std::uint8_t> near;  // distance <= d
  std::vector<std::uint8_t> far;   // distance > d
};

inline constexpr std::size_t kDefaultBoundaryDistance = 2;

BoundarySplit boundary_distance_split(const LabelMask& labels, std::size_t d);

struct BoundaryStats {
  std::size_t near_count = 0;
  std::size_t far_count = 0;
  double near_mean_confidence = 0.0;
  double far_mean_confidence = 0.0;
};

/// Mean confidence of valid pseudo-labels near and far from pseudo-label boundaries.
BoundaryStats boundary_confidence(std::span<const PseudoLabelRecord> records, std::size_t d);

/// Per class, correct-and-valid / valid pseudo-labels; nullopt for classes with
/// no valid pixel. Pixels with ignored truth are skipped.
std::vector<std::optional<double>> precision(std::span<const PseudoLabelRecord> records,
                                             std::span<const LabelMask> truth,
                                             std::size_t classes);

/// Mean over present classes of precision(); nullopt if none is present.
std::optional<double> mean_precision(std::span<const PseudoLabelRecord> records,
                                     std::span<const LabelMask> truth, std::size_t classes);

struct DecileRow {
  std::size_t class_id = 0;
  std::size_t decile = 0;  // 1-based
  std::size_t pixel_count = 0;
  std::optional<double> precision;
  double mean_confidence = 0.0;
};

/// One row per (class, decile) for classes with valid pixels.
std::vector<DecileRow> decile_report(std::span<const PseudoLabelRecord> records,
                                     std::span<const LabelMask> truth, std::size_t classes);

std::string histograms_csv(std::span<const ClassHistogram> histograms);
std::string decile_csv(std::span<const DecileRow> rows);

}  // namespace cssl
