#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cssl/types.hpp"

namespace cssl {

/// K x K counts; rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  std::size_t classes() const noexcept { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const {
    return counts_[truth * classes_ + pred];
  }
  std::uint64_t total() const noexcept;

  /// Adds one image; pixels with ignored truth are skipped.
  void accumulate(const LabelMask& truth, const LabelMask& pred);
  void merge(const ConfusionMatrix& other);

  /// TP / (TP + FP + FN) per class; nullopt for classes absent from truth.
  std::vector<std::optional<double>> class_iou() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

/// Mean IoU over classes present in truth. Throws on an empty matrix.
double miou(const ConfusionMatrix& cm);

/// "class,iou" rows for every class followed by a "mean" row.
std::string evaluation_csv(const ConfusionMatrix& cm);

}  // namespace cssl
