#include "cssl/metrics.hpp"

#include <numeric>
#include <sstream>

#include "cssl/error.hpp"
#include "format.hpp"

namespace cssl {

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : classes_(classes), counts_(classes * classes, 0) {
  if (classes < 2) throw ArgumentError("ConfusionMatrix: need at least 2 classes");
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::accumulate(const LabelMask& truth, const LabelMask& pred) {
  if (truth.height() != pred.height() || truth.width() != pred.width()) {
    throw ShapeError("ConfusionMatrix::accumulate: truth and prediction extents differ");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::uint8_t t = truth[i];
    if (t == kIgnore) continue;
    const std::uint8_t p = pred[i];
    if (t >= classes_ || p >= classes_) {
      throw ArgumentError("ConfusionMatrix::accumulate: class id out of range (truth " +
                          std::to_string(t) + ", prediction " + std::to_string(p) + ")");
    }
    ++counts_[t * classes_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw ShapeError("ConfusionMatrix::merge: class count differs");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::vector<std::optional<double>> ConfusionMatrix::class_iou() const {
  std::vector<std::optional<double>> iou(classes_);
  for (std::size_t c = 0; c < classes_; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t k = 0; k < classes_; ++k) {
      row += at(c, k);
      col += at(k, c);
    }
    if (row == 0) continue;
    const std::uint64_t tp = at(c, c);
    iou[c] = static_cast<double>(tp) / static_cast<double>(row + col - tp);
  }
  return iou;
}

double miou(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ArgumentError("miou: no evaluated pixels");
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : cm.class_iou()) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

std::string evaluation_csv(const ConfusionMatrix& cm) {
  std::ostringstream os;
  os << "class,iou\n";
  const auto iou = cm.class_iou();
  for (std::size_t c = 0; c < iou.size(); ++c) {
    os << c << ',' << detail::fmt_optional(iou[c]) << '\n';
  }
  os << "mean," << detail::fmt_double(miou(cm)) << '\n';
  return os.str();
}

}  // namespace cssl
