#include "cssl/loss.hpp"

#include <algorithm>
#include <cmath>

#include "cssl/pseudolabel.hpp"

namespace cssl {

namespace {

constexpr double kProbFloor = 1e-12;

template <typename T>
void check_probs_vs_mask(const Tensor<T>& probs, const LabelMask& mask, const char* who) {
  if (probs.rank() != 3 || probs.extent(1) != mask.height() || probs.extent(2) != mask.width()) {
    throw ShapeError(std::string(who) + ": probabilities " +
                     Tensor<T>::shape_string(probs.shape()) + " do not match mask " +
                     std::to_string(mask.height()) + "x" + std::to_string(mask.width()));
  }
}

}  // namespace

void SceConfig::validate() const {
  if (!(alpha > 0.0)) throw ArgumentError("SceConfig: alpha must be > 0");
  if (!(beta >= 0.0)) throw ArgumentError("SceConfig: beta must be >= 0");
  if (!(clamp < 0.0)) throw ArgumentError("SceConfig: clamp must be < 0");
}

template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& probs, const LabelMask& target) {
  check_probs_vs_mask(probs, target, "cross_entropy");
  const std::size_t classes = probs.extent(0);
  const std::size_t plane = target.size();
  LossResult<T> res;
  res.grad_logits = Tensor<T>(probs.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    const std::uint8_t y = target[i];
    if (y == kIgnore) continue;
    if (y >= classes) {
      throw ArgumentError("cross_entropy: target class " + std::to_string(y) +
                          " out of range for K=" + std::to_string(classes));
    }
    total -= std::log(std::max(static_cast<double>(probs[y * plane + i]), kProbFloor));
    ++res.counted;
  }
  if (res.counted == 0) return res;
  const T inv = T{1} / static_cast<T>(res.counted);
  res.loss = static_cast<T>(total / static_cast<double>(res.counted));
  for (std::size_t i = 0; i < plane; ++i) {
    const std::uint8_t y = target[i];
    if (y == kIgnore) continue;
    for (std::size_t c = 0; c < classes; ++c) {
      const T onehot = c == y ? T{1} : T{0};
      res.grad_logits[c * plane + i] = (probs[c * plane + i] - onehot) * inv;
    }
  }
  return res;
}

template <typename T>
LossResult<T> weighted_sce(const Tensor<T>& probs, const LabelMask& pseudo,
                           const WeightMap& weights, const SceConfig& cfg) {
  check_probs_vs_mask(probs, pseudo, "weighted_sce");
  if (weights.height != pseudo.height() || weights.width != pseudo.width()) {
    throw ShapeError("weighted_sce: weight map does not match label mask");
  }
  if (!all_finite(probs.data())) throw NumericError("weighted_sce: non-finite probabilities");
  cfg.validate();
  const std::size_t classes = probs.extent(0);
  const std::size_t plane = pseudo.size();
  const auto alpha = static_cast<T>(cfg.alpha);
  const auto beta = static_cast<T>(cfg.beta);
  const auto clamp = static_cast<T>(cfg.clamp);

  LossResult<T> res;
  res.grad_logits = Tensor<T>(probs.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    const std::uint8_t y = pseudo[i];
    if (y == kIgnore || !(weights.w[i] > 0.0f)) continue;
    if (y >= classes) {
      throw ArgumentError("weighted_sce: pseudo-label " + std::to_string(y) +
                          " out of range for K=" + std::to_string(classes));
    }
    const double py = static_cast<double>(probs[y * plane + i]);
    const double fwd = -std::log(std::max(py, kProbFloor));
    const double rev = -cfg.clamp * (1.0 - py);
    total += static_cast<double>(weights.w[i]) * (cfg.alpha * fwd + cfg.beta * rev);
    ++res.counted;
  }
  if (res.counted == 0) return res;
  res.loss = static_cast<T>(total / static_cast<double>(res.counted));
  const T inv = T{1} / static_cast<T>(res.counted);
  for (std::size_t i = 0; i < plane; ++i) {
    const std::uint8_t y = pseudo[i];
    if (y == kIgnore || !(weights.w[i] > 0.0f)) continue;
    const T scale = static_cast<T>(weights.w[i]) * inv;
    const T py = probs[y * plane + i];
    for (std::size_t c = 0; c < classes; ++c) {
      const T pc = probs[c * plane + i];
      const T onehot = c == y ? T{1} : T{0};
      // d(-log p_y)/dz_c = p_c - [c=y];  d(-A(1-p_y))/dz_c = A p_y ([c=y] - p_c)
      res.grad_logits[c * plane + i] =
          scale * (alpha * (pc - onehot) + beta * clamp * py * (onehot - pc));
    }
  }
  return res;
}

WeightMap weights_from_probs(const TensorF& student_probs, const PseudoLabelRecord& pseudo) {
  const LabelMask& labels = pseudo.labels;
  check_probs_vs_mask(student_probs, labels, "compute_weights");
  const std::size_t plane = labels.size();
  WeightMap w(labels.height(), labels.width(), 0.0f);
  for (std::size_t i = 0; i < plane; ++i) {
    const std::uint8_t y = labels[i];
    if (!pseudo.valid[i] || y == kIgnore) continue;
    if (y >= student_probs.extent(0)) {
      throw ArgumentError("compute_weights: pseudo-label out of range");
    }
    w.w[i] = std::clamp(student_probs[y * plane + i], 0.0f, 1.0f);
  }
  return w;
}

WeightMap compute_weights(const SegModel& student, const Image& unperturbed,
                          const PseudoLabelRecord& pseudo) {
  if (unperturbed.height() != pseudo.labels.height() ||
      unperturbed.width() != pseudo.labels.width()) {
    throw ShapeError("compute_weights: image does not match pseudo-label record");
  }
  return weights_from_probs(softmax_channel(forward(student, unperturbed)), pseudo);
}

template LossResult<float> cross_entropy(const Tensor<float>&, const LabelMask&);
template LossResult<double> cross_entropy(const Tensor<double>&, const LabelMask&);
template LossResult<float> weighted_sce(const Tensor<float>&, const LabelMask&,
                                        const WeightMap&, const SceConfig&);
template LossResult<double> weighted_sce(const Tensor<double>&, const LabelMask&,
                                         const WeightMap&, const SceConfig&);

}  // namespace cssl
