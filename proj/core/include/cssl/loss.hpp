#pragma once

#include "cssl/model.hpp"
#include "cssl/tensor.hpp"
#include "cssl/types.hpp"

namespace cssl {

struct PseudoLabelRecord;

/// Symmetric cross-entropy coefficients. `clamp` replaces log(0) in the
/// reverse term, so that term reduces to -clamp * (1 - p_label).
struct SceConfig {
  double alpha = 2.0;
  double beta = 1.0;
  double clamp = -4.0;

  void validate() const;
};

template <typename T>
struct LossResult {
  T loss{0};
  Tensor<T> grad_logits;   // d loss / d logits, same shape as the probabilities
  std::size_t counted = 0; // pixels entering the average
};

/// Mean of -log p_target over non-ignored pixels; gradient (softmax - onehot) / count.
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& probs, const LabelMask& target);

/// Per pixel w * (alpha * -log p_y + beta * -clamp * (1 - p_y)), averaged over
/// pixels with w > 0. Weights and labels are constants for the gradient.
template <typename T>
LossResult<T> weighted_sce(const Tensor<T>& probs, const LabelMask& pseudo,
                           const WeightMap& weights, const SceConfig& cfg);

/// Student probability of the pseudo-label class on the unperturbed image;
/// zero on invalid pixels.
WeightMap compute_weights(const SegModel& student, const Image& unperturbed,
                          const PseudoLabelRecord& pseudo);

/// Same, from precomputed student probabilities.
WeightMap weights_from_probs(const TensorF& student_probs, const PseudoLabelRecord& pseudo);

}  // namespace cssl
