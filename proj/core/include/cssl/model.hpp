#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cssl/tensor.hpp"
#include "cssl/types.hpp"

namespace cssl {

/// Fixed topology: four same-padded 3x3 convolutions, 3 -> 16 -> 16 -> 16 -> K,
/// ReLU after the first three. No pooling, so logits keep input resolution.
inline constexpr std::size_t kLayerCount = 4;
inline constexpr std::size_t kHiddenChannels = 16;
inline constexpr std::size_t kKernelSize = 3;

template <typename T>
struct ConvLayer {
  Tensor<T> kernel;  // [Cout, Cin, k, k]
  Tensor<T> bias;    // [Cout]

  bool operator==(const ConvLayer&) const = default;
};

/// Parameter gradients share the layer structure of the model.
template <typename T>
using ModelGrads = std::array<ConvLayer<T>, kLayerCount>;

template <typename T>
class BasicSegModel {
 public:
  BasicSegModel() = default;

  /// All-zero parameters for `classes` output classes.
  explicit BasicSegModel(std::size_t classes);

  std::size_t classes() const noexcept { return classes_; }
  std::array<ConvLayer<T>, kLayerCount>& layers() noexcept { return layers_; }
  const std::array<ConvLayer<T>, kLayerCount>& layers() const noexcept { return layers_; }

  std::size_t parameter_count() const noexcept;
  bool finite() const noexcept;

  template <typename U>
  BasicSegModel<U> cast() const {
    BasicSegModel<U> out(classes_);
    for (std::size_t i = 0; i < kLayerCount; ++i) {
      out.layers()[i].kernel = layers_[i].kernel.template cast<U>();
      out.layers()[i].bias = layers_[i].bias.template cast<U>();
    }
    return out;
  }

  bool operator==(const BasicSegModel&) const = default;

 private:
  std::size_t classes_ = 0;
  std::array<ConvLayer<T>, kLayerCount> layers_{};
};

using SegModel = BasicSegModel<float>;

/// Layer inputs retained by a training forward pass.
template <typename T>
struct Activations {
  std::array<Tensor<T>, kLayerCount> inputs;  // inputs[0] is the image
  Tensor<T> logits;
};

/// Image (HWC) to a [3,H,W] network input.
template <typename T = float>
Tensor<T> to_input(const Image& image);

/// Logits [K,H,W] for a [3,H,W] input.
template <typename T>
Tensor<T> forward(const BasicSegModel<T>& model, const Tensor<T>& input);

inline TensorF forward(const SegModel& model, const Image& image) {
  return forward(model, to_input<float>(image));
}

/// Forward pass that keeps what backward() needs.
template <typename T>
Activations<T> forward_train(const BasicSegModel<T>& model, const Tensor<T>& input);

/// Parameter gradients for the cotangent grad_logits [K,H,W].
template <typename T>
ModelGrads<T> backward(const BasicSegModel<T>& model, const Activations<T>& acts,
                       const Tensor<T>& grad_logits);

/// Recomputes the forward pass, then backpropagates.
template <typename T>
ModelGrads<T> backward(const BasicSegModel<T>& model, const Tensor<T>& input,
                       const Tensor<T>& grad_logits);

template <typename T>
ModelGrads<T> zero_grads(const BasicSegModel<T>& model);

/// dst += scale * src, layer by layer.
template <typename T>
void accumulate(ModelGrads<T>& dst, const ModelGrads<T>& src, T scale = T{1});

/// He-normal kernels (stddev sqrt(2 / fan_in)) and zero biases.
SegModel init_model(std::uint64_t seed, std::size_t classes);

struct OptimState {
  ModelGrads<float> velocity;
  double base_lr = 0.01;
  double power = 0.9;
  std::size_t max_iter = 1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

OptimState make_optim_state(const SegModel& model, double base_lr, double power,
                            std::size_t max_iter, double momentum = 0.9,
                            double weight_decay = 1e-4);

/// base_lr * (1 - iter / max_iter)^power.
double poly_lr(const OptimState& state, std::size_t iter);

/// v <- momentum * v + g + weight_decay * theta;  theta <- theta - poly_lr(iter) * v.
void sgd_step(SegModel& model, const ModelGrads<float>& grads, OptimState& state,
              std::size_t iter);

/// Checkpoint blob: "CSSL", u32 version, u32 K, u32 layer count, then per layer
/// u32 extents (Cout, Cin, kh, kw), kernel floats and Cout bias floats, all LE.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_model(const SegModel& model);
SegModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const SegModel& model);
SegModel load_checkpoint(const std::filesystem::path& path);

}  // namespace cssl
