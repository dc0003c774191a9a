#include "cssl/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cssl/rng.hpp"

namespace cssl {

namespace {

constexpr std::array<std::size_t, kLayerCount + 1> channel_plan(std::size_t classes) {
  return {Image::kChannels, kHiddenChannels, kHiddenChannels, kHiddenChannels, classes};
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (T& v : t.data()) v = v > T{0} ? v : T{0};
}

}  // namespace

template <typename T>
BasicSegModel<T>::BasicSegModel(std::size_t classes) : classes_(classes) {
  if (classes < 2 || classes >= kIgnore) {
    throw ArgumentError("SegModel: class count must be in [2, 254], got " +
                        std::to_string(classes));
  }
  const auto plan = channel_plan(classes);
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    layers_[i].kernel = Tensor<T>({plan[i + 1], plan[i], kKernelSize, kKernelSize});
    layers_[i].bias = Tensor<T>({plan[i + 1]});
  }
}

template <typename T>
std::size_t BasicSegModel<T>::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.kernel.size() + l.bias.size();
  return n;
}

template <typename T>
bool BasicSegModel<T>::finite() const noexcept {
  for (const auto& l : layers_) {
    if (!all_finite(l.kernel.data()) || !all_finite(l.bias.data())) return false;
  }
  return true;
}

template <typename T>
Tensor<T> to_input(const Image& image) {
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  Tensor<T> t({Image::kChannels, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < Image::kChannels; ++c) {
        t.at(c, y, x) = static_cast<T>(image.at(y, x, c));
      }
    }
  }
  return t;
}

template <typename T>
Activations<T> forward_train(const BasicSegModel<T>& model, const Tensor<T>& input) {
  if (input.rank() != 3 || input.extent(0) != Image::kChannels) {
    throw ShapeError("forward: input must be [3,H,W], got " +
                     Tensor<T>::shape_string(input.shape()));
  }
  Activations<T> acts;
  acts.inputs[0] = input;
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    const auto& layer = model.layers()[i];
    Tensor<T> out = conv2d(acts.inputs[i], layer.kernel, layer.bias);
    if (i + 1 < kLayerCount) {
      relu_inplace(out);
      acts.inputs[i + 1] = std::move(out);
    } else {
      acts.logits = std::move(out);
    }
  }
  return acts;
}

template <typename T>
Tensor<T> forward(const BasicSegModel<T>& model, const Tensor<T>& input) {
  if (input.rank() != 3 || input.extent(0) != Image::kChannels) {
    throw ShapeError("forward: input must be [3,H,W], got " +
                     Tensor<T>::shape_string(input.shape()));
  }
  Tensor<T> x = conv2d(input, model.layers()[0].kernel, model.layers()[0].bias);
  for (std::size_t i = 1; i < kLayerCount; ++i) {
    relu_inplace(x);
    x = conv2d(x, model.layers()[i].kernel, model.layers()[i].bias);
  }
  return x;
}

template <typename T>
ModelGrads<T> backward(const BasicSegModel<T>& model, const Activations<T>& acts,
                       const Tensor<T>& grad_logits) {
  if (grad_logits.shape() != acts.logits.shape()) {
    throw ShapeError("backward: grad_logits must be " +
                     Tensor<T>::shape_string(acts.logits.shape()) + ", got " +
                     Tensor<T>::shape_string(grad_logits.shape()));
  }
  ModelGrads<T> grads;
  Tensor<T> upstream = grad_logits;
  for (std::size_t i = kLayerCount; i-- > 0;) {
    ConvGrads<T> g = conv2d_backward(upstream, acts.inputs[i], model.layers()[i].kernel);
    grads[i].kernel = std::move(g.kernel);
    grads[i].bias = std::move(g.bias);
    if (i == 0) break;
    // inputs[i] = relu(pre-activation); its positive support is the ReLU gate.
    const auto gate = acts.inputs[i].data();
    auto gi = g.input.data();
    for (std::size_t j = 0; j < gi.size(); ++j) {
      if (!(gate[j] > T{0})) gi[j] = T{0};
    }
    upstream = std::move(g.input);
  }
  return grads;
}

template <typename T>
ModelGrads<T> backward(const BasicSegModel<T>& model, const Tensor<T>& input,
                       const Tensor<T>& grad_logits) {
  return backward(model, forward_train(model, input), grad_logits);
}

template <typename T>
ModelGrads<T> zero_grads(const BasicSegModel<T>& model) {
  ModelGrads<T> g;
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    g[i].kernel = Tensor<T>(model.layers()[i].kernel.shape());
    g[i].bias = Tensor<T>(model.layers()[i].bias.shape());
  }
  return g;
}

template <typename T>
void accumulate(ModelGrads<T>& dst, const ModelGrads<T>& src, T scale) {
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    auto dk = dst[i].kernel.data();
    auto sk = src[i].kernel.data();
    if (dk.size() != sk.size()) throw ShapeError("accumulate: gradient shape mismatch");
    for (std::size_t j = 0; j < dk.size(); ++j) dk[j] += scale * sk[j];
    auto db = dst[i].bias.data();
    auto sb = src[i].bias.data();
    if (db.size() != sb.size()) throw ShapeError("accumulate: gradient shape mismatch");
    for (std::size_t j = 0; j < db.size(); ++j) db[j] += scale * sb[j];
  }
}

SegModel init_model(std::uint64_t seed, std::size_t classes) {
  SegModel model(classes);
  Rng rng(seed);
  for (auto& layer : model.layers()) {
    const auto& s = layer.kernel.shape();
    const double fan_in = static_cast<double>(s[1] * s[2] * s[3]);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (float& v : layer.kernel.data()) v = static_cast<float>(dist(rng));
  }
  return model;
}

OptimState make_optim_state(const SegModel& model, double base_lr, double power,
                            std::size_t max_iter, double momentum, double weight_decay) {
  if (max_iter == 0) throw ArgumentError("OptimState: max_iter must be positive");
  OptimState s;
  s.velocity = zero_grads(model);
  s.base_lr = base_lr;
  s.power = power;
  s.max_iter = max_iter;
  s.momentum = momentum;
  s.weight_decay = weight_decay;
  return s;
}

double poly_lr(const OptimState& state, std::size_t iter) {
  if (iter > state.max_iter) {
    throw ArgumentError("poly_lr: iter " + std::to_string(iter) + " exceeds max_iter " +
                        std::to_string(state.max_iter));
  }
  const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(state.max_iter);
  return state.base_lr * std::pow(frac, state.power);
}

void sgd_step(SegModel& model, const ModelGrads<float>& grads, OptimState& state,
              std::size_t iter) {
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    if (!all_finite(grads[i].kernel.data()) || !all_finite(grads[i].bias.data())) {
      throw NumericError("sgd_step: non-finite gradient in layer " + std::to_string(i) +
                         " at iteration " + std::to_string(iter));
    }
    if (grads[i].kernel.shape() != model.layers()[i].kernel.shape() ||
        grads[i].bias.shape() != model.layers()[i].bias.shape()) {
      throw ShapeError("sgd_step: gradient shape mismatch in layer " + std::to_string(i));
    }
  }
  const auto lr = static_cast<float>(poly_lr(state, iter));
  const auto mu = static_cast<float>(state.momentum);
  const auto wd = static_cast<float>(state.weight_decay);
  auto update = [&](Tensor<float>& param, const Tensor<float>& grad, Tensor<float>& vel) {
    auto p = param.data();
    auto g = grad.data();
    auto v = vel.data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = mu * v[j] + g[j] + wd * p[j];
      p[j] -= lr * v[j];
    }
  };
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    update(model.layers()[i].kernel, grads[i].kernel, state.velocity[i].kernel);
    update(model.layers()[i].bias, grads[i].bias, state.velocity[i].bias);
  }
  if (!model.finite()) {
    throw NumericError("sgd_step: parameters became non-finite at iteration " +
                       std::to_string(iter));
  }
}

// --- checkpoint IO -------------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic{'C', 'S', 'S', 'L'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    if (pos_ + 4 > bytes_.size()) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos_) +
                        " while reading " + what);
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const SegModel& model) {
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(model.classes()));
  put_u32(out, static_cast<std::uint32_t>(kLayerCount));
  for (const auto& layer : model.layers()) {
    for (std::size_t e : layer.kernel.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : layer.kernel.data()) put_f32(out, v);
    for (float v : layer.bias.data()) put_f32(out, v);
  }
  return out;
}

SegModel deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError("checkpoint: bad magic at byte 0 (expected \"CSSL\")");
  }
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) +
                      " at byte 4");
  }
  const std::uint32_t classes = r.u32("class count");
  const std::uint32_t layers = r.u32("layer count");
  if (layers != kLayerCount) {
    throw FormatError("checkpoint: expected " + std::to_string(kLayerCount) +
                      " layers, found " + std::to_string(layers) + " at byte 12");
  }
  if (classes < 2 || classes >= kIgnore) {
    throw FormatError("checkpoint: class count " + std::to_string(classes) +
                      " out of range at byte 8");
  }
  SegModel model(classes);
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    auto& layer = model.layers()[i];
    for (std::size_t a = 0; a < 4; ++a) {
      const std::size_t at = r.pos() + 4;
      const std::uint32_t e = r.u32("kernel extent");
      if (e != layer.kernel.extent(a)) {
        throw FormatError("checkpoint: layer " + std::to_string(i) + " extent " +
                          std::to_string(a) + " is " + std::to_string(e) + ", expected " +
                          std::to_string(layer.kernel.extent(a)) + " at byte " +
                          std::to_string(at));
      }
    }
    for (float& v : layer.kernel.data()) v = r.f32("kernel weights");
    for (float& v : layer.bias.data()) v = r.f32("bias");
  }
  if (!r.done()) {
    throw FormatError("checkpoint: trailing bytes after byte " + std::to_string(r.pos() + 4));
  }
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const SegModel& model) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

SegModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

template class BasicSegModel<float>;
template class BasicSegModel<double>;
template Tensor<float> to_input<float>(const Image&);
template Tensor<double> to_input<double>(const Image&);
template Tensor<float> forward(const BasicSegModel<float>&, const Tensor<float>&);
template Tensor<double> forward(const BasicSegModel<double>&, const Tensor<double>&);
template Activations<float> forward_train(const BasicSegModel<float>&, const Tensor<float>&);
template Activations<double> forward_train(const BasicSegModel<double>&, const Tensor<double>&);
template ModelGrads<float> backward(const BasicSegModel<float>&, const Activations<float>&,
                                    const Tensor<float>&);
template ModelGrads<double> backward(const BasicSegModel<double>&, const Activations<double>&,
                                     const Tensor<double>&);
template ModelGrads<float> backward(const BasicSegModel<float>&, const Tensor<float>&,
                                    const Tensor<float>&);
template ModelGrads<double> backward(const BasicSegModel<double>&, const Tensor<double>&,
                                     const Tensor<double>&);
template ModelGrads<float> zero_grads(const BasicSegModel<float>&);
template ModelGrads<double> zero_grads(const BasicSegModel<double>&);
template void accumulate(ModelGrads<float>&, const ModelGrads<float>&, float);
template void accumulate(ModelGrads<double>&, const ModelGrads<double>&, double);

}  // namespace cssl
