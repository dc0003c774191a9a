#include "cssl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace cssl {

namespace {

template <typename T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& kernel) {
  if (input.rank() != 3) {
    throw ShapeError("conv2d: input must be [C,H,W], got " +
                     Tensor<T>::shape_string(input.shape()));
  }
  if (kernel.rank() != 4 || kernel.extent(2) != kernel.extent(3)) {
    throw ShapeError("conv2d: kernel must be [Cout,Cin,k,k], got " +
                     Tensor<T>::shape_string(kernel.shape()));
  }
  if (kernel.extent(2) % 2 == 0) {
    throw ShapeError("conv2d: kernel size must be odd, got " +
                     std::to_string(kernel.extent(2)));
  }
  if (kernel.extent(1) != input.extent(0)) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.extent(1)) +
                     " input channels, input has " + std::to_string(input.extent(0)));
  }
}

// dst[x] += w * src[x] over a contiguous run.
template <typename T>
inline void axpy_row(T* __restrict dst, const T* __restrict src, T w, std::size_t n) {
  for (std::size_t x = 0; x < n; ++x) dst[x] += w * src[x];
}

// Maps an arbitrary integer index into [0, n) by half-sample symmetric reflection.
std::size_t reflect_index(long i, long n) {
  const long period = 2 * n;
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < n ? m : period - 1 - m);
}

}  // namespace

// Zero-padded planes: each channel is (H + 2r) rows of `stride` values, where
// stride >= W + 2r is a multiple of the vector width. Trailing slack lets
// vector loads run past the last row.
template <typename T>
struct PaddedPlanes {
  static constexpr std::size_t kLanes = 64 / sizeof(T);

  std::size_t channels = 0, height = 0, width = 0, radius = 0, rows = 0, stride = 0;
  std::vector<T> data;

  PaddedPlanes(const T* src, std::size_t c, std::size_t h, std::size_t w, std::size_t r)
      : channels(c), height(h), width(w), radius(r), rows(h + 2 * r),
        stride((w + 2 * r + kLanes - 1) / kLanes * kLanes),
        data(c * rows * stride + 2 * kLanes + 2 * r * stride, T{0}) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        std::copy_n(src + (ch * h + y) * w, w, plane(ch) + (y + r) * stride + r);
      }
    }
  }

  T* plane(std::size_t ch) noexcept { return data.data() + ch * rows * stride; }
  const T* plane(std::size_t ch) const noexcept { return data.data() + ch * rows * stride; }
};

// One 64-byte register of T. Loads go through memcpy since rows are unaligned.
template <typename T>
struct LaneOf;
template <>
struct LaneOf<float> {
  typedef float type __attribute__((vector_size(64)));
};
template <>
struct LaneOf<double> {
  typedef double type __attribute__((vector_size(64)));
};
template <typename T>
using Lane = typename LaneOf<T>::type;

template <typename T>
inline Lane<T> load_lane(const T* p) noexcept {
  Lane<T> v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

// Computes OCB output channels at once. `taps` is packed [cin][k][k][OCB].
template <typename T, std::size_t OCB>
void conv_block(const PaddedPlanes<T>& in, const T* taps, const T* bias, std::size_t k,
                T* out) {
  constexpr std::size_t V = PaddedPlanes<T>::kLanes;
  const std::size_t h = in.height, w = in.width, stride = in.stride;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x0 = 0; x0 < w; x0 += V) {
      Lane<T> acc[OCB];
      for (std::size_t o = 0; o < OCB; ++o) acc[o] = Lane<T>{} + bias[o];
      const T* wp = taps;
      for (std::size_t ic = 0; ic < in.channels; ++ic) {
        const T* base = in.plane(ic) + y * stride + x0;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx, wp += OCB) {
            const Lane<T> src = load_lane(base + ky * stride + kx);
#pragma GCC unroll 16
            for (std::size_t o = 0; o < OCB; ++o) acc[o] += wp[o] * src;
          }
        }
      }
      const std::size_t n = std::min(V, w - x0);
      for (std::size_t o = 0; o < OCB; ++o) {
        std::memcpy(out + (o * h + y) * w + x0, &acc[o], n * sizeof(T));
      }
    }
  }
}

// sums[o][j] = sum over valid pixels of grad[o] * src[j], where grad planes
// have stride in.stride and src is the (ky, kx0) shifted view of a padded plane.
template <typename T, std::size_t OB, std::size_t KB>
void kernel_grad_block(const T* grad, std::size_t grad_plane, const T* src,
                       const PaddedPlanes<T>& in, T (&sums)[OB][KB]) {
  constexpr std::size_t V = PaddedPlanes<T>::kLanes;
  Lane<T> acc[OB][KB] = {};
  for (std::size_t y = 0; y < in.height; ++y) {
    for (std::size_t x0 = 0; x0 < in.width; x0 += V) {
      const std::size_t off = y * in.stride + x0;
      Lane<T> s[KB];
      for (std::size_t j = 0; j < KB; ++j) s[j] = load_lane(src + off + j);
      for (std::size_t o = 0; o < OB; ++o) {
        const Lane<T> gv = load_lane(grad + o * grad_plane + off);
        for (std::size_t j = 0; j < KB; ++j) acc[o][j] += gv * s[j];
      }
    }
  }
  for (std::size_t o = 0; o < OB; ++o) {
    for (std::size_t j = 0; j < KB; ++j) {
      T sum{0};
      for (std::size_t v = 0; v < V; ++v) sum += acc[o][j][v];
      sums[o][j] = sum;
    }
  }
}

// Correlates padded input with kernel(oc, ic, ky, kx) into out [cout, H, W].
template <typename T, typename KernelAt>
void conv_padded(const PaddedPlanes<T>& in, std::size_t cout, std::size_t k, KernelAt kernel_at,
                 const T* bias, T* out) {
  const std::size_t plane = in.height * in.width;
  std::vector<T> packed;
  std::size_t oc0 = 0;
  auto run = [&]<std::size_t OCB>() {
    packed.assign(in.channels * k * k * OCB, T{0});
    std::size_t i = 0;
    for (std::size_t ic = 0; ic < in.channels; ++ic) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          for (std::size_t o = 0; o < OCB; ++o) packed[i++] = kernel_at(oc0 + o, ic, ky, kx);
        }
      }
    }
    conv_block<T, OCB>(in, packed.data(), bias + oc0, k, out + oc0 * plane);
    oc0 += OCB;
  };
  while (cout - oc0 >= 16) run.template operator()<16>();
  if (cout - oc0 >= 8) run.template operator()<8>();
  if (cout - oc0 >= 4) run.template operator()<4>();
  if (cout - oc0 >= 2) run.template operator()<2>();
  if (cout - oc0 >= 1) run.template operator()<1>();
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
  check_conv_shapes(input, kernel);
  const std::size_t cout = kernel.extent(0);
  const std::size_t cin = kernel.extent(1);
  const std::size_t k = kernel.extent(2);
  const std::size_t height = input.extent(1);
  const std::size_t width = input.extent(2);
  if (bias.rank() != 1 || bias.extent(0) != cout) {
    throw ShapeError("conv2d: bias must be [" + std::to_string(cout) + "], got " +
                     Tensor<T>::shape_string(bias.shape()));
  }
  const PaddedPlanes<T> padded(input.raw(), cin, height, width, k / 2);
  Tensor<T> out({cout, height, width});
  const T* kern = kernel.raw();
  conv_padded(
      padded, cout, k,
      [&](std::size_t oc, std::size_t ic, std::size_t ky, std::size_t kx) {
        return kern[((oc * cin + ic) * k + ky) * k + kx];
      },
      bias.raw(), out.raw());
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                             const Tensor<T>& kernel) {
  check_conv_shapes(input, kernel);
  const std::size_t cout = kernel.extent(0);
  const std::size_t cin = kernel.extent(1);
  const std::size_t k = kernel.extent(2);
  const std::size_t height = input.extent(1);
  const std::size_t width = input.extent(2);
  if (grad_out.shape() != typename Tensor<T>::Shape{cout, height, width}) {
    throw ShapeError("conv2d_backward: grad_out must be " +
                     Tensor<T>::shape_string({cout, height, width}) + ", got " +
                     Tensor<T>::shape_string(grad_out.shape()));
  }
  const std::size_t r = k / 2;
  const std::size_t plane = height * width;
  ConvGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(kernel.shape()), Tensor<T>({cout})};

  for (std::size_t oc = 0; oc < cout; ++oc) {
    const T* gp = grad_out.raw() + oc * plane;
    g.bias[oc] = std::accumulate(gp, gp + plane, T{0});
  }

  // Input gradient: correlation of grad_out with the flipped, transposed kernel.
  const PaddedPlanes<T> gpad(grad_out.raw(), cout, height, width, r);
  const std::vector<T> zero_bias(cin, T{0});
  const T* kern = kernel.raw();
  conv_padded(
      gpad, cin, k,
      [&](std::size_t ic, std::size_t oc, std::size_t ky, std::size_t kx) {
        return kern[((oc * cin + ic) * k + (k - 1 - ky)) * k + (k - 1 - kx)];
      },
      zero_bias.data(), g.input.raw());

  // Kernel gradient. grad_out is copied to the padded stride with zero columns
  // beyond W so partial lanes contribute nothing.
  const PaddedPlanes<T> in(input.raw(), cin, height, width, r);
  const std::size_t stride = in.stride;
  std::vector<T> gflat(cout * height * stride + PaddedPlanes<T>::kLanes, T{0});
  for (std::size_t oc = 0; oc < cout; ++oc) {
    for (std::size_t y = 0; y < height; ++y) {
      std::copy_n(grad_out.raw() + oc * plane + y * width, width,
                  gflat.data() + (oc * height + y) * stride);
    }
  }
  const std::size_t len = height * stride;
  T* gk = g.kernel.raw();
  std::size_t oc0 = 0;
  auto run = [&]<std::size_t OB>() {
    for (std::size_t ic = 0; ic < cin; ++ic) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        std::size_t kx0 = 0;
        auto taps = [&]<std::size_t KB>() {
          T sums[OB][KB];
          kernel_grad_block<T, OB, KB>(gflat.data() + oc0 * len, len,
                                       in.plane(ic) + ky * stride + kx0, in, sums);
          for (std::size_t o = 0; o < OB; ++o) {
            for (std::size_t j = 0; j < KB; ++j) {
              gk[(((oc0 + o) * cin + ic) * k + ky) * k + kx0 + j] = sums[o][j];
            }
          }
          kx0 += KB;
        };
        while (k - kx0 >= 3) taps.template operator()<3>();
        if (k - kx0 >= 2) taps.template operator()<2>();
        if (k - kx0 >= 1) taps.template operator()<1>();
      }
    }
    oc0 += OB;
  };
  while (cout - oc0 >= 4) run.template operator()<4>();
  while (cout - oc0 >= 1) run.template operator()<1>();
  return g;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ArgumentError("gaussian_kernel: sigma must be positive, got " +
                        std::to_string(sigma));
  }
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    taps[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : taps) v /= sum;
  return taps;
}

TensorF gaussian_filter(const TensorF& field, double sigma) {
  if (field.rank() != 2) {
    throw ShapeError("gaussian_filter: field must be [H,W], got " +
                     TensorF::shape_string(field.shape()));
  }
  const std::vector<double> taps = gaussian_kernel(sigma);
  const long radius = static_cast<long>(taps.size() / 2);
  const long h = static_cast<long>(field.extent(0));
  const long w = static_cast<long>(field.extent(1));

  // Horizontal pass into a double buffer, then vertical pass back to float.
  std::vector<double> tmp(static_cast<std::size_t>(h * w), 0.0);
  std::vector<std::size_t> xmap(taps.size());
  for (long x = 0; x < w; ++x) {
    for (long t = -radius; t <= radius; ++t) {
      xmap[static_cast<std::size_t>(t + radius)] = reflect_index(x + t, w);
    }
    for (long y = 0; y < h; ++y) {
      const float* row = field.raw() + y * w;
      double acc = 0.0;
      for (std::size_t t = 0; t < taps.size(); ++t) acc += taps[t] * row[xmap[t]];
      tmp[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  TensorF out(field.shape());
  std::vector<double> acc(static_cast<std::size_t>(w));
  for (long y = 0; y < h; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (long t = -radius; t <= radius; ++t) {
      const double tap = taps[static_cast<std::size_t>(t + radius)];
      const double* src = tmp.data() + reflect_index(y + t, h) * static_cast<std::size_t>(w);
      axpy_row(acc.data(), src, tap, static_cast<std::size_t>(w));
    }
    for (long x = 0; x < w; ++x) out[static_cast<std::size_t>(y * w + x)] = static_cast<float>(acc[x]);
  }
  return out;
}

template <typename T>
Tensor<T> softmax_channel(const Tensor<T>& logits) {
  if (logits.rank() != 3 || logits.extent(0) < 2) {
    throw ShapeError("softmax_channel: expected [K,H,W] with K >= 2, got " +
                     Tensor<T>::shape_string(logits.shape()));
  }
  const std::size_t classes = logits.extent(0);
  const std::size_t plane = logits.extent(1) * logits.extent(2);
  Tensor<T> out(logits.shape());
  std::vector<T> peak(logits.raw(), logits.raw() + plane);
  for (std::size_t c = 1; c < classes; ++c) {
    const T* src = logits.raw() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) peak[i] = std::max(peak[i], src[i]);
  }
  std::vector<T> total(plane, T{0});
  for (std::size_t c = 0; c < classes; ++c) {
    const T* src = logits.raw() + c * plane;
    T* dst = out.raw() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = std::exp(src[i] - peak[i]);
      total[i] += dst[i];
    }
  }
  for (std::size_t i = 0; i < plane; ++i) total[i] = T{1} / total[i];
  for (std::size_t c = 0; c < classes; ++c) {
    T* dst = out.raw() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] *= total[i];
  }
  return out;
}

template <typename T>
LabelMask argmax_channel(const Tensor<T>& scores) {
  if (scores.rank() != 3 || scores.extent(0) < 2) {
    throw ShapeError("argmax_channel: expected [K,H,W] with K >= 2, got " +
                     Tensor<T>::shape_string(scores.shape()));
  }
  if (scores.extent(0) > kIgnore) {
    throw ShapeError("argmax_channel: class count exceeds label range");
  }
  const std::size_t classes = scores.extent(0);
  const std::size_t plane = scores.extent(1) * scores.extent(2);
  LabelMask mask(scores.extent(1), scores.extent(2), 0);
  std::vector<T> best(scores.raw(), scores.raw() + plane);
  for (std::size_t c = 1; c < classes; ++c) {
    const T* src = scores.raw() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      if (src[i] > best[i]) {
        best[i] = src[i];
        mask[i] = static_cast<std::uint8_t>(c);
      }
    }
  }
  return mask;
}

template <typename T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

Image hflip(const Image& image) {
  Image out(image.height(), image.width());
  const std::size_t w = image.width();
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < Image::kChannels; ++c) {
        out.at(y, x, c) = image.at(y, w - 1 - x, c);
      }
    }
  }
  return out;
}

LabelMask hflip(const LabelMask& mask) {
  LabelMask out(mask.height(), mask.width());
  const std::size_t w = mask.width();
  for (std::size_t y = 0; y < mask.height(); ++y) {
    for (std::size_t x = 0; x < w; ++x) out.at(y, x) = mask.at(y, w - 1 - x);
  }
  return out;
}

template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&,
                               const Tensor<double>&);
template ConvGrads<float> conv2d_backward(const Tensor<float>&, const Tensor<float>&,
                                          const Tensor<float>&);
template ConvGrads<double> conv2d_backward(const Tensor<double>&, const Tensor<double>&,
                                           const Tensor<double>&);
template Tensor<float> softmax_channel(const Tensor<float>&);
template Tensor<double> softmax_channel(const Tensor<double>&);
template LabelMask argmax_channel(const Tensor<float>&);
template LabelMask argmax_channel(const Tensor<double>&);
template bool all_finite(std::span<const float>);
template bool all_finite(std::span<const double>);

}  // namespace cssl
