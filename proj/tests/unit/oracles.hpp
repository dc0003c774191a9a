#pragma once

// Independent reference implementations used only by tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <cssl/tensor.hpp>

namespace oracle {

template <typename T>
cssl::Tensor<T> random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, double lo = -1.0,
                              double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  cssl::Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

// Quadruple loop over (oc, y, x, ic, ky, kx), zero padding.
template <typename T>
cssl::Tensor<T> naive_conv(const cssl::Tensor<T>& in, const cssl::Tensor<T>& k,
                           const cssl::Tensor<T>& b) {
  const long co = static_cast<long>(k.extent(0)), ci = static_cast<long>(k.extent(1));
  const long ks = static_cast<long>(k.extent(2)), r = ks / 2;
  const long h = static_cast<long>(in.extent(1)), w = static_cast<long>(in.extent(2));
  cssl::Tensor<T> out({k.extent(0), in.extent(1), in.extent(2)});
  for (long o = 0; o < co; ++o)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = static_cast<double>(b[static_cast<std::size_t>(o)]);
        for (long c = 0; c < ci; ++c)
          for (long dy = 0; dy < ks; ++dy)
            for (long dx = 0; dx < ks; ++dx) {
              const long yy = y + dy - r, xx = x + dx - r;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              acc += static_cast<double>(k[static_cast<std::size_t>(((o * ci + c) * ks + dy) * ks + dx)]) *
                     static_cast<double>(in[static_cast<std::size_t>((c * h + yy) * w + xx)]);
            }
        out[static_cast<std::size_t>((o * h + y) * w + x)] = static_cast<T>(acc);
      }
  return out;
}

inline double central_difference(const std::function<double()>& f, double& param, double h) {
  const double saved = param;
  param = saved + h;
  const double up = f();
  param = saved - h;
  const double down = f();
  param = saved;
  return (up - down) / (2.0 * h);
}

// max |a_i - b_i| / max |a_i|, the infinity-norm relative error of a whole
// gradient. Per-entry ratios are meaningless for entries near zero, where
// difference quotients carry only rounding noise.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return scale > 0.0 ? diff / scale : diff;
}

}  // namespace oracle
