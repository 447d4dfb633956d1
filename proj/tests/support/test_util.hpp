#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "elr/tensor.hpp"

namespace elr::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<int> random_labels(std::size_t n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(0, classes - 1);
  std::vector<int> out(n);
  for (auto& y : out) y = dist(rng);
  return out;
}

inline double min_abs(const Tensor& t) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : t.data()) m = std::min(m, std::abs(v));
  return m;
}

// Naive direct cross-correlation with zero padding, independent of im2col.
inline std::vector<double> naive_conv2d(const Tensor& x, const Tensor& k, std::size_t stride,
                                        std::size_t pad) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto f = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const auto ho = (h + 2 * pad - kh) / stride + 1;
  const auto wo = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(n * f * ho * wo, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < f; ++o)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long iy = static_cast<long>(oy * stride + i) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + j) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                  continue;
                acc += x[((s * c + ci) * h + iy) * w + ix] * k[((o * c + ci) * kh + i) * kw + j];
              }
          out[((s * f + o) * ho + oy) * wo + ox] = acc;
        }
  return out;
}

}  // namespace elr::testing
