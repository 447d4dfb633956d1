#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "elr/tensor.hpp"

namespace elr {

// Dense kernels on raw row-major buffers. Each accumulates into c.
namespace gemm {
// c[m,n] += a[m,k] * b[k,n]
void nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
// c[m,n] += a[m,k] * b[n,k]^T
void nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
// c[m,n] += a[k,m]^T * b[k,n]
void tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
}  // namespace gemm

Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[N,F] + bias[F] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// scale * x + shift
Tensor affine(const Tensor& x, double scale, double shift);
Tensor scale(const Tensor& x, double factor);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor log(const Tensor& x);
// Gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor reshape(const Tensor& x, Shape shape);
// [N, ...] -> [N, prod(...)]
Tensor flatten(const Tensor& x);

// Row-wise softmax of [N,K] logits with max subtraction.
Tensor softmax(const Tensor& logits);
// Row-wise inner product of x[N,K] with a constant matrix of the same shape.
Tensor row_dot(const Tensor& x, std::span<const double> constant);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

// x[N,C,H,W] cross-correlated with kernel[F,C,kh,kw], zero padding.
Tensor conv2d(const Tensor& x, const Tensor& kernel, Conv2dOptions options = {});
std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& x);

enum class Mode { Train, Eval };

struct BatchNormState {
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}

  std::vector<double> running_mean;
  std::vector<double> running_var;
  bool initialized = false;
};

struct BatchNormOptions {
  Mode mode = Mode::Train;
  // Train mode only. Off for the perturbed pass of a sharpness-aware step.
  bool update_running_stats = true;
};

Tensor batch_norm_2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     BatchNormState& state, BatchNormOptions options = {});

}  // namespace elr
