#include "elr/ops.hpp"

#include <algorithm>
#include <cmath>

#include "elr/errors.hpp"

namespace elr {

using detail::make_result;
using detail::Node;

namespace gemm {

void nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

void tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace gemm

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_to_string(x.shape()));
  }
}

// Grad buffer of input i, or nullptr when that input is not tracked.
double* input_grad(Node& self, std::size_t i) {
  auto& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  return in.ensure_grad().data();
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm::nn(m, k, n, a.data().data(), b.data().data(), out.data());
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* dc = self.grad.data();
    const auto& av = self.inputs[0]->data;
    const auto& bv = self.inputs[1]->data;
    if (auto* da = input_grad(self, 0)) gemm::nt(m, n, k, dc, bv.data(), da);
    if (auto* db = input_grad(self, 1)) gemm::tn(k, m, n, av.data(), dc, db);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad;
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* d = input_grad(self, k)) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad;
    const auto& av = self.inputs[0]->data;
    const auto& bv = self.inputs[1]->data;
    if (auto* da = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (auto* db = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", x, 2);
  if (bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw DimensionError("add_bias: bias " + shape_to_string(bias.shape()) +
                         " does not match rows of " + shape_to_string(x.shape()));
  }
  const auto rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  }
  return make_result("add_bias", x.shape(), std::move(out), {x, bias}, [rows, cols](Node& self) {
    const auto& g = self.grad;
    if (auto* dx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    }
    if (auto* db = input_grad(self, 1)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) db[c] += g[r * cols + c];
      }
    }
  });
}

Tensor affine(const Tensor& x, double factor, double shift) {
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * xv[i] + shift;
  return make_result("affine", x.shape(), std::move(out), {x}, [factor](Node& self) {
    const auto& g = self.grad;
    if (auto* dx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += factor * g[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) { return affine(x, factor, 0.0); }

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result("sum", {}, {acc}, {x}, [](Node& self) {
    const double g = self.grad[0];
    if (auto* dx = input_grad(self, 0)) {
      const auto n = self.inputs[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) dx[i] += g;
    }
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of an empty tensor");
  const double inv = 1.0 / static_cast<double>(x.numel());
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result("mean", {}, {acc * inv}, {x}, [inv](Node& self) {
    const double g = self.grad[0] * inv;
    if (auto* dx = input_grad(self, 0)) {
      const auto n = self.inputs[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) dx[i] += g;
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return make_result("relu", x.shape(), std::move(out), {x}, [](Node& self) {
    const auto& g = self.grad;
    const auto& xv = self.inputs[0]->data;
    if (auto* dx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xv[i] > 0.0) dx[i] += g[i];
      }
    }
  });
}

Tensor log(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(xv[i] > 0.0)) throw NumericalError("log of a non-positive value");
    out[i] = std::log(xv[i]);
  }
  return make_result("log", x.shape(), std::move(out), {x}, [](Node& self) {
    const auto& g = self.grad;
    const auto& xv = self.inputs[0]->data;
    if (auto* dx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] / xv[i];
    }
  });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(xv[i], lo, hi);
  return make_result("clamp", x.shape(), std::move(out), {x}, [lo, hi](Node& self) {
    const auto& g = self.grad;
    const auto& xv = self.inputs[0]->data;
    if (auto* dx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xv[i] > lo && xv[i] < hi) dx[i] += g[i];
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " +
                         shape_to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    const auto& g = self.grad;
    if (auto* dx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    }
  });
}

Tensor flatten(const Tensor& x) {
  if (x.rank() < 1) throw DimensionError("flatten of a scalar");
  const auto n = x.dim(0);
  return reshape(x, {n, n == 0 ? 0 : x.numel() / n});
}

Tensor softmax(const Tensor& logits) {
  require_rank("softmax", logits, 2);
  const auto rows = logits.dim(0), k = logits.dim(1);
  if (k < 2) throw DimensionError("softmax needs at least 2 classes");
  const auto z = logits.data();
  std::vector<double> out(z.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * k;
    double* pr = out.data() + r * k;
    const double mx = *std::max_element(zr, zr + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      pr[j] = std::exp(zr[j] - mx);
      denom += pr[j];
    }
    for (std::size_t j = 0; j < k; ++j) pr[j] /= denom;
  }
  auto probs = out;
  return make_result("softmax", logits.shape(), std::move(out), {logits},
                     [rows, k, probs = std::move(probs)](Node& self) {
                       auto* dz = input_grad(self, 0);
                       if (!dz) return;
                       const auto& g = self.grad;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* pr = probs.data() + r * k;
                         const double* gr = g.data() + r * k;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < k; ++j) dot += gr[j] * pr[j];
                         for (std::size_t j = 0; j < k; ++j) dz[r * k + j] += pr[j] * (gr[j] - dot);
                       }
                     });
}

Tensor row_dot(const Tensor& x, std::span<const double> constant) {
  require_rank("row_dot", x, 2);
  if (constant.size() != x.numel()) {
    throw DimensionError("row_dot: constant of " + std::to_string(constant.size()) +
                         " values against " + shape_to_string(x.shape()));
  }
  const auto rows = x.dim(0), k = x.dim(1);
  std::vector<double> out(rows, 0.0);
  const auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < k; ++j) out[r] += xv[r * k + j] * constant[r * k + j];
  }
  std::vector<double> c(constant.begin(), constant.end());
  return make_result("row_dot", {rows}, std::move(out), {x}, [rows, k, c = std::move(c)](Node& self) {
    auto* dx = input_grad(self, 0);
    if (!dx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < k; ++j) dx[r * k + j] += self.grad[r] * c[r * k + j];
    }
  });
}

std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, stride, pad, ho, wo;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return ho * wo; }
};

// cols[(ci*kh+i)*kw+j, oy*wo+ox] = x[ci, oy*s+i-p, ox*s+j-p]
void im2col(const ConvGeometry& g, const double* x, double* cols) {
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((ci * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                          static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                            static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                ix < static_cast<std::ptrdiff_t>(g.w);
            row[oy * g.wo + ox] = inside ? x[(ci * g.h + iy) * g.w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* cols, double* dx) {
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((ci * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dx[(ci * g.h + iy) * g.w + ix] += row[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, Conv2dOptions options) {
  require_rank("conv2d input", x, 4);
  require_rank("conv2d kernel", kernel, 4);
  if (options.stride < 1) throw DimensionError("conv2d: stride must be at least 1");
  ConvGeometry g{};
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.f = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = options.stride;
  g.pad = options.pad;
  if (kernel.dim(1) != g.c) {
    throw DimensionError("conv2d: kernel " + shape_to_string(kernel.shape()) +
                         " does not match input channels of " + shape_to_string(x.shape()));
  }
  if (g.kh > g.h + 2 * g.pad || g.kw > g.w + 2 * g.pad) {
    throw DimensionError("conv2d: kernel " + shape_to_string(kernel.shape()) +
                         " larger than padded input " + shape_to_string(x.shape()));
  }
  g.ho = conv_output_extent(g.h, g.kh, g.stride, g.pad);
  g.wo = conv_output_extent(g.w, g.kw, g.stride, g.pad);

  const std::size_t in_stride = g.c * g.h * g.w;
  const std::size_t out_stride = g.f * g.pixels();
  std::vector<double> out(g.n * out_stride, 0.0);
  std::vector<double> cols(g.patch() * g.pixels());
  const double* xv = x.data().data();
  const double* kv = kernel.data().data();
  for (std::size_t s = 0; s < g.n; ++s) {
    im2col(g, xv + s * in_stride, cols.data());
    gemm::nn(g.f, g.patch(), g.pixels(), kv, cols.data(), out.data() + s * out_stride);
  }
  return make_result(
      "conv2d", {g.n, g.f, g.ho, g.wo}, std::move(out), {x, kernel}, [g](Node& self) {
        const double* xv = self.inputs[0]->data.data();
        const double* kv = self.inputs[1]->data.data();
        double* dx = input_grad(self, 0);
        double* dk = input_grad(self, 1);
        const std::size_t in_stride = g.c * g.h * g.w;
        const std::size_t out_stride = g.f * g.pixels();
        std::vector<double> cols(g.patch() * g.pixels());
        for (std::size_t s = 0; s < g.n; ++s) {
          const double* dout = self.grad.data() + s * out_stride;
          if (dk) {
            im2col(g, xv + s * in_stride, cols.data());
            gemm::nt(g.f, g.pixels(), g.patch(), dout, cols.data(), dk);
          }
          if (dx) {
            std::fill(cols.begin(), cols.end(), 0.0);
            gemm::tn(g.patch(), g.f, g.pixels(), kv, dout, cols.data());
            col2im(g, cols.data(), dx + s * in_stride);
          }
        }
      });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank("global_avg_pool", x, 4);
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const double inv = 1.0 / static_cast<double>(hw);
  std::vector<double> out(n * c, 0.0);
  const auto xv = x.data();
  for (std::size_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < hw; ++p) acc += xv[i * hw + p];
    out[i] = acc * inv;
  }
  return make_result("global_avg_pool", {n, c}, std::move(out), {x}, [n, c, hw, inv](Node& self) {
    auto* dx = input_grad(self, 0);
    if (!dx) return;
    for (std::size_t i = 0; i < n * c; ++i) {
      const double g = self.grad[i] * inv;
      for (std::size_t p = 0; p < hw; ++p) dx[i * hw + p] += g;
    }
  });
}

Tensor batch_norm_2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     BatchNormState& state, BatchNormOptions options) {
  require_rank("batch_norm_2d", x, 4);
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw DimensionError("batch_norm_2d: affine parameters must have shape [" +
                         std::to_string(c) + "]");
  }
  if (state.running_mean.size() != c || state.running_var.size() != c) {
    throw DimensionError("batch_norm_2d: running statistics sized for " +
                         std::to_string(state.running_mean.size()) + " channels, input has " +
                         std::to_string(c));
  }
  const std::size_t count = n * hw;
  const bool train = options.mode == Mode::Train;
  if (train && count < 2) {
    throw DimensionError("batch_norm_2d: train mode needs at least 2 values per channel");
  }
  if (!train && !state.initialized) {
    throw StateError("batch_norm_2d: eval mode before running statistics were initialized");
  }

  const auto xv = x.data();
  const auto gv = gamma.data(), bv = beta.data();
  std::vector<double> mu(c), inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (train) {
      double s = 0.0;
      for (std::size_t s_i = 0; s_i < n; ++s_i) {
        const double* p = xv.data() + (s_i * c + ch) * hw;
        for (std::size_t q = 0; q < hw; ++q) s += p[q];
      }
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t s_i = 0; s_i < n; ++s_i) {
        const double* p = xv.data() + (s_i * c + ch) * hw;
        for (std::size_t q = 0; q < hw; ++q) ss += (p[q] - m) * (p[q] - m);
      }
      const double var = ss / static_cast<double>(count);
      mu[ch] = m;
      inv_std[ch] = 1.0 / std::sqrt(var + BatchNormState::kEps);
      if (options.update_running_stats) {
        const double unbiased = ss / static_cast<double>(count - 1);
        const double mom = BatchNormState::kMomentum;
        state.running_mean[ch] = (1.0 - mom) * state.running_mean[ch] + mom * m;
        state.running_var[ch] = (1.0 - mom) * state.running_var[ch] + mom * unbiased;
      }
    } else {
      mu[ch] = state.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(state.running_var[ch] + BatchNormState::kEps);
    }
  }
  if (train && options.update_running_stats) state.initialized = true;

  std::vector<double> xhat(xv.size());
  std::vector<double> out(xv.size());
  for (std::size_t s_i = 0; s_i < n; ++s_i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s_i * c + ch) * hw;
      for (std::size_t q = 0; q < hw; ++q) {
        xhat[base + q] = (xv[base + q] - mu[ch]) * inv_std[ch];
        out[base + q] = gv[ch] * xhat[base + q] + bv[ch];
      }
    }
  }
  return make_result(
      "batch_norm_2d", x.shape(), std::move(out), {x, gamma, beta},
      [n, c, hw, count, train, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node& self) {
        const auto& g = self.grad;
        const auto& gv = self.inputs[1]->data;
        double* dx = input_grad(self, 0);
        double* dgamma = input_grad(self, 1);
        double* dbeta = input_grad(self, 2);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t s_i = 0; s_i < n; ++s_i) {
            const std::size_t base = (s_i * c + ch) * hw;
            for (std::size_t q = 0; q < hw; ++q) {
              sum_g += g[base + q];
              sum_gx += g[base + q] * xhat[base + q];
            }
          }
          if (dgamma) dgamma[ch] += sum_gx;
          if (dbeta) dbeta[ch] += sum_g;
          if (!dx) continue;
          const double k = gv[ch] * inv_std[ch];
          const double inv_m = 1.0 / static_cast<double>(count);
          for (std::size_t s_i = 0; s_i < n; ++s_i) {
            const std::size_t base = (s_i * c + ch) * hw;
            for (std::size_t q = 0; q < hw; ++q) {
              if (train) {
                dx[base + q] +=
                    k * (g[base + q] - inv_m * sum_g - xhat[base + q] * inv_m * sum_gx);
              } else {
                dx[base + q] += k * g[base + q];
              }
            }
          }
        }
      });
}

}  // namespace elr
