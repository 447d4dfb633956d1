#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "elr/tensor.hpp"

namespace elr {

struct GradCheckOptions {
  double step = 1e-3;
  std::uint64_t seed = 0;
  // Check this many randomly chosen coordinates per parameter; 0 checks all.
  std::size_t max_coords_per_param = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

/// Compares autodiff gradients of loss() with central differences
/// (f(x+h) - f(x-h)) / 2h over the entries of params. The relative error of a
/// coordinate is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                GradCheckOptions options = {});

}  // namespace elr
