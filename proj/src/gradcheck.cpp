#include "elr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "elr/errors.hpp"

namespace elr {

GradCheckResult check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                GradCheckOptions options) {
  if (!(options.step > 0.0)) throw ContractError("check_gradients: step must be positive");
  for (auto& p : params) p.zero_grad();
  backward(loss());

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  auto value = [&] {
    NoGradGuard no_grad;
    return loss().item();
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    std::vector<std::size_t> coords(w.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_param > 0 && coords.size() > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
    }
    for (auto c : coords) {
      const double saved = w[c];
      w[c] = saved + options.step;
      const double up = value();
      w[c] = saved - options.step;
      const double down = value();
      w[c] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[i][c];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
      ++result.coordinates;
    }
  }
  return result;
}

}  // namespace elr
