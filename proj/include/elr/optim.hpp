#pragma once

#include <functional>
#include <vector>

#include "elr/tensor.hpp"

namespace elr {

struct SgdSettings {
  double momentum = 0.9;
  double weight_decay = 1e-3;
  // Sharpness-aware radius; 0 disables the perturbation pass.
  double sam_rho = 0.0;
};

/// Momentum buffers for a fixed parameter list, plus the saved weights of a
/// sharpness-aware step while it is in flight.
class OptimizerState {
 public:
  OptimizerState(std::vector<Tensor> params, SgdSettings settings);

  const SgdSettings& settings() const { return settings_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<std::vector<double>>& momentum_buffers() const { return velocity_; }
  bool sam_in_flight() const { return !sam_scratch_.empty(); }

  void zero_grad();

 private:
  friend void sgd_step(OptimizerState& state, double lr);
  friend double sam_step(const std::function<Tensor(bool)>& loss_fn, OptimizerState& state,
                         double lr);

  std::vector<Tensor> params_;
  SgdSettings settings_;
  std::vector<std::vector<double>> velocity_;
  std::vector<std::vector<double>> sam_scratch_;
};

/// g' = g + wd*w; v <- mu*v + g'; w <- w - lr*v. Reads the grads stored on
/// the parameters.
void sgd_step(OptimizerState& state, double lr);

/// Global L2 norm of the current parameter gradients.
double grad_norm(const std::vector<Tensor>& params);

/// Two-pass sharpness-aware step. loss_fn(first_pass) builds the loss; it is
/// called with true at the current weights and with false at the perturbed
/// weights w + rho*g/|g|. The update uses the second gradient applied at the
/// original weights. With rho == 0 or |g| < 1e-12 this is a plain sgd_step on
/// the first gradient. Returns the first-pass loss value.
double sam_step(const std::function<Tensor(bool)>& loss_fn, OptimizerState& state, double lr);

inline constexpr double kSamMinGradNorm = 1e-12;

}  // namespace elr
