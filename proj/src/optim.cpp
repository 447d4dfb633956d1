#include "elr/optim.hpp"

#include <algorithm>
#include <cmath>

#include "elr/errors.hpp"

namespace elr {

OptimizerState::OptimizerState(std::vector<Tensor> params, SgdSettings settings)
    : params_(std::move(params)), settings_(settings) {
  if (settings_.momentum < 0.0 || settings_.weight_decay < 0.0 || settings_.sam_rho < 0.0) {
    throw ContractError("optimizer: momentum, weight decay and rho must be non-negative");
  }
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.numel(), 0.0);
}

void OptimizerState::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void sgd_step(OptimizerState& state, double lr) {
  if (!(lr > 0.0)) throw ContractError("sgd_step: learning rate must be positive");
  const double mu = state.settings_.momentum;
  const double wd = state.settings_.weight_decay;
  for (std::size_t i = 0; i < state.params_.size(); ++i) {
    auto& p = state.params_[i];
    if (!p.has_grad()) {
      throw ContractError("sgd_step: parameter " + std::to_string(i) + " has no gradient");
    }
    auto w = p.mutable_data();
    const auto g = p.grad();
    auto& v = state.velocity_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = mu * v[j] + (g[j] + wd * w[j]);
      w[j] -= lr * v[j];
    }
  }
}

double grad_norm(const std::vector<Tensor>& params) {
  double ss = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) ss += g * g;
  }
  return std::sqrt(ss);
}

double sam_step(const std::function<Tensor(bool)>& loss_fn, OptimizerState& state, double lr) {
  if (state.sam_in_flight()) throw StateError("sam_step: previous step did not finish");
  auto evaluate = [&](bool first_pass) {
    state.zero_grad();
    auto loss = loss_fn(first_pass);
    if (!loss.defined() || loss.numel() != 1) {
      throw ContractError("sam_step: loss function must return a scalar");
    }
    backward(loss);
    return loss.item();
  };

  const double loss = evaluate(true);
  const double rho = state.settings_.sam_rho;
  const double norm = grad_norm(state.params_);
  if (rho == 0.0 || norm < kSamMinGradNorm) {
    sgd_step(state, lr);
    return loss;
  }

  const double step = rho / norm;
  state.sam_scratch_.reserve(state.params_.size());
  for (auto& p : state.params_) {
    auto w = p.mutable_data();
    state.sam_scratch_.emplace_back(w.begin(), w.end());
    const auto g = p.grad();
    for (std::size_t j = 0; j < w.size(); ++j) w[j] += step * g[j];
  }

  auto restore = [&state] {
    for (std::size_t i = 0; i < state.params_.size(); ++i) {
      auto w = state.params_[i].mutable_data();
      std::copy(state.sam_scratch_[i].begin(), state.sam_scratch_[i].end(), w.begin());
    }
    state.sam_scratch_.clear();
  };
  try {
    evaluate(false);
  } catch (...) {
    restore();
    throw;
  }
  restore();
  sgd_step(state, lr);
  return loss;
}

}  // namespace elr
