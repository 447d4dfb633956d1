#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "elr/tensor.hpp"

namespace elr {

/// Per-sample moving average of predicted class probabilities, indexed by
/// stable sample id. Starts at zero; each update is t <- beta*t + (1-beta)*p.
class TargetStore {
 public:
  TargetStore(std::size_t num_samples, std::size_t num_classes, double beta);

  std::size_t num_samples() const { return num_samples_; }
  std::size_t num_classes() const { return num_classes_; }
  double beta() const { return beta_; }

  std::span<const double> target(std::int64_t id) const;
  // Row-major [ids.size(), K] copy of the targets for ids.
  std::vector<double> gather(std::span<const std::int64_t> ids) const;

  // probs: [N, K] rows that are probability vectors.
  void update(std::span<const std::int64_t> ids, const Tensor& probs);

  std::span<const double> values() const { return targets_; }
  std::span<double> mutable_values() { return targets_; }

 private:
  std::size_t slot(std::int64_t id) const;

  std::size_t num_samples_;
  std::size_t num_classes_;
  double beta_;
  std::vector<double> targets_;
};

struct LossValue {
  Tensor total;  // differentiable
  double ce_part = 0.0;
  double elr_part = 0.0;
  double lambda = 0.0;
};

/// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// Keeps log(1 - <p,t>) finite when the inner product reaches 1.
inline constexpr double kElrClampEps = 1e-4;

/// Cross-entropy plus lambda * mean_i log(1 - <p_i, t_i>), p = softmax(logits)
/// and t read from the store. Targets are constants: no gradient reaches them.
/// With lambda == 0 the total is the cross-entropy tensor itself.
LossValue elr_loss(const Tensor& logits, std::span<const int> labels, const TargetStore& store,
                   std::span<const std::int64_t> ids, double lambda);

}  // namespace elr
