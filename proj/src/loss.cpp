#include "elr/loss.hpp"

#include <algorithm>
#include <cmath>

#include "elr/errors.hpp"
#include "elr/ops.hpp"

namespace elr {

TargetStore::TargetStore(std::size_t num_samples, std::size_t num_classes, double beta)
    : num_samples_(num_samples),
      num_classes_(num_classes),
      beta_(beta),
      targets_(num_samples * num_classes, 0.0) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ContractError("target store: beta must lie in [0,1]");
  if (num_classes < 2) throw ContractError("target store: need at least 2 classes");
}

std::size_t TargetStore::slot(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= num_samples_) {
    throw ContractError("target store: unknown sample id " + std::to_string(id));
  }
  return static_cast<std::size_t>(id) * num_classes_;
}

std::span<const double> TargetStore::target(std::int64_t id) const {
  return std::span<const double>(targets_).subspan(slot(id), num_classes_);
}

std::vector<double> TargetStore::gather(std::span<const std::int64_t> ids) const {
  std::vector<double> out;
  out.reserve(ids.size() * num_classes_);
  for (auto id : ids) {
    const auto t = target(id);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

void TargetStore::update(std::span<const std::int64_t> ids, const Tensor& probs) {
  if (probs.rank() != 2 || probs.dim(0) != ids.size() || probs.dim(1) != num_classes_) {
    throw DimensionError("target store: probabilities " + shape_to_string(probs.shape()) +
                         " do not match " + std::to_string(ids.size()) + " ids of " +
                         std::to_string(num_classes_) + " classes");
  }
  const auto p = probs.data();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < num_classes_; ++j) {
      const double v = p[r * num_classes_ + j];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ContractError("target store: row " + std::to_string(r) + " is not a distribution");
      }
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) {
      throw ContractError("target store: row " + std::to_string(r) + " sums to " +
                          std::to_string(s));
    }
  }
  for (std::size_t r = 0; r < ids.size(); ++r) {
    double* t = targets_.data() + slot(ids[r]);
    for (std::size_t j = 0; j < num_classes_; ++j) {
      t[j] = beta_ * t[j] + (1.0 - beta_) * p[r * num_classes_ + j];
    }
  }
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || logits.dim(0) == 0) {
    throw DimensionError("cross_entropy: logits " + shape_to_string(logits.shape()) +
                         " against " + std::to_string(labels.size()) + " labels");
  }
  const auto rows = logits.dim(0), k = logits.dim(1);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0," +
                          std::to_string(k) + ")");
    }
  }
  const auto z = logits.data();
  std::vector<double> probs(z.size());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * k;
    const double mx = *std::max_element(zr, zr + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      probs[r * k + j] = std::exp(zr[j] - mx);
      denom += probs[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] /= denom;
    total += mx + std::log(denom) - zr[labels[r]];
  }
  const double inv_n = 1.0 / static_cast<double>(rows);
  std::vector<int> y(labels.begin(), labels.end());
  return detail::make_result(
      "cross_entropy", {}, {total * inv_n}, {logits},
      [rows, k, inv_n, probs = std::move(probs), y = std::move(y)](detail::Node& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        auto& dz = in.ensure_grad();
        const double g = self.grad[0] * inv_n;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < k; ++j) {
            const double onehot = static_cast<std::size_t>(y[r]) == j ? 1.0 : 0.0;
            dz[r * k + j] += g * (probs[r * k + j] - onehot);
          }
        }
      });
}

LossValue elr_loss(const Tensor& logits, std::span<const int> labels, const TargetStore& store,
                   std::span<const std::int64_t> ids, double lambda) {
  if (lambda < 0.0) throw ContractError("elr_loss: lambda must be non-negative");
  if (ids.size() != labels.size()) {
    throw DimensionError("elr_loss: " + std::to_string(ids.size()) + " ids for " +
                         std::to_string(labels.size()) + " labels");
  }
  LossValue out;
  out.lambda = lambda;
  auto ce = cross_entropy(logits, labels);
  out.ce_part = ce.item();
  const auto targets = store.gather(ids);

  auto regularizer = [&](const Tensor& z) {
    auto inner = clamp(row_dot(softmax(z), targets), 0.0, 1.0 - kElrClampEps);
    return mean(log(affine(inner, -1.0, 1.0)));
  };

  if (lambda == 0.0) {
    NoGradGuard no_grad;
    out.elr_part = regularizer(logits).item();
    out.total = ce;
    return out;
  }
  auto elr = regularizer(logits);
  out.elr_part = elr.item();
  out.total = add(ce, scale(elr, lambda));
  return out;
}

}  // namespace elr
