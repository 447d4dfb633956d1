#include "elr/diagnostics.hpp"

#include "elr/errors.hpp"

namespace elr {

MemorizationRecord memorization_fractions(std::span<const int> predictions,
                                          const LabeledDataset& ds, int epoch) {
  if (predictions.size() != ds.size()) {
    throw ContractError("memorization: " + std::to_string(predictions.size()) +
                        " predictions for " + std::to_string(ds.size()) + " samples");
  }
  MemorizationRecord rec;
  rec.epoch = epoch;
  std::size_t correct = 0, memorized = 0, other = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!ds.flip_mask[i]) continue;
    if (predictions[i] == ds.true_labels[i]) {
      ++correct;
    } else if (predictions[i] == ds.given_labels[i]) {
      ++memorized;
    } else {
      ++other;
    }
  }
  rec.flipped = correct + memorized + other;
  if (rec.flipped == 0) return rec;
  const double n = static_cast<double>(rec.flipped);
  rec.frac_correct = static_cast<double>(correct) / n;
  rec.frac_memorized = static_cast<double>(memorized) / n;
  rec.frac_other = static_cast<double>(other) / n;
  return rec;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("argmax_rows expects [N,K]");
  const auto n = logits.dim(0), k = logits.dim(1);
  const auto z = logits.data();
  std::vector<int> out(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (z[r * k + j] > z[r * k + best]) best = j;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

double topk_accuracy(const Tensor& logits, std::span<const int> labels, int k) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("topk_accuracy: logits " + shape_to_string(logits.shape()) +
                         " against " + std::to_string(labels.size()) + " labels");
  }
  const auto n = logits.dim(0), classes = logits.dim(1);
  if (k < 1 || static_cast<std::size_t>(k) > classes) {
    throw ContractError("topk_accuracy: k must lie in [1," + std::to_string(classes) + "]");
  }
  if (n == 0) return 0.0;
  const auto z = logits.data();
  std::size_t hits = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw ContractError("topk_accuracy: label " + std::to_string(labels[r]) + " out of range");
    }
    const auto y = static_cast<std::size_t>(labels[r]);
    const double zy = z[r * classes + y];
    // Rank of y: classes strictly above it, plus lower-index ties.
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < classes; ++j) {
      const double zj = z[r * classes + j];
      if (zj > zy || (zj == zy && j < y)) ++ahead;
    }
    if (ahead < static_cast<std::size_t>(k)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace elr
