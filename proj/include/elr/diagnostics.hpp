#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "elr/data.hpp"
#include "elr/tensor.hpp"

namespace elr {

/// Outcome over the samples whose labels were flipped: predicted as the true
/// label, as the given (wrong) label, or as neither.
struct MemorizationRecord {
  int epoch = 0;
  double frac_correct = 0.0;
  double frac_memorized = 0.0;
  double frac_other = 0.0;
  std::size_t flipped = 0;

  // No flipped samples; the fractions carry no information.
  bool empty() const { return flipped == 0; }
};

MemorizationRecord memorization_fractions(std::span<const int> predictions,
                                          const LabeledDataset& ds, int epoch = 0);

// Row-wise argmax; the lowest index wins ties.
std::vector<int> argmax_rows(const Tensor& logits);

/// Fraction of rows whose label ranks among the k largest logits. Equal
/// logits rank the lower class index first.
double topk_accuracy(const Tensor& logits, std::span<const int> labels, int k);

}  // namespace elr
