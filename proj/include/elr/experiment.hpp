#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "elr/config.hpp"
#include "elr/data.hpp"
#include "elr/diagnostics.hpp"
#include "elr/loss.hpp"
#include "elr/model.hpp"

namespace elr {

struct MetricsRow {
  int epoch = 0;
  double lr = 0.0;
  double train_ce = 0.0;
  double train_elr = 0.0;
  double train_total = 0.0;
  double test_ce = 0.0;
  double test_total = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  MemorizationRecord memorization;
  double seconds = 0.0;
};

struct RunResult {
  ExperimentConfig config;
  std::vector<MetricsRow> metrics;  // epoch 0 baseline, then one row per epoch
  double final_top1 = 0.0;
  double final_top5 = 0.0;
  std::string checkpoint_path;
};

/// Data as a run sees it: noisy labels injected, split, normalization
/// statistics taken from the training part.
struct PreparedData {
  LabeledDataset train;
  LabeledDataset test;
  AugmentSpec augment;
  std::size_t total_samples = 0;
};

PreparedData prepare_data(const ExperimentConfig& config);

struct Evaluation {
  double ce = 0.0;
  double elr = 0.0;
  double total = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  std::vector<int> predictions;
};

enum class LabelSource { Given, True };

/// Eval-mode pass over ds scored against the chosen labels. The regularizer
/// reads targets without updating them; pass nullptr to report it as 0.
Evaluation evaluate(Model& model, const LabeledDataset& ds, const AugmentSpec& augment,
                    const TargetStore* targets, double lambda, std::size_t batch_size,
                    LabelSource labels = LabelSource::Given);

struct RunHooks {
  // Called after each metrics row is final.
  std::function<void(const MetricsRow&)> on_epoch;
};

/// Trains one configuration end to end. Writes metrics.csv as epochs finish,
/// then metrics.json, summary.json and checkpoint.bin when output_dir is set.
/// NumericalError names the epoch and step where a loss went non-finite.
RunResult run_experiment(const ExperimentConfig& config, const RunHooks& hooks = {});

}  // namespace elr
