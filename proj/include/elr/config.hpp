#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "elr/data.hpp"
#include "elr/errors.hpp"
#include "elr/model.hpp"
#include "elr/optim.hpp"
#include "elr/schedule.hpp"

namespace elr {

enum class DatasetKind { Synthetic, Cifar10, Cifar100 };
enum class LossKind { CrossEntropy, Elr };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::Synthetic;
  SyntheticSpec synthetic;
  std::vector<std::string> paths;  // CIFAR binary batches
  // Keep a random subset of this many samples; 0 keeps everything.
  std::size_t subset = 0;
};

struct LossConfig {
  LossKind kind = LossKind::CrossEntropy;
  double lambda = 0.0;
  double beta = 0.7;
};

struct AugmentConfig {
  bool enabled = false;
  std::size_t crop_pad = 4;
  double hflip_prob = 0.5;
  // Per-channel statistics from the training split.
  bool normalize = true;
};

/// Everything that determines one training run.
struct ExperimentConfig {
  std::string name = "run";
  DatasetConfig dataset;
  NoiseSpec noise;
  SplitRatio split;
  std::uint64_t split_seed = 0;
  AugmentConfig augment;
  // num_classes and input shape are filled in from the dataset.
  ModelConfig model;
  LossConfig loss;
  SgdSettings optimizer;
  ScheduleConfig schedule;
  int epochs = 120;
  int batch_size = 128;
  std::uint64_t seed = 0;
  std::string output_dir;
  // Wall-clock seconds in the metrics; off keeps output byte-reproducible.
  bool record_wall_time = false;

  void validate() const;
};

/// Unknown keys and wrongly typed values are ConfigErrors.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig load_experiment_config(const std::string& path);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// 16 hex digits identifying every field that affects results (name and
/// output_dir excluded).
std::string config_hash(const ExperimentConfig& config);

std::uint64_t fnv1a64(std::string_view bytes);

// Reference settings for CIFAR-10 with multi-step decay.
ExperimentConfig cifar10_resnet34_config();
// Synthetic, MLP, small enough to train in seconds per epoch.
ExperimentConfig desk_scale_config();

namespace config_detail {

// Reads keys from one JSON object and rejects leftovers in finish().
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path);

  bool has(const std::string& key) const;
  const nlohmann::json& child(const std::string& key);
  template <typename T>
  void read(const std::string& key, T& out);
  void finish() const;
  const std::string& path() const { return path_; }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

template <typename T>
void ObjectReader::read(const std::string& key, T& out) {
  if (!has(key)) return;
  seen_.push_back(key);
  try {
    out = j_.at(key).template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path_ + "." + key + ": " + e.what());
  }
}

}  // namespace config_detail

}  // namespace elr
