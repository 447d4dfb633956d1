#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "elr/experiment.hpp"

namespace elr {

enum class SweepMode { Grid, Random };

enum class DistributionKind { Uniform, LogUniform, IntUniform, Choice };

struct Distribution {
  DistributionKind kind = DistributionKind::Uniform;
  double low = 0.0;
  double high = 1.0;
  std::vector<nlohmann::json> choices;
};

/// A swept parameter is addressed by a dotted path into the config JSON,
/// e.g. "loss.lambda" or "optimizer.sam_rho".
struct GridAxis {
  std::string path;
  std::vector<nlohmann::json> values;
};

struct RandomAxis {
  std::string path;
  Distribution distribution;
};

struct SweepSpec {
  nlohmann::json base;  // experiment config JSON
  SweepMode mode = SweepMode::Grid;
  std::vector<GridAxis> grid;
  std::vector<RandomAxis> random;
  int max_runs = 0;  // 0: no cap in grid mode; required in random mode
  std::uint64_t seed = 0;
  int sweep_epochs = 30;
  int refit_epochs = 150;
  int parallel = 1;
  std::string output_dir = "sweep";

  void validate() const;
};

SweepSpec sweep_spec_from_json(const nlohmann::json& j);
SweepSpec load_sweep_spec(const std::string& path);

/// The trial configs in run order: grid in row-major order of the axes
/// (last axis fastest), or max_runs random draws from the sweep seed.
std::vector<ExperimentConfig> enumerate_trials(const SweepSpec& spec);

struct TrialOutcome {
  ExperimentConfig config;
  std::optional<RunResult> result;
  std::string error;  // set when the run failed
};

struct SweepResult {
  std::vector<TrialOutcome> trials;  // enumeration order
  std::size_t best = 0;              // index into trials
  std::optional<RunResult> refit;
};

// Best successful trial by final top-1; the earlier trial wins ties.
std::size_t select_best(const std::vector<TrialOutcome>& trials);

/// Runs every trial (up to spec.parallel at once), picks the best, and with
/// refit retrains it for refit_epochs. Failed trials are recorded; if all
/// fail the sweep throws.
SweepResult run_sweep(const SweepSpec& spec, bool refit = false);

}  // namespace elr
