#pragma once

#include <vector>

namespace elr {

enum class ScheduleKind { MultiStep, Cosine };

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::MultiStep;
  double base_lr = 0.02;
  std::vector<int> milestones{40, 80};
  // Divisor applied at every milestone.
  double decay_factor = 10.0;
  double eta_min = 0.001;
  double eta_max = 0.02;
  int t_max = 10;

  void validate() const;
};

/// base_lr / decay_factor^(milestones <= epoch)
double multistep_lr(const ScheduleConfig& config, int epoch);

/// eta_min + (eta_max - eta_min) * (1 + cos(pi * t / t_max)) / 2, 0 <= t <= t_max.
double cosine_lr(const ScheduleConfig& config, int t);

/// Rate for a whole epoch. Cosine restarts every t_max epochs.
double lr_at_epoch(const ScheduleConfig& config, int epoch);

}  // namespace elr
