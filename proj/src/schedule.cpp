#include "elr/schedule.hpp"

#include <cmath>
#include <numbers>

#include "elr/errors.hpp"

namespace elr {

void ScheduleConfig::validate() const {
  if (kind == ScheduleKind::MultiStep) {
    if (!(base_lr > 0.0)) throw ConfigError("schedule: base_lr must be positive");
    if (!(decay_factor > 1.0)) throw ConfigError("schedule: decay_factor must exceed 1");
    for (std::size_t i = 0; i < milestones.size(); ++i) {
      if (milestones[i] < 0 || (i > 0 && milestones[i] <= milestones[i - 1])) {
        throw ConfigError("schedule: milestones must be non-negative and strictly increasing");
      }
    }
  } else {
    if (!(eta_min >= 0.0 && eta_min < eta_max)) {
      throw ConfigError("schedule: need 0 <= eta_min < eta_max");
    }
    if (t_max < 1) throw ConfigError("schedule: t_max must be at least 1");
  }
}

double multistep_lr(const ScheduleConfig& config, int epoch) {
  if (epoch < 0) throw ContractError("multistep_lr: negative epoch");
  int passed = 0;
  for (int m : config.milestones) {
    if (m <= epoch) ++passed;
  }
  double lr = config.base_lr;
  for (int i = 0; i < passed; ++i) lr /= config.decay_factor;
  return lr;
}

double cosine_lr(const ScheduleConfig& config, int t) {
  if (t < 0 || t > config.t_max) {
    throw ContractError("cosine_lr: step " + std::to_string(t) + " outside [0," +
                        std::to_string(config.t_max) + "]");
  }
  const double phase = std::numbers::pi * static_cast<double>(t) / config.t_max;
  return config.eta_min + 0.5 * (config.eta_max - config.eta_min) * (1.0 + std::cos(phase));
}

double lr_at_epoch(const ScheduleConfig& config, int epoch) {
  if (config.kind == ScheduleKind::MultiStep) return multistep_lr(config, epoch);
  if (epoch < 0) throw ContractError("lr_at_epoch: negative epoch");
  return cosine_lr(config, epoch % config.t_max);
}

}  // namespace elr
