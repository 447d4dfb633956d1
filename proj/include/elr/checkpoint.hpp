#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "elr/loss.hpp"
#include "elr/model.hpp"

namespace elr {

// Binary layout, little-endian:
//   "ELRCKPT1"
//   u64 length + model config JSON
//   u64 length + metadata JSON (free-form, e.g. the experiment config)
//   u64 parameter count, then per parameter:
//     u32 name length, name, u32 rank, u64 extents..., f64 values...
//   u64 buffer count, then per batch-norm buffer:
//     u32 name length, name, u8 initialized, u64 channels, f64 mean..., f64 var...
//   u8 has targets; if 1: u64 samples, u64 classes, f64 beta, f64 values...
inline constexpr char kCheckpointMagic[8] = {'E', 'L', 'R', 'C', 'K', 'P', 'T', '1'};

struct Checkpoint {
  Model model;
  nlohmann::json metadata;
  std::optional<TargetStore> targets;
};

void save_checkpoint(const std::string& path, Model& model, const nlohmann::json& metadata,
                     const TargetStore* targets = nullptr);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace elr
