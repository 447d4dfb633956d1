#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "elr/ops.hpp"
#include "elr/tensor.hpp"

namespace elr {

enum class ModelKind { ResNet, Mlp };

struct InputShape {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;

  bool operator==(const InputShape&) const = default;
};

struct ModelConfig {
  ModelKind kind = ModelKind::ResNet;
  // Residual blocks per stage; resnet only.
  std::vector<int> block_counts{1, 1, 1, 1};
  int base_channels = 16;
  int num_classes = 10;
  // Hidden widths; mlp only.
  std::vector<int> mlp_hidden;
  InputShape input;

  static ModelConfig resnet18(int num_classes, int base_channels = 64);
  static ModelConfig resnet34(int num_classes, int base_channels = 64);

  // Throws ConfigError on an invalid combination.
  void validate() const;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

struct NamedBuffer {
  std::string name;
  BatchNormState* state;
};

// Conv without bias followed by batch norm.
struct ConvBn {
  Tensor weight;  // [out, in, k, k]
  Tensor gamma;
  Tensor beta;
  BatchNormState stats;
  std::size_t stride = 1;
  std::size_t pad = 0;

  Tensor forward(const Tensor& x, BatchNormOptions bn);
};

/// conv-BN-ReLU-conv-BN plus skip, then ReLU. The skip is the identity unless
/// a projection (1x1 conv + BN) is present for a channel or stride change.
struct ResidualBlock {
  ConvBn conv1;
  ConvBn conv2;
  std::optional<ConvBn> projection;

  Tensor forward(const Tensor& x, BatchNormOptions bn);
};

struct Dense {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Tensor forward(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }
};

class Model {
 public:
  static Model build(const ModelConfig& config, std::uint64_t seed);

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Logits [N, num_classes] for a batch [N, C, H, W].
  Tensor forward(const Tensor& batch);

  void set_mode(Mode mode) { mode_ = mode; }
  Mode mode() const { return mode_; }
  // Train mode only; lets a second forward pass leave running stats alone.
  void set_update_running_stats(bool update) { update_running_stats_ = update; }

  const ModelConfig& config() const { return config_; }
  const std::vector<NamedParameter>& parameters() const { return registry_; }
  std::vector<Tensor> parameter_tensors() const;
  std::vector<NamedBuffer> buffers();
  void zero_grad();

  // Layer access for tests and checkpoints.
  std::vector<ResidualBlock>& blocks() { return blocks_; }
  Dense& head() { return head_; }

 private:
  Model() = default;
  void register_parameters();

  ModelConfig config_;
  Mode mode_ = Mode::Train;
  bool update_running_stats_ = true;

  std::optional<ConvBn> stem_;
  std::vector<ResidualBlock> blocks_;
  std::vector<std::string> block_names_;
  std::vector<Dense> hidden_;
  Dense head_;

  std::vector<NamedParameter> registry_;
};

std::size_t count_parameters(const Model& model);

}  // namespace elr
