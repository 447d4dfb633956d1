#include "elr/model.hpp"

#include <cmath>
#include <random>

#include "elr/errors.hpp"

namespace elr {

ModelConfig ModelConfig::resnet18(int num_classes, int base_channels) {
  ModelConfig c;
  c.kind = ModelKind::ResNet;
  c.block_counts = {2, 2, 2, 2};
  c.base_channels = base_channels;
  c.num_classes = num_classes;
  return c;
}

ModelConfig ModelConfig::resnet34(int num_classes, int base_channels) {
  auto c = resnet18(num_classes, base_channels);
  c.block_counts = {3, 4, 6, 3};
  return c;
}

void ModelConfig::validate() const {
  if (num_classes < 2) throw ConfigError("model: num_classes must be at least 2");
  if (input.channels == 0 || input.height == 0 || input.width == 0) {
    throw ConfigError("model: input shape must be positive");
  }
  if (kind == ModelKind::ResNet) {
    if (block_counts.size() != 4) {
      throw ConfigError("model: resnet needs exactly 4 block counts, got " +
                        std::to_string(block_counts.size()));
    }
    for (int b : block_counts) {
      if (b < 1) throw ConfigError("model: block counts must be positive");
    }
    if (base_channels < 1) throw ConfigError("model: base_channels must be positive");
  } else {
    for (int h : mlp_hidden) {
      if (h < 1) throw ConfigError("model: hidden widths must be positive");
    }
  }
}

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  // Kaiming fan-in normal.
  Tensor kaiming(Shape shape, std::size_t fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng_);
    return Tensor::from(std::move(shape), std::move(v), true);
  }

 private:
  std::mt19937_64 rng_;
};

ConvBn make_conv_bn(Initializer& init, std::size_t in, std::size_t out, std::size_t k,
                    std::size_t stride, std::size_t pad) {
  ConvBn l;
  l.weight = init.kaiming({out, in, k, k}, in * k * k);
  l.gamma = Tensor::full({out}, 1.0, true);
  l.beta = Tensor::zeros({out}, true);
  // Model layers start from the usual (mean 0, var 1) running estimates.
  l.stats = BatchNormState(out);
  l.stats.initialized = true;
  l.stride = stride;
  l.pad = pad;
  return l;
}

Dense make_dense(Initializer& init, std::size_t in, std::size_t out) {
  return Dense{init.kaiming({in, out}, in), Tensor::zeros({out}, true)};
}

}  // namespace

Tensor ConvBn::forward(const Tensor& x, BatchNormOptions bn) {
  return batch_norm_2d(conv2d(x, weight, {stride, pad}), gamma, beta, stats, bn);
}

Tensor ResidualBlock::forward(const Tensor& x, BatchNormOptions bn) {
  auto branch = conv2.forward(relu(conv1.forward(x, bn)), bn);
  auto skip = projection ? projection->forward(x, bn) : x;
  return relu(add(branch, skip));
}

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  Initializer init(seed);
  const auto classes = static_cast<std::size_t>(config.num_classes);

  if (config.kind == ModelKind::ResNet) {
    const auto base = static_cast<std::size_t>(config.base_channels);
    m.stem_ = make_conv_bn(init, config.input.channels, base, 3, 1, 1);
    std::size_t in = base;
    for (std::size_t stage = 0; stage < 4; ++stage) {
      const std::size_t out = base << stage;
      for (int b = 0; b < config.block_counts[stage]; ++b) {
        const std::size_t stride = (stage > 0 && b == 0) ? 2 : 1;
        ResidualBlock block;
        block.conv1 = make_conv_bn(init, in, out, 3, stride, 1);
        block.conv2 = make_conv_bn(init, out, out, 3, 1, 1);
        if (stride != 1 || in != out) block.projection = make_conv_bn(init, in, out, 1, stride, 0);
        m.blocks_.push_back(std::move(block));
        m.block_names_.push_back("layer" + std::to_string(stage + 1) + "." + std::to_string(b));
        in = out;
      }
    }
    m.head_ = make_dense(init, in, classes);
  } else {
    std::size_t in = config.input.channels * config.input.height * config.input.width;
    for (int width : config.mlp_hidden) {
      m.hidden_.push_back(make_dense(init, in, static_cast<std::size_t>(width)));
      in = static_cast<std::size_t>(width);
    }
    m.head_ = make_dense(init, in, classes);
  }
  m.register_parameters();
  return m;
}

void Model::register_parameters() {
  registry_.clear();
  auto add_conv_bn = [this](const std::string& prefix, const char* conv, const char* bn,
                            const ConvBn& l) {
    registry_.push_back({prefix + conv + ".weight", l.weight});
    registry_.push_back({prefix + bn + ".gamma", l.gamma});
    registry_.push_back({prefix + bn + ".beta", l.beta});
  };
  if (stem_) add_conv_bn("stem.", "conv", "bn", *stem_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto prefix = block_names_[i] + ".";
    add_conv_bn(prefix, "conv1", "bn1", blocks_[i].conv1);
    add_conv_bn(prefix, "conv2", "bn2", blocks_[i].conv2);
    if (blocks_[i].projection) {
      add_conv_bn(prefix, "shortcut.conv", "shortcut.bn", *blocks_[i].projection);
    }
  }
  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    registry_.push_back({"fc" + std::to_string(i) + ".weight", hidden_[i].weight});
    registry_.push_back({"fc" + std::to_string(i) + ".bias", hidden_[i].bias});
  }
  registry_.push_back({"head.weight", head_.weight});
  registry_.push_back({"head.bias", head_.bias});
}

Tensor Model::forward(const Tensor& batch) {
  const auto& in = config_.input;
  if (batch.rank() != 4 || batch.dim(1) != in.channels || batch.dim(2) != in.height ||
      batch.dim(3) != in.width) {
    throw DimensionError("model expects [N," + std::to_string(in.channels) + "," +
                         std::to_string(in.height) + "," + std::to_string(in.width) +
                         "], got " + shape_to_string(batch.shape()));
  }
  if (config_.kind == ModelKind::ResNet) {
    const BatchNormOptions bn{mode_, update_running_stats_};
    auto h = relu(stem_->forward(batch, bn));
    for (auto& block : blocks_) h = block.forward(h, bn);
    return head_.forward(global_avg_pool(h));
  }
  auto h = flatten(batch);
  for (const auto& layer : hidden_) h = relu(layer.forward(h));
  return head_.forward(h);
}

std::vector<Tensor> Model::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(registry_.size());
  for (const auto& p : registry_) out.push_back(p.tensor);
  return out;
}

std::vector<NamedBuffer> Model::buffers() {
  std::vector<NamedBuffer> out;
  if (stem_) out.push_back({"stem.bn", &stem_->stats});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& prefix = block_names_[i];
    out.push_back({prefix + ".bn1", &blocks_[i].conv1.stats});
    out.push_back({prefix + ".bn2", &blocks_[i].conv2.stats});
    if (blocks_[i].projection) out.push_back({prefix + ".shortcut.bn", &blocks_[i].projection->stats});
  }
  return out;
}

void Model::zero_grad() {
  for (auto& p : registry_) p.tensor.zero_grad();
}

std::size_t count_parameters(const Model& model) {
  std::size_t n = 0;
  for (const auto& p : model.parameters()) n += p.tensor.numel();
  return n;
}

}  // namespace elr
