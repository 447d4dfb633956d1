#include "elr/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace elr {

using nlohmann::json;
using config_detail::ObjectReader;

namespace config_detail {

ObjectReader::ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
  if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
}

bool ObjectReader::has(const std::string& key) const { return j_.contains(key); }

const json& ObjectReader::child(const std::string& key) {
  seen_.push_back(key);
  return j_.at(key);
}

void ObjectReader::finish() const {
  for (const auto& [key, value] : j_.items()) {
    if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
      throw ConfigError(path_ + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace config_detail

namespace {

template <typename Enum>
struct EnumName {
  Enum value;
  const char* name;
};

constexpr EnumName<DatasetKind> kDatasetKinds[] = {
    {DatasetKind::Synthetic, "synthetic"},
    {DatasetKind::Cifar10, "cifar10"},
    {DatasetKind::Cifar100, "cifar100"},
};
constexpr EnumName<LossKind> kLossKinds[] = {
    {LossKind::CrossEntropy, "ce"},
    {LossKind::Elr, "elr"},
};
constexpr EnumName<ModelKind> kModelKinds[] = {
    {ModelKind::ResNet, "resnet"},
    {ModelKind::Mlp, "mlp"},
};
constexpr EnumName<ScheduleKind> kScheduleKinds[] = {
    {ScheduleKind::MultiStep, "multistep"},
    {ScheduleKind::Cosine, "cosine"},
};

template <typename Enum, std::size_t N>
const char* enum_name(const EnumName<Enum> (&table)[N], Enum v) {
  for (const auto& e : table) {
    if (e.value == v) return e.name;
  }
  return "?";
}

template <typename Enum, std::size_t N>
void read_enum(ObjectReader& r, const std::string& key, const EnumName<Enum> (&table)[N],
               Enum& out) {
  if (!r.has(key)) return;
  std::string s;
  r.read(key, s);
  for (const auto& e : table) {
    if (s == e.name) {
      out = e.value;
      return;
    }
  }
  throw ConfigError(r.path() + "." + key + ": unknown value '" + s + "'");
}

void read_model_section(ObjectReader& r, ModelConfig& m) {
  read_enum(r, "kind", kModelKinds, m.kind);
  r.read("block_counts", m.block_counts);
  r.read("base_channels", m.base_channels);
  r.read("hidden", m.mlp_hidden);
}

json model_section(const ModelConfig& m) {
  return {{"kind", enum_name(kModelKinds, m.kind)},
          {"block_counts", m.block_counts},
          {"base_channels", m.base_channels},
          {"hidden", m.mlp_hidden}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(noise.rate >= 0.0 && noise.rate <= 1.0)) throw ConfigError("noise.rate must lie in [0,1]");
  if (split.train <= 0 || split.test <= 0) throw ConfigError("split ratio parts must be positive");
  if (loss.kind == LossKind::CrossEntropy && loss.lambda != 0.0) {
    throw ConfigError("loss: cross-entropy runs take no lambda");
  }
  if (loss.lambda < 0.0) throw ConfigError("loss.lambda must be non-negative");
  if (!(loss.beta >= 0.0 && loss.beta <= 1.0)) throw ConfigError("loss.beta must lie in [0,1]");
  if (optimizer.momentum < 0.0 || optimizer.weight_decay < 0.0 || optimizer.sam_rho < 0.0) {
    throw ConfigError("optimizer settings must be non-negative");
  }
  if (!(augment.hflip_prob >= 0.0 && augment.hflip_prob <= 1.0)) {
    throw ConfigError("augment.hflip_prob must lie in [0,1]");
  }
  if (dataset.kind == DatasetKind::Synthetic) {
    if (dataset.synthetic.classes < 2) throw ConfigError("dataset.classes must be at least 2");
    if (dataset.synthetic.per_class < 1) throw ConfigError("dataset.per_class must be positive");
    if (dataset.synthetic.channels == 0 || dataset.synthetic.height == 0 ||
        dataset.synthetic.width == 0) {
      throw ConfigError("dataset image size must be positive");
    }
  } else if (dataset.paths.empty()) {
    throw ConfigError("dataset.paths must list the CIFAR binary batches");
  }
  schedule.validate();
  auto m = model;
  m.num_classes = std::max(m.num_classes, 2);
  m.validate();
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  ObjectReader top(j, "config");
  top.read("name", c.name);
  if (top.has("dataset")) {
    ObjectReader r(top.child("dataset"), "dataset");
    read_enum(r, "kind", kDatasetKinds, c.dataset.kind);
    auto& s = c.dataset.synthetic;
    r.read("classes", s.classes);
    r.read("per_class", s.per_class);
    r.read("channels", s.channels);
    r.read("height", s.height);
    r.read("width", s.width);
    r.read("noise_std", s.noise_std);
    r.read("seed", s.seed);
    r.read("paths", c.dataset.paths);
    r.read("subset", c.dataset.subset);
    r.finish();
  }
  if (top.has("noise")) {
    ObjectReader r(top.child("noise"), "noise");
    r.read("rate", c.noise.rate);
    r.read("seed", c.noise.seed);
    r.finish();
  }
  if (top.has("split")) {
    ObjectReader r(top.child("split"), "split");
    r.read("train", c.split.train);
    r.read("test", c.split.test);
    r.read("seed", c.split_seed);
    r.finish();
  }
  if (top.has("augment")) {
    ObjectReader r(top.child("augment"), "augment");
    r.read("enabled", c.augment.enabled);
    r.read("crop_pad", c.augment.crop_pad);
    r.read("hflip_prob", c.augment.hflip_prob);
    r.read("normalize", c.augment.normalize);
    r.finish();
  }
  if (top.has("model")) {
    ObjectReader r(top.child("model"), "model");
    read_model_section(r, c.model);
    r.finish();
  }
  if (top.has("loss")) {
    ObjectReader r(top.child("loss"), "loss");
    read_enum(r, "kind", kLossKinds, c.loss.kind);
    r.read("lambda", c.loss.lambda);
    r.read("beta", c.loss.beta);
    r.finish();
  }
  if (top.has("optimizer")) {
    ObjectReader r(top.child("optimizer"), "optimizer");
    r.read("momentum", c.optimizer.momentum);
    r.read("weight_decay", c.optimizer.weight_decay);
    r.read("sam_rho", c.optimizer.sam_rho);
    r.finish();
  }
  if (top.has("schedule")) {
    ObjectReader r(top.child("schedule"), "schedule");
    read_enum(r, "kind", kScheduleKinds, c.schedule.kind);
    r.read("base_lr", c.schedule.base_lr);
    r.read("milestones", c.schedule.milestones);
    r.read("decay_factor", c.schedule.decay_factor);
    r.read("eta_min", c.schedule.eta_min);
    r.read("eta_max", c.schedule.eta_max);
    r.read("t_max", c.schedule.t_max);
    r.finish();
  }
  top.read("epochs", c.epochs);
  top.read("batch_size", c.batch_size);
  top.read("seed", c.seed);
  top.read("output_dir", c.output_dir);
  top.read("record_wall_time", c.record_wall_time);
  top.finish();
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  const auto& s = c.dataset.synthetic;
  return {
      {"name", c.name},
      {"dataset",
       {{"kind", enum_name(kDatasetKinds, c.dataset.kind)},
        {"classes", s.classes},
        {"per_class", s.per_class},
        {"channels", s.channels},
        {"height", s.height},
        {"width", s.width},
        {"noise_std", s.noise_std},
        {"seed", s.seed},
        {"paths", c.dataset.paths},
        {"subset", c.dataset.subset}}},
      {"noise", {{"rate", c.noise.rate}, {"seed", c.noise.seed}}},
      {"split", {{"train", c.split.train}, {"test", c.split.test}, {"seed", c.split_seed}}},
      {"augment",
       {{"enabled", c.augment.enabled},
        {"crop_pad", c.augment.crop_pad},
        {"hflip_prob", c.augment.hflip_prob},
        {"normalize", c.augment.normalize}}},
      {"model", model_section(c.model)},
      {"loss",
       {{"kind", enum_name(kLossKinds, c.loss.kind)},
        {"lambda", c.loss.lambda},
        {"beta", c.loss.beta}}},
      {"optimizer",
       {{"momentum", c.optimizer.momentum},
        {"weight_decay", c.optimizer.weight_decay},
        {"sam_rho", c.optimizer.sam_rho}}},
      {"schedule",
       {{"kind", enum_name(kScheduleKinds, c.schedule.kind)},
        {"base_lr", c.schedule.base_lr},
        {"milestones", c.schedule.milestones},
        {"decay_factor", c.schedule.decay_factor},
        {"eta_min", c.schedule.eta_min},
        {"eta_max", c.schedule.eta_max},
        {"t_max", c.schedule.t_max}}},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"record_wall_time", c.record_wall_time},
  };
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

json model_config_to_json(const ModelConfig& m) {
  auto j = model_section(m);
  j["num_classes"] = m.num_classes;
  j["input"] = {m.input.channels, m.input.height, m.input.width};
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  ObjectReader r(j, "model");
  read_model_section(r, m);
  r.read("num_classes", m.num_classes);
  std::vector<std::size_t> input;
  r.read("input", input);
  if (r.has("input")) {
    if (input.size() != 3) throw ConfigError("model.input must be [C,H,W]");
    m.input = {input[0], input[1], input[2]};
  }
  r.finish();
  m.validate();
  return m;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& config) {
  auto j = to_json(config);
  j.erase("name");
  j.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

ExperimentConfig cifar10_resnet34_config() {
  ExperimentConfig c;
  c.name = "cifar10-elr-multistep";
  c.dataset.kind = DatasetKind::Cifar10;
  c.dataset.paths = {"data/cifar-10-batches-bin/data_batch_1.bin",
                     "data/cifar-10-batches-bin/data_batch_2.bin",
                     "data/cifar-10-batches-bin/data_batch_3.bin",
                     "data/cifar-10-batches-bin/data_batch_4.bin",
                     "data/cifar-10-batches-bin/data_batch_5.bin",
                     "data/cifar-10-batches-bin/test_batch.bin"};
  c.noise.rate = 0.2;
  c.augment.enabled = true;
  c.model = ModelConfig::resnet34(10);
  c.loss = {LossKind::Elr, 3.0, 0.7};
  c.optimizer = {0.9, 1e-3, 0.0};
  c.schedule.kind = ScheduleKind::MultiStep;
  c.schedule.base_lr = 0.02;
  c.schedule.milestones = {40, 80};
  c.schedule.decay_factor = 10.0;
  c.epochs = 120;
  c.batch_size = 128;
  return c;
}

ExperimentConfig desk_scale_config() {
  ExperimentConfig c;
  c.name = "desk-synthetic";
  c.dataset.kind = DatasetKind::Synthetic;
  // 25-dimensional inputs: low enough that memorized noisy labels cost test
  // accuracy, with a net wide enough to memorize them within 100 epochs.
  c.dataset.synthetic = SyntheticSpec{10, 500, 1, 5, 5, 0.15, 0};
  c.noise.rate = 0.2;
  c.model.kind = ModelKind::Mlp;
  c.model.mlp_hidden = {256, 256};
  c.loss = {LossKind::Elr, 3.0, 0.7};
  c.optimizer.weight_decay = 0.0;
  c.schedule.kind = ScheduleKind::Cosine;
  c.schedule.eta_max = 0.1;
  c.schedule.eta_min = 0.001;
  c.schedule.t_max = 10;
  c.epochs = 100;
  c.batch_size = 128;
  return c;
}

}  // namespace elr
