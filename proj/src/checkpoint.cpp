#include "elr/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "elr/config.hpp"
#include "elr/errors.hpp"

namespace elr {

namespace {

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw IoError("cannot write checkpoint " + path);
  }

  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }
  void doubles(std::span<const double> v) {
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  void close() {
    out_.close();
    if (!out_) throw IoError("failed writing checkpoint " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open checkpoint " + path);
  }

  template <typename T>
  T pod() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void doubles(std::span<double> v) {
    read(reinterpret_cast<char*>(v.data()), v.size() * sizeof(double));
  }

 private:
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(path_ + ": truncated checkpoint");
    }
  }

  std::ifstream in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::string& path, Model& model, const nlohmann::json& metadata,
                     const TargetStore* targets) {
  Writer w(path);
  w.bytes(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
  const auto cfg = model_config_to_json(model.config()).dump();
  w.pod<std::uint64_t>(cfg.size());
  w.bytes(cfg);
  const auto meta = metadata.dump();
  w.pod<std::uint64_t>(meta.size());
  w.bytes(meta);

  const auto& params = model.parameters();
  w.pod<std::uint64_t>(params.size());
  for (const auto& p : params) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name);
    const auto& shape = p.tensor.shape();
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) w.pod<std::uint64_t>(d);
    w.doubles(p.tensor.data());
  }

  const auto buffers = model.buffers();
  w.pod<std::uint64_t>(buffers.size());
  for (const auto& b : buffers) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(b.name.size()));
    w.bytes(b.name);
    w.pod<std::uint8_t>(b.state->initialized ? 1 : 0);
    w.pod<std::uint64_t>(b.state->running_mean.size());
    w.doubles(b.state->running_mean);
    w.doubles(b.state->running_var);
  }

  w.pod<std::uint8_t>(targets ? 1 : 0);
  if (targets) {
    w.pod<std::uint64_t>(targets->num_samples());
    w.pod<std::uint64_t>(targets->num_classes());
    w.pod<double>(targets->beta());
    w.doubles(targets->values());
  }
  w.close();
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  if (r.str(sizeof kCheckpointMagic) != std::string_view(kCheckpointMagic, sizeof kCheckpointMagic)) {
    throw FormatError(path + ": not a checkpoint");
  }
  nlohmann::json cfg_json, meta;
  try {
    cfg_json = nlohmann::json::parse(r.str(r.pod<std::uint64_t>()));
    meta = nlohmann::json::parse(r.str(r.pod<std::uint64_t>()));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  auto model = Model::build(model_config_from_json(cfg_json), 0);

  const auto count = r.pod<std::uint64_t>();
  const auto& params = model.parameters();
  if (count != params.size()) {
    throw FormatError(path + ": " + std::to_string(count) + " parameters, model has " +
                      std::to_string(params.size()));
  }
  for (const auto& p : params) {
    const auto name = r.str(r.pod<std::uint32_t>());
    if (name != p.name) throw FormatError(path + ": expected parameter " + p.name + ", found " + name);
    Shape shape(r.pod<std::uint32_t>());
    for (auto& d : shape) d = r.pod<std::uint64_t>();
    if (shape != p.tensor.shape()) {
      throw FormatError(path + ": " + name + " has shape " + shape_to_string(shape));
    }
    auto t = p.tensor;
    r.doubles(t.mutable_data());
  }

  const auto buffers = model.buffers();
  if (r.pod<std::uint64_t>() != buffers.size()) throw FormatError(path + ": buffer count mismatch");
  for (const auto& b : buffers) {
    const auto name = r.str(r.pod<std::uint32_t>());
    if (name != b.name) throw FormatError(path + ": expected buffer " + b.name + ", found " + name);
    b.state->initialized = r.pod<std::uint8_t>() != 0;
    const auto channels = r.pod<std::uint64_t>();
    if (channels != b.state->running_mean.size()) throw FormatError(path + ": " + name + " size");
    r.doubles(b.state->running_mean);
    r.doubles(b.state->running_var);
  }

  Checkpoint out{std::move(model), std::move(meta), std::nullopt};
  if (r.pod<std::uint8_t>() != 0) {
    const auto n = r.pod<std::uint64_t>();
    const auto k = r.pod<std::uint64_t>();
    const auto beta = r.pod<double>();
    out.targets.emplace(n, k, beta);
    r.doubles(out.targets->mutable_values());
  }
  return out;
}

}  // namespace elr
