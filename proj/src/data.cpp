#include "elr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "elr/errors.hpp"

namespace elr {

std::size_t LabeledDataset::flipped_count() const {
  return static_cast<std::size_t>(std::count(flip_mask.begin(), flip_mask.end(), true));
}

void LabeledDataset::validate() const {
  const auto n = size();
  if (true_labels.size() != n || flip_mask.size() != n || sample_ids.size() != n) {
    throw ContractError("dataset: label, mask and id arrays differ in length");
  }
  if (images.defined() && (images.rank() != 4 || images.dim(0) != n)) {
    throw ContractError("dataset: images " + shape_to_string(images.shape()) + " for " +
                        std::to_string(n) + " labels");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (given_labels[i] < 0 || given_labels[i] >= num_classes || true_labels[i] < 0 ||
        true_labels[i] >= num_classes) {
      throw ContractError("dataset: label out of range at row " + std::to_string(i));
    }
    if (flip_mask[i] != (given_labels[i] != true_labels[i])) {
      throw ContractError("dataset: flip mask disagrees with labels at row " + std::to_string(i));
    }
  }
}

LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> indices) {
  LabeledDataset out;
  out.num_classes = ds.num_classes;
  const auto& shape = ds.images.shape();
  const std::size_t per = shape_numel(shape) / std::max<std::size_t>(shape[0], 1);
  std::vector<double> pixels;
  pixels.reserve(indices.size() * per);
  const auto src = ds.images.data();
  for (auto i : indices) {
    if (i >= ds.size()) throw ContractError("subset: index " + std::to_string(i) + " out of range");
    pixels.insert(pixels.end(), src.begin() + static_cast<std::ptrdiff_t>(i * per),
                  src.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    out.given_labels.push_back(ds.given_labels[i]);
    out.true_labels.push_back(ds.true_labels[i]);
    out.flip_mask.push_back(ds.flip_mask[i]);
    out.sample_ids.push_back(ds.sample_ids[i]);
  }
  Shape s = shape;
  s[0] = indices.size();
  out.images = Tensor::from(std::move(s), std::move(pixels));
  return out;
}

LabeledDataset inject_symmetric_noise(const LabeledDataset& ds, const NoiseSpec& spec) {
  if (!(spec.rate >= 0.0 && spec.rate <= 1.0)) {
    throw ContractError("noise: rate must lie in [0,1]");
  }
  if (ds.num_classes < 2) throw ContractError("noise: need at least 2 classes to flip labels");
  if (ds.flipped_count() != 0) throw ContractError("noise: dataset already carries flipped labels");

  LabeledDataset out = ds;
  const auto n = ds.size();
  const auto count = static_cast<std::size_t>(std::llround(spec.rate * static_cast<double>(n)));
  std::mt19937_64 rng(spec.seed);

  // Partial Fisher-Yates: the first `count` slots become the chosen samples.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::uniform_int_distribution<int> other(0, ds.num_classes - 2);
  for (std::size_t i = 0; i < count; ++i) {
    const auto row = order[i];
    const int truth = ds.true_labels[row];
    const int r = other(rng);
    out.given_labels[row] = r >= truth ? r + 1 : r;
    out.flip_mask[row] = true;
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_train_test(const LabeledDataset& ds,
                                                           SplitRatio ratio, std::uint64_t seed) {
  if (ratio.train <= 0 || ratio.test <= 0) throw ContractError("split: ratio parts must be positive");
  const auto n = ds.size();
  const auto train_n = static_cast<std::size_t>(std::llround(
      static_cast<double>(n) * ratio.train / static_cast<double>(ratio.train + ratio.test)));
  if (train_n == 0 || train_n == n) {
    throw ContractError("split: " + std::to_string(n) + " samples leave one side empty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const std::span<const std::size_t> all(order);
  return {subset(ds, all.first(train_n)), subset(ds, all.subspan(train_n))};
}

std::pair<std::vector<double>, std::vector<double>> channel_stats(const Tensor& images) {
  if (images.rank() != 4) throw DimensionError("channel_stats expects [N,C,H,W]");
  const auto n = images.dim(0), c = images.dim(1), hw = images.dim(2) * images.dim(3);
  const auto v = images.data();
  std::vector<double> mean(c, 0.0), stdev(c, 0.0);
  const double count = static_cast<double>(n * hw);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t q = 0; q < hw; ++q) s += v[(i * c + ch) * hw + q];
    }
    mean[ch] = s / count;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t q = 0; q < hw; ++q) {
        const double d = v[(i * c + ch) * hw + q] - mean[ch];
        ss += d * d;
      }
    }
    stdev[ch] = std::sqrt(ss / count);
    if (stdev[ch] == 0.0) stdev[ch] = 1.0;
  }
  return {mean, stdev};
}

std::vector<double> crop_window(std::span<const double> image, std::size_t channels,
                                std::size_t height, std::size_t width, std::size_t pad,
                                std::size_t offset_y, std::size_t offset_x) {
  if (offset_y > 2 * pad || offset_x > 2 * pad) {
    throw ContractError("crop_window: offset outside the padded image");
  }
  std::vector<double> out(channels * height * width, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      // Row y of the crop is row y + offset_y - pad of the source.
      const auto sy = static_cast<std::ptrdiff_t>(y + offset_y) - static_cast<std::ptrdiff_t>(pad);
      if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(height)) continue;
      for (std::size_t x = 0; x < width; ++x) {
        const auto sx = static_cast<std::ptrdiff_t>(x + offset_x) - static_cast<std::ptrdiff_t>(pad);
        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(width)) continue;
        out[(c * height + y) * width + x] = image[(c * height + sy) * width + sx];
      }
    }
  }
  return out;
}

void hflip_inplace(std::span<double> image, std::size_t channels, std::size_t height,
                   std::size_t width) {
  for (std::size_t r = 0; r < channels * height; ++r) {
    std::reverse(image.begin() + static_cast<std::ptrdiff_t>(r * width),
                 image.begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
  }
}

namespace {

void normalize_inplace(std::span<double> image, std::size_t channels, std::size_t hw,
                       const AugmentSpec& spec) {
  for (std::size_t c = 0; c < channels; ++c) {
    const double m = spec.mean.empty() ? 0.0 : spec.mean.at(c);
    const double s = spec.std.empty() ? 1.0 : spec.std.at(c);
    for (std::size_t q = 0; q < hw; ++q) image[c * hw + q] = (image[c * hw + q] - m) / s;
  }
}

}  // namespace

Tensor augment_batch(const Tensor& images, const AugmentSpec& spec, std::mt19937_64& rng) {
  if (images.rank() != 4) throw DimensionError("augment_batch expects [N,C,H,W]");
  if (!(spec.hflip_prob >= 0.0 && spec.hflip_prob <= 1.0)) {
    throw ContractError("augment: hflip probability must lie in [0,1]");
  }
  const auto n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const std::size_t per = c * h * w;
  std::vector<double> out;
  out.reserve(images.numel());
  std::uniform_int_distribution<std::size_t> offset(0, 2 * spec.crop_pad);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const auto src = images.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t oy = offset(rng);
    const std::size_t ox = offset(rng);
    const bool flip = coin(rng) < spec.hflip_prob;
    auto img = crop_window(src.subspan(i * per, per), c, h, w, spec.crop_pad, oy, ox);
    if (flip) hflip_inplace(img, c, h, w);
    normalize_inplace(img, c, h * w, spec);
    out.insert(out.end(), img.begin(), img.end());
  }
  return Tensor::from(images.shape(), std::move(out));
}

Tensor normalize_batch(const Tensor& images, const AugmentSpec& spec) {
  if (images.rank() != 4) throw DimensionError("normalize_batch expects [N,C,H,W]");
  const auto n = images.dim(0), c = images.dim(1), hw = images.dim(2) * images.dim(3);
  std::vector<double> out(images.data().begin(), images.data().end());
  for (std::size_t i = 0; i < n; ++i) {
    normalize_inplace(std::span<double>(out).subspan(i * c * hw, c * hw), c, hw, spec);
  }
  return Tensor::from(images.shape(), std::move(out));
}

void parse_cifar_records(std::span<const unsigned char> bytes, CifarFormat format,
                         const std::string& source, LabeledDataset& into) {
  const std::size_t label_bytes = format == CifarFormat::Cifar10 ? 1 : 2;
  const int classes = format == CifarFormat::Cifar10 ? 10 : 100;
  const std::size_t record = label_bytes + kCifarPixels;
  if (bytes.size() % record != 0) {
    throw FormatError(source + ": truncated record at byte offset " +
                      std::to_string(bytes.size() / record * record) + " (length " +
                      std::to_string(bytes.size()) + " is not a multiple of " +
                      std::to_string(record) + ")");
  }
  if (into.num_classes != 0 && into.num_classes != classes) {
    throw FormatError(source + ": mixes CIFAR-10 and CIFAR-100 records");
  }
  into.num_classes = classes;

  const std::size_t count = bytes.size() / record;
  std::vector<double> pixels;
  if (into.images.defined()) pixels.assign(into.images.data().begin(), into.images.data().end());
  pixels.reserve(pixels.size() + count * kCifarPixels);
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t offset = r * record;
    const int label = bytes[offset + label_bytes - 1];
    if (label >= classes) {
      throw FormatError(source + ": label " + std::to_string(label) + " at byte offset " +
                        std::to_string(offset + label_bytes - 1) + " exceeds " +
                        std::to_string(classes - 1));
    }
    into.given_labels.push_back(label);
    into.true_labels.push_back(label);
    into.flip_mask.push_back(false);
    into.sample_ids.push_back(static_cast<std::int64_t>(into.sample_ids.size()));
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      pixels.push_back(static_cast<double>(bytes[offset + label_bytes + p]) / 255.0);
    }
  }
  const std::size_t n = into.given_labels.size();
  into.images = Tensor::from({n, 3, kCifarSide, kCifarSide}, std::move(pixels));
}

LabeledDataset load_cifar_binary(std::span<const std::string> paths, CifarFormat format) {
  LabeledDataset ds;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    parse_cifar_records(bytes, format, path, ds);
  }
  if (ds.size() == 0) {
    ds.num_classes = format == CifarFormat::Cifar10 ? 10 : 100;
    ds.images = Tensor::zeros({0, 3, kCifarSide, kCifarSide});
  }
  return ds;
}

std::vector<double> synthetic_prototypes(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> protos(static_cast<std::size_t>(spec.classes) * spec.channels *
                             spec.height * spec.width);
  for (auto& v : protos) v = unit(rng);
  return protos;
}

LabeledDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ContractError("synthetic: need at least 2 classes");
  if (spec.per_class < 1) throw ContractError("synthetic: need at least 1 sample per class");
  const std::size_t per = spec.channels * spec.height * spec.width;
  const auto protos = synthetic_prototypes(spec);
  // Sample noise uses its own stream so prototypes do not depend on per_class.
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, 1.0);

  LabeledDataset ds;
  ds.num_classes = spec.classes;
  const std::size_t n = static_cast<std::size_t>(spec.classes) * spec.per_class;
  std::vector<double> pixels;
  pixels.reserve(n * per);
  for (int k = 0; k < spec.classes; ++k) {
    const double* proto = protos.data() + static_cast<std::size_t>(k) * per;
    for (int m = 0; m < spec.per_class; ++m) {
      for (std::size_t p = 0; p < per; ++p) {
        const double v = spec.noise_std > 0.0 ? proto[p] + spec.noise_std * noise(rng) : proto[p];
        pixels.push_back(std::clamp(v, 0.0, 1.0));
      }
      ds.given_labels.push_back(k);
      ds.true_labels.push_back(k);
      ds.flip_mask.push_back(false);
      ds.sample_ids.push_back(static_cast<std::int64_t>(ds.sample_ids.size()));
    }
  }
  ds.images = Tensor::from({n, spec.channels, spec.height, spec.width}, std::move(pixels));
  return ds;
}

}  // namespace elr
