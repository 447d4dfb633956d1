#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "elr/tensor.hpp"

namespace elr {

/// Images with their given (possibly corrupted) labels, the ground truth,
/// and a mask of which labels were flipped.
struct LabeledDataset {
  Tensor images;  // [N, C, H, W]
  std::vector<int> given_labels;
  std::vector<int> true_labels;
  std::vector<bool> flip_mask;
  int num_classes = 0;
  std::vector<std::int64_t> sample_ids;

  std::size_t size() const { return given_labels.size(); }
  std::size_t flipped_count() const;

  // Throws ContractError if any invariant is broken.
  void validate() const;
};

/// Rows `indices` of ds, in that order, keeping their sample ids.
LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> indices);

struct NoiseSpec {
  double rate = 0.0;
  std::uint64_t seed = 0;
};

/// Flips exactly round(rate*N) labels chosen without replacement; each new
/// label is uniform over the other K-1 classes.
LabeledDataset inject_symmetric_noise(const LabeledDataset& ds, const NoiseSpec& spec);

struct SplitRatio {
  int train = 9;
  int test = 1;
};

/// Random partition with round(N*train/(train+test)) samples in the first part.
std::pair<LabeledDataset, LabeledDataset> split_train_test(const LabeledDataset& ds,
                                                           SplitRatio ratio, std::uint64_t seed);

struct AugmentSpec {
  std::vector<double> mean;  // per channel; empty means 0
  std::vector<double> std;   // per channel; empty means 1
  std::size_t crop_pad = 4;
  double hflip_prob = 0.5;
};

// Per-channel mean and standard deviation over all images.
std::pair<std::vector<double>, std::vector<double>> channel_stats(const Tensor& images);

/// One image [C,H,W] zero-padded by pad and cropped back to HxW at the
/// given offset (0 <= offset <= 2*pad).
std::vector<double> crop_window(std::span<const double> image, std::size_t channels,
                                std::size_t height, std::size_t width, std::size_t pad,
                                std::size_t offset_y, std::size_t offset_x);

void hflip_inplace(std::span<double> image, std::size_t channels, std::size_t height,
                   std::size_t width);

/// Random crop, horizontal flip, then normalization, per image.
Tensor augment_batch(const Tensor& images, const AugmentSpec& spec, std::mt19937_64& rng);

/// Normalization only; the evaluation pipeline.
Tensor normalize_batch(const Tensor& images, const AugmentSpec& spec);

enum class CifarFormat { Cifar10, Cifar100 };

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;

/// Reads the CIFAR binary layout: label byte(s) then 3072 pixel bytes as R, G
/// and B planes, row-major. Pixels are scaled to [0,1]. CIFAR-100 records
/// carry a coarse and a fine label byte; the fine label is used.
LabeledDataset load_cifar_binary(std::span<const std::string> paths,
                                 CifarFormat format = CifarFormat::Cifar10);

/// In-memory variant of load_cifar_binary. `source` names the buffer in errors.
void parse_cifar_records(std::span<const unsigned char> bytes, CifarFormat format,
                         const std::string& source, LabeledDataset& into);

struct SyntheticSpec {
  int classes = 10;
  int per_class = 500;
  std::size_t channels = 3;
  std::size_t height = 8;
  std::size_t width = 8;
  double noise_std = 0.15;
  std::uint64_t seed = 0;
};

/// K random prototype images in [0,1]; each sample is its class prototype
/// plus Gaussian pixel noise, clipped to [0,1]. Samples are class-major.
LabeledDataset generate_synthetic(const SyntheticSpec& spec);

// The prototypes generate_synthetic draws for spec.seed, [K, C*H*W].
std::vector<double> synthetic_prototypes(const SyntheticSpec& spec);

}  // namespace elr
