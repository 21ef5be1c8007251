#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mlctx/data/binio.hpp"
#include "mlctx/tensor/tensor.hpp"

namespace mlctx {

/// Images stored as 8-bit pixels (C x H x W each) with integer labels.
struct Dataset {
  std::size_t channels = 3, height = 32, width = 32;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return channels * height * width; }
  std::size_t num_classes() const;

  /// Image i as a 1 x C x H x W tensor with values in [0, 255].
  Tensor image(std::size_t i) const;
  std::span<const std::uint8_t> raw(std::size_t i) const;
  void append(std::span<const std::uint8_t> image, int label);

  Dataset subset(std::span<const std::size_t> indices) const;
  /// First n images (all when n exceeds the size).
  Dataset head(std::size_t n) const;
  /// Images whose labels are in `classes`, relabelled 0..k-1 in the order given.
  Dataset filter_classes(std::span<const int> classes) const;
};

/// One CIFAR-10 binary batch: records of 1 label byte + 3072 pixel bytes.
Dataset load_cifar10_batch(const std::filesystem::path& file);
void save_cifar10_batch(const Dataset& data, const std::filesystem::path& file);

/// data_batch_1..5.bin (train) or test_batch.bin (test) from a cifar-10-batches-bin directory.
Dataset load_cifar10(const std::filesystem::path& dir, bool train);

/// IDX3 unsigned-byte images (magic 0x00000803) with IDX1 labels (magic 0x00000801).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
void save_idx(const Dataset& data, const std::filesystem::path& images,
              const std::filesystem::path& labels);

/// Per-channel mean pixel over every image of `train`.
std::vector<double> mean_pixel(const Dataset& train);

/// Class-dependent colour/texture patterns with per-image jitter and noise, in CIFAR geometry.
/// Stands in for CIFAR-10 where the real batches are unavailable.
Dataset synthetic_cifar(std::size_t count, std::size_t num_classes, std::uint64_t seed);

}  // namespace mlctx
