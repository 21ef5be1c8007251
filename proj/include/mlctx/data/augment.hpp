#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mlctx/tensor/tensor.hpp"

namespace mlctx {

/// Train/test normalization: square resize to `base`, subtract the mean pixel, multiply by
/// `scale`, then crop `crop` x `crop`.
struct Preprocess {
  std::size_t base = 36;
  std::size_t crop = 32;
  std::vector<double> mean;
  double scale = 1.0;

  static Preprocess mini(std::vector<double> mean) { return {36, 32, std::move(mean), 1.0 / 64.0}; }
  static Preprocess full(std::size_t crop, std::vector<double> mean) { return {256, crop, std::move(mean), 1.0}; }

  void validate(std::size_t channels) const;
};

/// Mean subtraction and scaling in place (no resize).
void normalize(Tensor& image, const Preprocess& pp);

/// Random crop offsets in [0, base - crop] on each axis and a mirror flip with probability 0.5,
/// all derived from `seed`.
struct CropDraw {
  std::size_t top = 0, left = 0;
  bool mirror = false;
};
CropDraw draw_crop(const Preprocess& pp, std::uint64_t seed);

/// One 1 x C x H x W image in pixel units -> 1 x C x crop x crop.
Tensor preprocess_train(const Tensor& image, const Preprocess& pp, std::uint64_t seed);
Tensor preprocess_center(const Tensor& image, const Preprocess& pp);

struct CropPlan {
  std::vector<std::size_t> scales;
  std::size_t positions_per_scale = 3;
  std::size_t crops_per_square = 6;
  bool mirror = true;
  std::size_t crop_size = 224;

  static CropPlan full_default() { return {{256, 288, 320, 352}, 3, 6, true, 224}; }
  static CropPlan mini_default() { return {{36, 40, 44, 48}, 3, 6, true, 32}; }
  /// Single centre crop of the `base` square; coincides with preprocess_center on square sources.
  static CropPlan single(std::size_t base, std::size_t crop) { return {{base}, 1, 1, false, crop}; }
  static CropPlan parse(const std::string& text);

  std::size_t total() const {
    return scales.size() * positions_per_scale * crops_per_square * (mirror ? 2 : 1);
  }
  void validate() const;
  std::string str() const;
};

/// Crops in plan order: scale, then square position, then crop index; every mirrored crop
/// follows all unmirrored ones, so crop[i + total/2] == mirror_h(crop[i]).
/// Crops per square: top-left, top-right, bottom-left, bottom-right, centre, whole square resized.
template <typename T>
std::vector<BasicTensor<T>> tta_crops(const BasicTensor<T>& image, const CropPlan& plan);

/// Shorter side to `shorter`, aspect preserved (longer side rounded to nearest).
template <typename T>
BasicTensor<T> resize_shorter(const BasicTensor<T>& image, std::size_t shorter);

}  // namespace mlctx
