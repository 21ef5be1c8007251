#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mlctx/tensor/tensor.hpp"

namespace mlctx {

/// Convolution geometry. Output extent per axis is floor((in + 2*pad - k) / stride) + 1.
struct ConvSpec {
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  static ConvSpec square(std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
                         std::size_t pad = 0) {
    return ConvSpec{out_channels, kernel, kernel, stride, pad};
  }

  /// Throws ShapeError when the geometry is degenerate or does not fit `input`.
  Shape output_shape(const Shape& input) const;
  Shape weight_shape(std::size_t in_channels) const {
    return Shape{out_channels, in_channels, kernel_h, kernel_w};
  }

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Max-pool window. Padded sites never win the max.
struct PoolSpec {
  std::size_t kernel = 2;
  std::size_t stride = 2;
  std::size_t pad = 0;

  Shape output_shape(const Shape& input) const;

  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  std::vector<T> bias;
};

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  /// Linear input index that produced each output element.
  std::vector<std::size_t> argmax;
};

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                              std::span<const T> bias, const ConvSpec& spec);

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_out, const ConvSpec& spec);

template <typename T>
PoolResult<T> maxpool2d(const BasicTensor<T>& input, const PoolSpec& spec);

template <typename T>
PoolResult<T> maxpool2d(const BasicTensor<T>& input, std::size_t kernel, std::size_t stride) {
  return maxpool2d(input, PoolSpec{kernel, stride, 0});
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_out,
                                  std::span<const std::size_t> argmax, const Shape& input_shape);

template <typename T>
BasicTensor<T> avgpool_global(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> avgpool_global_backward(const BasicTensor<T>& grad_out, const Shape& input_shape);

/// Channel-wise concatenation; input i occupies its own contiguous channel slice, in order.
template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> inputs);

template <typename T>
BasicTensor<T> concat_channels(std::initializer_list<const BasicTensor<T>*> inputs) {
  return concat_channels<T>(std::span<const BasicTensor<T>* const>(inputs.begin(), inputs.size()));
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, std::size_t begin, std::size_t count);

/// Inverse of concat_channels: splits along C into pieces of the given widths.
template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& input,
                                           std::span<const std::size_t> widths);

template <typename T>
BasicTensor<T> crop(const BasicTensor<T>& input, std::size_t top, std::size_t left,
                    std::size_t height, std::size_t width);

template <typename T>
BasicTensor<T> mirror_h(const BasicTensor<T>& input);

/// Bilinear resampling with corner alignment: output endpoints land on input endpoints.
template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& input, std::size_t out_h, std::size_t out_w);

}  // namespace mlctx
