#include <Eigen/Core>

#include "mlctx/tensor/ops.hpp"

namespace mlctx {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                        const char* axis, const Shape& input) {
  if (in + 2 * pad < k) {
    throw ShapeError(std::string("conv2d: kernel ") + std::to_string(k) + " exceeds padded " +
                     axis + " extent of input " + input.str());
  }
  return (in + 2 * pad - k) / stride + 1;
}

bool is_pointwise(const ConvSpec& s) {
  return s.kernel_h == 1 && s.kernel_w == 1 && s.stride == 1 && s.pad == 0;
}

// Unfolds one image (C,H,W) into a (C*kh*kw) x (OH*OW) matrix.
template <typename T>
void im2col(const T* img, std::size_t channels, std::size_t height, std::size_t width,
            const ConvSpec& s, std::size_t out_h, std::size_t out_w, T* col) {
  const auto pad = static_cast<std::ptrdiff_t>(s.pad);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = img + c * height * width;
    for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * s.stride + ki) - pad;
          T* row = col + oh * out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(row, row + out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * width;
          for (std::size_t ow = 0; ow < out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * s.stride + kj) - pad;
            row[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(width))
                          ? T(0)
                          : src[static_cast<std::size_t>(iw)];
          }
        }
        col += out_h * out_w;
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the image (accumulating).
template <typename T>
void col2im(const T* col, std::size_t channels, std::size_t height, std::size_t width,
            const ConvSpec& s, std::size_t out_h, std::size_t out_w, T* img) {
  const auto pad = static_cast<std::ptrdiff_t>(s.pad);
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = img + c * height * width;
    for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * s.stride + ki) - pad;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) continue;
          const T* row = col + oh * out_w;
          T* dst = plane + static_cast<std::size_t>(ih) * width;
          for (std::size_t ow = 0; ow < out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * s.stride + kj) - pad;
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(width)) {
              dst[static_cast<std::size_t>(iw)] += row[ow];
            }
          }
        }
        col += out_h * out_w;
      }
    }
  }
}

template <typename T>
void check_weight(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                  const ConvSpec& spec) {
  const Shape expected = spec.weight_shape(input.c());
  if (weight.shape() != expected) {
    throw ShapeError("conv2d: weight shape " + weight.shape().str() +
                     " does not match input shape " + input.shape().str() + " (expected " +
                     expected.str() + ")");
  }
}

}  // namespace

Shape ConvSpec::output_shape(const Shape& input) const {
  if (out_channels == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0) {
    throw ShapeError("conv2d: out_channels, kernel and stride must be >= 1");
  }
  return Shape{input.n, out_channels, conv_extent(input.h, kernel_h, stride, pad, "height", input),
               conv_extent(input.w, kernel_w, stride, pad, "width", input)};
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                              std::span<const T> bias, const ConvSpec& spec) {
  check_weight(input, weight, spec);
  if (bias.size() != spec.out_channels) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) + " != out_channels " +
                     std::to_string(spec.out_channels));
  }
  const Shape os = spec.output_shape(input.shape());
  BasicTensor<T> out(os);

  const std::size_t ckk = input.c() * spec.kernel_h * spec.kernel_w;
  const std::size_t ohw = os.h * os.w;
  const bool direct = is_pointwise(spec);
  AlignedVector<T> col(direct ? 0 : ckk * ohw);

  Eigen::Map<const RowMat<T>> wm(weight.ptr(), static_cast<Eigen::Index>(spec.out_channels),
                                 static_cast<Eigen::Index>(ckk));
  Eigen::Map<const ColVec<T>> bv(bias.data(), static_cast<Eigen::Index>(bias.size()));
  const std::size_t in_stride = input.shape().per_sample();
  for (std::size_t n = 0; n < input.n(); ++n) {
    const T* x = input.ptr() + n * in_stride;
    if (!direct) im2col(x, input.c(), input.h(), input.w(), spec, os.h, os.w, col.data());
    Eigen::Map<const RowMat<T>> xm(direct ? x : col.data(), static_cast<Eigen::Index>(ckk),
                                   static_cast<Eigen::Index>(ohw));
    Eigen::Map<RowMat<T>> ym(out.ptr() + n * os.per_sample(),
                             static_cast<Eigen::Index>(spec.out_channels),
                             static_cast<Eigen::Index>(ohw));
    ym.noalias() = wm * xm;
    ym.colwise() += bv;
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_out, const ConvSpec& spec) {
  check_weight(input, weight, spec);
  const Shape os = spec.output_shape(input.shape());
  if (grad_out.shape() != os) {
    throw ShapeError("conv2d_backward: grad_out shape " + grad_out.shape().str() +
                     " does not match output shape " + os.str());
  }

  ConvGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(weight.shape()),
                 std::vector<T>(spec.out_channels, T(0))};
  const auto oc = static_cast<Eigen::Index>(spec.out_channels);
  const std::size_t ckk = input.c() * spec.kernel_h * spec.kernel_w;
  const std::size_t ohw = os.h * os.w;
  const bool direct = is_pointwise(spec);
  AlignedVector<T> col(direct ? 0 : ckk * ohw);
  AlignedVector<T> gcol(direct ? 0 : ckk * ohw);

  Eigen::Map<const RowMat<T>> wm(weight.ptr(), oc, static_cast<Eigen::Index>(ckk));
  Eigen::Map<RowMat<T>> gw(g.weight.ptr(), oc, static_cast<Eigen::Index>(ckk));
  Eigen::Map<ColVec<T>> gb(g.bias.data(), oc);
  const std::size_t in_stride = input.shape().per_sample();
  for (std::size_t n = 0; n < input.n(); ++n) {
    const T* x = input.ptr() + n * in_stride;
    if (!direct) im2col(x, input.c(), input.h(), input.w(), spec, os.h, os.w, col.data());
    Eigen::Map<const RowMat<T>> xm(direct ? x : col.data(), static_cast<Eigen::Index>(ckk),
                                   static_cast<Eigen::Index>(ohw));
    Eigen::Map<const RowMat<T>> go(grad_out.ptr() + n * os.per_sample(), oc,
                                   static_cast<Eigen::Index>(ohw));
    gw.noalias() += go * xm.transpose();
    for (Eigen::Index o = 0; o < oc; ++o) {
      const T* row = go.data() + o * static_cast<Eigen::Index>(ohw);
      T acc = T(0);
      for (std::size_t k = 0; k < ohw; ++k) acc += row[k];
      gb[o] += acc;
    }
    if (direct) {
      Eigen::Map<RowMat<T>> gi(g.input.ptr() + n * in_stride, static_cast<Eigen::Index>(ckk),
                               static_cast<Eigen::Index>(ohw));
      gi.noalias() = wm.transpose() * go;
    } else {
      Eigen::Map<RowMat<T>> gc(gcol.data(), static_cast<Eigen::Index>(ckk),
                               static_cast<Eigen::Index>(ohw));
      gc.noalias() = wm.transpose() * go;
      col2im(gcol.data(), input.c(), input.h(), input.w(), spec, os.h, os.w,
             g.input.ptr() + n * in_stride);
    }
  }
  return g;
}

template BasicTensor<float> conv2d_forward(const BasicTensor<float>&, const BasicTensor<float>&,
                                           std::span<const float>, const ConvSpec&);
template BasicTensor<double> conv2d_forward(const BasicTensor<double>&,
                                            const BasicTensor<double>&, std::span<const double>,
                                            const ConvSpec&);
template ConvGrads<float> conv2d_backward(const BasicTensor<float>&, const BasicTensor<float>&,
                                          const BasicTensor<float>&, const ConvSpec&);
template ConvGrads<double> conv2d_backward(const BasicTensor<double>&, const BasicTensor<double>&,
                                           const BasicTensor<double>&, const ConvSpec&);

}  // namespace mlctx
