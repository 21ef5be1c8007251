#include <limits>

#include "mlctx/tensor/ops.hpp"

namespace mlctx {

Shape PoolSpec::output_shape(const Shape& input) const {
  if (kernel == 0 || stride == 0) throw ShapeError("maxpool2d: kernel and stride must be >= 1");
  if (pad >= kernel) throw ShapeError("maxpool2d: pad must be smaller than the kernel");
  if (kernel > input.h + 2 * pad || kernel > input.w + 2 * pad) {
    throw ShapeError("maxpool2d: kernel " + std::to_string(kernel) + " larger than input " +
                     input.str());
  }
  return Shape{input.n, input.c, (input.h + 2 * pad - kernel) / stride + 1,
               (input.w + 2 * pad - kernel) / stride + 1};
}

template <typename T>
PoolResult<T> maxpool2d(const BasicTensor<T>& input, const PoolSpec& spec) {
  const Shape is = input.shape();
  const Shape os = spec.output_shape(is);
  PoolResult<T> r{BasicTensor<T>(os), std::vector<std::size_t>(os.size())};
  const auto pad = static_cast<std::ptrdiff_t>(spec.pad);
  const auto ih_max = static_cast<std::ptrdiff_t>(is.h);
  const auto iw_max = static_cast<std::ptrdiff_t>(is.w);

  std::size_t o = 0;
  for (std::size_t plane = 0; plane < is.n * is.c; ++plane) {
    const std::size_t base = plane * is.h * is.w;
    const T* src = input.ptr() + base;
    for (std::size_t oh = 0; oh < os.h; ++oh) {
      const auto h0 = static_cast<std::ptrdiff_t>(oh * spec.stride) - pad;
      const auto h_lo = std::max<std::ptrdiff_t>(h0, 0);
      const auto h_hi = std::min<std::ptrdiff_t>(h0 + static_cast<std::ptrdiff_t>(spec.kernel), ih_max);
      for (std::size_t ow = 0; ow < os.w; ++ow, ++o) {
        const auto w0 = static_cast<std::ptrdiff_t>(ow * spec.stride) - pad;
        const auto w_lo = std::max<std::ptrdiff_t>(w0, 0);
        const auto w_hi = std::min<std::ptrdiff_t>(w0 + static_cast<std::ptrdiff_t>(spec.kernel), iw_max);
        // Scan in increasing linear order; strict '>' keeps the lowest index on ties.
        std::size_t best = static_cast<std::size_t>(h_lo * iw_max + w_lo);
        T best_v = src[best];
        for (auto ih = h_lo; ih < h_hi; ++ih) {
          for (auto iw = w_lo; iw < w_hi; ++iw) {
            const auto idx = static_cast<std::size_t>(ih * iw_max + iw);
            if (src[idx] > best_v) {
              best_v = src[idx];
              best = idx;
            }
          }
        }
        r.output[o] = best_v;
        r.argmax[o] = base + best;
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_out,
                                  std::span<const std::size_t> argmax, const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("maxpool2d_backward: argmax length " + std::to_string(argmax.size()) +
                     " does not match grad_out " + grad_out.shape().str());
  }
  BasicTensor<T> gi(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) gi[argmax[i]] += grad_out[i];
  return gi;
}

template <typename T>
BasicTensor<T> avgpool_global(const BasicTensor<T>& input) {
  const Shape is = input.shape();
  BasicTensor<T> out(Shape{is.n, is.c, 1, 1});
  const std::size_t hw = is.spatial();
  for (std::size_t p = 0; p < is.n * is.c; ++p) {
    const T* src = input.ptr() + p * hw;
    T acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += src[i];
    out[p] = acc / static_cast<T>(hw);
  }
  return out;
}

template <typename T>
BasicTensor<T> avgpool_global_backward(const BasicTensor<T>& grad_out, const Shape& input_shape) {
  if (grad_out.shape() != Shape{input_shape.n, input_shape.c, 1, 1}) {
    throw ShapeError("avgpool_global_backward: grad_out " + grad_out.shape().str() +
                     " does not match input " + input_shape.str());
  }
  BasicTensor<T> gi(input_shape);
  const std::size_t hw = input_shape.spatial();
  for (std::size_t p = 0; p < input_shape.n * input_shape.c; ++p) {
    const T g = grad_out[p] / static_cast<T>(hw);
    std::fill(gi.ptr() + p * hw, gi.ptr() + (p + 1) * hw, g);
  }
  return gi;
}

template PoolResult<float> maxpool2d(const BasicTensor<float>&, const PoolSpec&);
template PoolResult<double> maxpool2d(const BasicTensor<double>&, const PoolSpec&);
template BasicTensor<float> maxpool2d_backward(const BasicTensor<float>&,
                                               std::span<const std::size_t>, const Shape&);
template BasicTensor<double> maxpool2d_backward(const BasicTensor<double>&,
                                                std::span<const std::size_t>, const Shape&);
template BasicTensor<float> avgpool_global(const BasicTensor<float>&);
template BasicTensor<double> avgpool_global(const BasicTensor<double>&);
template BasicTensor<float> avgpool_global_backward(const BasicTensor<float>&, const Shape&);
template BasicTensor<double> avgpool_global_backward(const BasicTensor<double>&, const Shape&);

}  // namespace mlctx
