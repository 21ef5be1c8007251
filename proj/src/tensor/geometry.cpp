#include <algorithm>
#include <cstring>

#include "mlctx/tensor/ops.hpp"

namespace mlctx {

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape first = inputs.front()->shape();
  std::size_t channels = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Shape& s = inputs[i]->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: input " + std::to_string(i) + " has shape " + s.str() +
                       ", incompatible with input 0 shape " + first.str());
    }
    channels += s.c;
  }
  BasicTensor<T> out(Shape{first.n, channels, first.h, first.w});
  const std::size_t hw = first.spatial();
  T* dst = out.ptr();
  for (std::size_t n = 0; n < first.n; ++n) {
    for (const auto* in : inputs) {
      const std::size_t block = in->c() * hw;
      std::memcpy(dst, in->ptr() + n * block, block * sizeof(T));
      dst += block;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, std::size_t begin, std::size_t count) {
  const Shape s = input.shape();
  if (count == 0 || begin + count > s.c) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + s.str());
  }
  BasicTensor<T> out(Shape{s.n, count, s.h, s.w});
  const std::size_t hw = s.spatial();
  for (std::size_t n = 0; n < s.n; ++n) {
    std::memcpy(out.ptr() + n * count * hw, input.ptr() + (n * s.c + begin) * hw,
                count * hw * sizeof(T));
  }
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& input,
                                           std::span<const std::size_t> widths) {
  std::size_t total = 0;
  for (auto w : widths) total += w;
  if (total != input.c()) {
    throw ShapeError("split_channels: widths sum to " + std::to_string(total) + " but input is " +
                     input.shape().str());
  }
  std::vector<BasicTensor<T>> parts;
  parts.reserve(widths.size());
  std::size_t begin = 0;
  for (auto w : widths) {
    parts.push_back(slice_channels(input, begin, w));
    begin += w;
  }
  return parts;
}

template <typename T>
BasicTensor<T> crop(const BasicTensor<T>& input, std::size_t top, std::size_t left,
                    std::size_t height, std::size_t width) {
  const Shape s = input.shape();
  if (height == 0 || width == 0 || top + height > s.h || left + width > s.w) {
    throw ShapeError("crop: window (top " + std::to_string(top) + ", left " +
                     std::to_string(left) + ", " + std::to_string(height) + "x" +
                     std::to_string(width) + ") outside " + s.str());
  }
  BasicTensor<T> out(Shape{s.n, s.c, height, width});
  T* dst = out.ptr();
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    const T* plane = input.ptr() + p * s.spatial();
    for (std::size_t y = 0; y < height; ++y) {
      std::memcpy(dst, plane + (top + y) * s.w + left, width * sizeof(T));
      dst += width;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> mirror_h(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  const std::size_t w = input.w();
  for (std::size_t row = 0; row < input.size() / w; ++row) {
    T* r = out.ptr() + row * w;
    std::reverse(r, r + w);
  }
  return out;
}

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

// Corner-aligned source coordinates for each output position along one axis.
std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double src = out == 1 ? 0.5 * static_cast<double>(in - 1)
                                : static_cast<double>(i) * static_cast<double>(in - 1) /
                                      static_cast<double>(out - 1);
    auto lo = static_cast<std::size_t>(src);
    if (lo >= in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = Tap{lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& input, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ShapeError("resize_bilinear: target dims must be >= 1");
  const Shape s = input.shape();
  if (out_h == s.h && out_w == s.w) return input;
  const auto ty = bilinear_taps(s.h, out_h);
  const auto tx = bilinear_taps(s.w, out_w);
  BasicTensor<T> out(Shape{s.n, s.c, out_h, out_w});
  T* dst = out.ptr();
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    const T* plane = input.ptr() + p * s.spatial();
    for (const auto& y : ty) {
      const T* r0 = plane + y.lo * s.w;
      const T* r1 = plane + y.hi * s.w;
      const T fy = static_cast<T>(y.frac);
      for (const auto& x : tx) {
        const T fx = static_cast<T>(x.frac);
        const T top = r0[x.lo] + (r0[x.hi] - r0[x.lo]) * fx;
        const T bottom = r1[x.lo] + (r1[x.hi] - r1[x.lo]) * fx;
        *dst++ = top + (bottom - top) * fy;
      }
    }
  }
  return out;
}

#define MLCTX_INSTANTIATE_GEOMETRY(T)                                                           \
  template BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const>);              \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::size_t, std::size_t);      \
  template std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>&,                    \
                                                      std::span<const std::size_t>);            \
  template BasicTensor<T> crop(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t,    \
                               std::size_t);                                                    \
  template BasicTensor<T> mirror_h(const BasicTensor<T>&);                                      \
  template BasicTensor<T> resize_bilinear(const BasicTensor<T>&, std::size_t, std::size_t);

MLCTX_INSTANTIATE_GEOMETRY(float)
MLCTX_INSTANTIATE_GEOMETRY(double)

#undef MLCTX_INSTANTIATE_GEOMETRY

}  // namespace mlctx
