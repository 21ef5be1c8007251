#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace mlctx {

enum class Precision { single, double_ };

inline const char* to_string(Precision p) { return p == Precision::single ? "single" : "double"; }

/// Rank-4 extent in (N, C, H, W) order.
struct Shape {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t size() const { return n * c * h * w; }
  std::size_t per_sample() const { return c * h * w; }
  std::size_t spatial() const { return h * w; }
  bool valid() const { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// 64-byte aligned storage so vectorized kernels see the same alignment on every run and
/// floating-point reductions group identically.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major NCHW array (W fastest). All four dims are at least one.
template <typename T>
class BasicTensor {
  static_assert(std::is_floating_point_v<T>, "tensor scalars are float or double");

 public:
  using value_type = T;

  BasicTensor() : BasicTensor(Shape{}) {}

  explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(shape) {
    if (!shape_.valid()) throw ShapeError("tensor dims must be >= 1, got " + shape_.str());
    data_.assign(shape_.size(), fill);
  }

  BasicTensor(Shape shape, const std::vector<T>& data)
      : BasicTensor(shape, AlignedVector<T>(data.begin(), data.end())) {}

  BasicTensor(Shape shape, AlignedVector<T> data) : shape_(shape), data_(std::move(data)) {
    if (!shape_.valid()) throw ShapeError("tensor dims must be >= 1, got " + shape_.str());
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  static constexpr Precision precision() {
    return std::is_same_v<T, float> ? Precision::single : Precision::double_;
  }

  const Shape& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }

  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T> vec() const { return std::vector<T>(data_.begin(), data_.end()); }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[index(n, c, h, w)];
  }
  T operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[index(n, c, h, w)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  std::span<T> sample(std::size_t i) {
    return std::span<T>(data_).subspan(i * shape_.per_sample(), shape_.per_sample());
  }
  std::span<const T> sample(std::size_t i) const {
    return std::span<const T>(data_).subspan(i * shape_.per_sample(), shape_.per_sample());
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  /// Same data, new extent of equal element count.
  BasicTensor reshaped(Shape shape) const {
    if (shape.size() != shape_.size()) {
      throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    }
    return BasicTensor(shape, data_);
  }

  /// Copy of samples [begin, begin + count).
  BasicTensor batch_slice(std::size_t begin, std::size_t count) const {
    if (count == 0 || begin + count > shape_.n) {
      throw ShapeError("batch slice [" + std::to_string(begin) + ", " +
                       std::to_string(begin + count) + ") outside " + shape_.str());
    }
    const auto ps = shape_.per_sample();
    AlignedVector<T> out(data_.begin() + begin * ps, data_.begin() + (begin + count) * ps);
    return BasicTensor(Shape{count, shape_.c, shape_.h, shape_.w}, std::move(out));
  }

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, AlignedVector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Stacks single-sample tensors of identical (C, H, W) into one batch.
template <typename T>
BasicTensor<T> stack_batch(std::span<const BasicTensor<T>> samples) {
  if (samples.empty()) throw ShapeError("stack_batch needs at least one sample");
  Shape s = samples.front().shape();
  std::vector<T> data;
  data.reserve(s.per_sample() * samples.size() * s.n);
  std::size_t n = 0;
  for (const auto& t : samples) {
    const auto& ts = t.shape();
    if (ts.c != s.c || ts.h != s.h || ts.w != s.w) {
      throw ShapeError("stack_batch: sample " + ts.str() + " does not match " + s.str());
    }
    data.insert(data.end(), t.data().begin(), t.data().end());
    n += ts.n;
  }
  s.n = n;
  return BasicTensor<T>(s, std::move(data));
}

}  // namespace mlctx
