#include "mlctx/nn/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <random>

namespace mlctx {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape " + a.str() + " != " + b.str());
}

}  // namespace

void check_labels(std::span<const int> labels, std::size_t batch, std::size_t num_classes) {
  if (labels.size() != batch) {
    throw std::invalid_argument("expected " + std::to_string(batch) + " labels, got " +
                                std::to_string(labels.size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw std::out_of_range("label " + std::to_string(labels[i]) + " at sample " +
                              std::to_string(i) + " outside [0, " + std::to_string(num_classes) +
                              ")");
    }
  }
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out) {
  require_same(input.shape(), grad_out.shape(), "relu_backward");
  BasicTensor<T> gi(input.shape());
  for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = input[i] > T(0) ? grad_out[i] : T(0);
  return gi;
}

template <typename T>
BasicTensor<T> tanh_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (auto& v : out.data()) v = std::tanh(v);
  return out;
}

template <typename T>
BasicTensor<T> tanh_backward(const BasicTensor<T>& output, const BasicTensor<T>& grad_out) {
  require_same(output.shape(), grad_out.shape(), "tanh_backward");
  BasicTensor<T> gi(output.shape());
  for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = grad_out[i] * (T(1) - output[i] * output[i]);
  return gi;
}

template <typename T>
LrnResult<T> lrn(const BasicTensor<T>& input, std::size_t depth_n, double alpha, double k,
                 double beta) {
  if (depth_n == 0 || depth_n % 2 == 0) throw std::invalid_argument("lrn: depth_n must be odd");
  const Shape s = input.shape();
  LrnResult<T> r{BasicTensor<T>(s), BasicTensor<T>(s)};
  const std::size_t hw = s.spatial();
  const std::size_t half = depth_n / 2;
  const T coeff = static_cast<T>(alpha / static_cast<double>(depth_n));
  std::vector<T> sq(s.c * hw);
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* a = input.ptr() + n * s.per_sample();
    for (std::size_t i = 0; i < s.c * hw; ++i) sq[i] = a[i] * a[i];
    T* sc = r.scale.ptr() + n * s.per_sample();
    T* out = r.output.ptr() + n * s.per_sample();
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t lo = c >= half ? c - half : 0;
      const std::size_t hi = std::min(s.c - 1, c + half);
      T* dst = sc + c * hw;
      std::fill(dst, dst + hw, T(0));
      for (std::size_t j = lo; j <= hi; ++j) {
        const T* src = sq.data() + j * hw;
        for (std::size_t p = 0; p < hw; ++p) dst[p] += src[p];
      }
      for (std::size_t p = 0; p < hw; ++p) {
        dst[p] = static_cast<T>(k) + coeff * dst[p];
        out[c * hw + p] = a[c * hw + p] * std::pow(dst[p], static_cast<T>(-beta));
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> lrn_backward(const BasicTensor<T>& input, const LrnResult<T>& fwd,
                            const BasicTensor<T>& grad_out, const LrnParams& p) {
  require_same(input.shape(), grad_out.shape(), "lrn_backward");
  const Shape s = input.shape();
  BasicTensor<T> gi(s);
  const std::size_t hw = s.spatial();
  const std::size_t half = p.size / 2;
  const T coeff = static_cast<T>(2.0 * p.alpha * p.beta / static_cast<double>(p.size));
  std::vector<T> t(s.c * hw);
  for (std::size_t n = 0; n < s.n; ++n) {
    const std::size_t off = n * s.per_sample();
    const T* a = input.ptr() + off;
    const T* b = fwd.output.ptr() + off;
    const T* sc = fwd.scale.ptr() + off;
    const T* g = grad_out.ptr() + off;
    T* dst = gi.ptr() + off;
    for (std::size_t i = 0; i < s.c * hw; ++i) t[i] = g[i] * b[i] / sc[i];
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t lo = c >= half ? c - half : 0;
      const std::size_t hi = std::min(s.c - 1, c + half);
      for (std::size_t q = 0; q < hw; ++q) {
        T acc = 0;
        for (std::size_t j = lo; j <= hi; ++j) acc += t[j * hw + q];
        const std::size_t i = c * hw + q;
        dst[i] = g[i] * std::pow(sc[i], static_cast<T>(-p.beta)) - coeff * a[i] * acc;
      }
    }
  }
  return gi;
}

template <typename T>
BasicTensor<T> l2_normalize(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (std::size_t n = 0; n < input.n(); ++n) {
    auto x = out.sample(n);
    T ss = 0;
    for (T v : x) ss += v * v;
    if (ss == T(0)) continue;
    const T inv = T(1) / std::sqrt(ss);
    for (T& v : x) v *= inv;
  }
  return out;
}

template <typename T>
BasicTensor<T> l2_normalize_backward(const BasicTensor<T>& input, const BasicTensor<T>& output,
                                     const BasicTensor<T>& grad_out) {
  require_same(input.shape(), grad_out.shape(), "l2_normalize_backward");
  BasicTensor<T> gi(input.shape());
  for (std::size_t n = 0; n < input.n(); ++n) {
    auto x = input.sample(n);
    auto y = output.sample(n);
    auto g = grad_out.sample(n);
    auto d = gi.sample(n);
    T ss = 0;
    for (T v : x) ss += v * v;
    if (ss == T(0)) {
      std::copy(g.begin(), g.end(), d.begin());
      continue;
    }
    const T norm = std::sqrt(ss);
    T dot = 0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * g[i];
    for (std::size_t i = 0; i < y.size(); ++i) d[i] = (g[i] - y[i] * dot) / norm;
  }
  return gi;
}

template <typename T>
BasicTensor<T> dropout_mask(const Shape& shape, double keep, std::uint64_t seed) {
  if (!(keep > 0.0 && keep <= 1.0)) throw std::invalid_argument("dropout keep must be in (0, 1]");
  BasicTensor<T> mask(shape);
  std::mt19937_64 rng(seed);
  const T scale = static_cast<T>(1.0 / keep);
  for (auto& m : mask.data()) {
    // 53 uniform bits; platform-independent unlike std::uniform_real_distribution.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u < keep ? scale : T(0);
  }
  return mask;
}

template <typename T>
BasicTensor<T> fc_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                          std::span<const T> bias) {
  const std::size_t in = input.shape().per_sample();
  const std::size_t out = weight.n();
  if (weight.shape() != Shape{out, in, 1, 1} || bias.size() != out) {
    throw ShapeError("fc: weight " + weight.shape().str() + " / bias " +
                     std::to_string(bias.size()) + " incompatible with input " +
                     input.shape().str());
  }
  BasicTensor<T> y(Shape{input.n(), out, 1, 1});
  const auto n = static_cast<Eigen::Index>(input.n());
  Eigen::Map<const RowMat<T>> x(input.ptr(), n, static_cast<Eigen::Index>(in));
  Eigen::Map<const RowMat<T>> w(weight.ptr(), static_cast<Eigen::Index>(out),
                                static_cast<Eigen::Index>(in));
  Eigen::Map<const RowVec<T>> b(bias.data(), static_cast<Eigen::Index>(out));
  Eigen::Map<RowMat<T>> ym(y.ptr(), n, static_cast<Eigen::Index>(out));
  ym.noalias() = x * w.transpose();
  ym.rowwise() += b;
  return y;
}

template <typename T>
FcGrads<T> fc_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                       const BasicTensor<T>& grad_out) {
  const std::size_t in = input.shape().per_sample();
  const std::size_t out = weight.n();
  if (grad_out.shape() != Shape{input.n(), out, 1, 1}) {
    throw ShapeError("fc_backward: grad_out " + grad_out.shape().str() + " does not match " +
                     std::to_string(input.n()) + "x" + std::to_string(out) + "x1x1");
  }
  FcGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(weight.shape()),
               std::vector<T>(out, T(0))};
  const auto n = static_cast<Eigen::Index>(input.n());
  const auto ei = static_cast<Eigen::Index>(in);
  const auto eo = static_cast<Eigen::Index>(out);
  Eigen::Map<const RowMat<T>> x(input.ptr(), n, ei);
  Eigen::Map<const RowMat<T>> w(weight.ptr(), eo, ei);
  Eigen::Map<const RowMat<T>> go(grad_out.ptr(), n, eo);
  Eigen::Map<RowMat<T>>(g.weight.ptr(), eo, ei).noalias() = go.transpose() * x;
  for (std::size_t i = 0; i < input.n(); ++i)
    for (std::size_t o = 0; o < out; ++o) g.bias[o] += grad_out[i * out + o];
  Eigen::Map<RowMat<T>>(g.input.ptr(), n, ei).noalias() = go * w;
  return g;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  BasicTensor<T> p = logits;
  for (std::size_t n = 0; n < p.n(); ++n) {
    auto row = p.sample(n);
    T mx = row[0];
    for (T v : row) mx = std::max(mx, v);
    T sum = 0;
    for (T& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (T& v : row) v /= sum;
  }
  return p;
}

template <typename T>
double softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  check_labels(labels, logits.n(), logits.shape().per_sample());
  double total = 0;
  for (std::size_t n = 0; n < logits.n(); ++n) {
    auto row = logits.sample(n);
    double mx = row[0];
    for (T v : row) mx = std::max(mx, static_cast<double>(v));
    double sum = 0;
    for (T v : row) sum += std::exp(static_cast<double>(v) - mx);
    total += mx + std::log(sum) - static_cast<double>(row[static_cast<std::size_t>(labels[n])]);
  }
  return total / static_cast<double>(logits.n());
}

template <typename T>
double cross_entropy(const BasicTensor<T>& probs, std::span<const int> labels) {
  check_labels(labels, probs.n(), probs.shape().per_sample());
  double total = 0;
  for (std::size_t n = 0; n < probs.n(); ++n) {
    const double p = probs.sample(n)[static_cast<std::size_t>(labels[n])];
    total -= std::log(std::max(p, 1e-12));
  }
  return total / static_cast<double>(probs.n());
}

#define MLCTX_INSTANTIATE_LAYERS(T)                                                            \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                 \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> tanh_forward(const BasicTensor<T>&);                                 \
  template BasicTensor<T> tanh_backward(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template LrnResult<T> lrn(const BasicTensor<T>&, std::size_t, double, double, double);       \
  template BasicTensor<T> lrn_backward(const BasicTensor<T>&, const LrnResult<T>&,             \
                                       const BasicTensor<T>&, const LrnParams&);               \
  template BasicTensor<T> l2_normalize(const BasicTensor<T>&);                                 \
  template BasicTensor<T> l2_normalize_backward(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                                const BasicTensor<T>&);                        \
  template BasicTensor<T> dropout_mask(const Shape&, double, std::uint64_t);                   \
  template BasicTensor<T> fc_forward(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                     std::span<const T>);                                      \
  template FcGrads<T> fc_backward(const BasicTensor<T>&, const BasicTensor<T>&,                \
                                  const BasicTensor<T>&);                                      \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                      \
  template double softmax_cross_entropy(const BasicTensor<T>&, std::span<const int>);          \
  template double cross_entropy(const BasicTensor<T>&, std::span<const int>);

MLCTX_INSTANTIATE_LAYERS(float)
MLCTX_INSTANTIATE_LAYERS(double)

#undef MLCTX_INSTANTIATE_LAYERS

}  // namespace mlctx
