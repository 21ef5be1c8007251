#pragma once

// Independent reference implementations used only by tests.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mlctx/tensor/tensor.hpp"

namespace mlctx::testing {

/// Naive direct convolution: out[n][o][y][x] = b[o] + sum w[o][c][i][j] * in[n][c][y*s+i-p][x*s+j-p].
template <typename T>
BasicTensor<T> naive_conv(const BasicTensor<T>& in, const BasicTensor<T>& w, const std::vector<T>& b,
                          std::size_t stride, std::size_t pad) {
  const auto oh = (in.h() + 2 * pad - w.h()) / stride + 1;
  const auto ow = (in.w() + 2 * pad - w.w()) / stride + 1;
  BasicTensor<T> out(Shape{in.n(), w.n(), oh, ow});
  for (std::size_t n = 0; n < in.n(); ++n)
    for (std::size_t o = 0; o < w.n(); ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = b[o];
          for (std::size_t c = 0; c < in.c(); ++c)
            for (std::size_t i = 0; i < w.h(); ++i)
              for (std::size_t j = 0; j < w.w(); ++j) {
                const long iy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
                const long ix = static_cast<long>(x * stride + j) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(in.h()) || ix >= static_cast<long>(in.w()))
                  continue;
                acc += static_cast<double>(w(o, c, i, j)) *
                       static_cast<double>(in(n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)));
              }
          out(n, o, y, x) = static_cast<T>(acc);
        }
  return out;
}

/// Nested-loop max over each window (no padding).
template <typename T>
BasicTensor<T> naive_maxpool(const BasicTensor<T>& in, std::size_t k, std::size_t s) {
  const auto oh = (in.h() - k) / s + 1;
  const auto ow = (in.w() - k) / s + 1;
  BasicTensor<T> out(Shape{in.n(), in.c(), oh, ow});
  for (std::size_t n = 0; n < in.n(); ++n)
    for (std::size_t c = 0; c < in.c(); ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          T m = in(n, c, y * s, x * s);
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) m = std::max(m, in(n, c, y * s + i, x * s + j));
          out(n, c, y, x) = m;
        }
  return out;
}

template <typename T>
BasicTensor<T> random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(s);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = static_cast<T>(d(rng));
  return t;
}

/// Max relative error between an analytic gradient and central differences of
/// L(x) = sum(r * f(x)). The difference is accumulated term by term in double so the
/// large common part of L cancels exactly. Denominator floored at `floor`.
template <typename T>
double fd_max_rel_error(BasicTensor<T> x, const std::function<BasicTensor<T>(const BasicTensor<T>&)>& f,
                        const BasicTensor<T>& r, const BasicTensor<T>& analytic, double eps,
                        double floor) {
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T saved = x[i];
    x[i] = static_cast<T>(saved + eps);
    const auto up = f(x);
    x[i] = static_cast<T>(saved - eps);
    const auto down = f(x);
    x[i] = saved;
    double diff = 0;
    for (std::size_t k = 0; k < up.size(); ++k)
      diff += static_cast<double>(r[k]) * (static_cast<double>(up[k]) - static_cast<double>(down[k]));
    const double step = static_cast<double>(static_cast<T>(saved + eps)) -
                        static_cast<double>(static_cast<T>(saved - eps));
    const double numeric = diff / step;
    const double a = analytic[i];
    worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor}));
  }
  return worst;
}

}  // namespace mlctx::testing
