#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "mlctx/nn/executor.hpp"

namespace mlctx {

struct GradCheckOptions {
  /// Denominator floor: error_i = |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-4;
  /// Above this many scalars a deterministic subsample of this size is checked.
  std::size_t max_checked = 10000;
  double aux_weight = 0.0;
  std::uint64_t seed = 1;
  /// Also check d(loss)/d(input).
  bool include_input = false;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::string worst;
};

/// Central differences of `loss` w.r.t. each selected coordinate of `theta`, compared with
/// `analytic`. `loss` must read `theta` afresh on every call.
GradCheckReport compare_central_differences(const std::function<double()>& loss,
                                            std::span<double> theta,
                                            std::span<const double> analytic, double eps,
                                            const GradCheckOptions& opts,
                                            const std::string& label = "theta");

/// Analytic gradients of the graph loss against central differences
/// (f(theta + eps) - f(theta - eps)) / (2 eps) on every parameter. Double precision only.
GradCheckReport grad_check(const NetworkGraph& graph, ParamSetD& params, const TensorD& input,
                           std::span<const int> labels, double eps,
                           const GradCheckOptions& opts = {});

}  // namespace mlctx
