#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mlctx/nn/graph.hpp"
#include "mlctx/nn/params.hpp"

namespace mlctx {

struct TimingReport {
  std::string preset;
  std::size_t batch_size = 0;
  std::size_t repetitions = 0;
  /// Medians over repetitions, warm-up excluded. total = forward + backward.
  double forward_ms = 0;
  double backward_ms = 0;
  double total_ms = 0;
};

struct BenchOptions {
  std::size_t batch_size = 64;
  std::size_t reps = 20;
  std::size_t warmup = 3;
  std::uint64_t seed = 1;
};

/// Train-mode forward and backward wall clock for one batch of random inputs.
TimingReport benchmark(const NetworkGraph& graph, const ParamSet& params, const BenchOptions& options);

struct TimingComparison {
  TimingReport base;
  TimingReport other;
  /// Median of per-repetition other/base ratios, not the ratio of the two medians.
  double forward_ratio = 0;
  double total_ratio = 0;
};

/// Both graphs timed with their passes interleaved, so drift in machine load hits both equally.
TimingComparison compare_timing(const NetworkGraph& base, const ParamSet& base_params,
                                const NetworkGraph& other, const ParamSet& other_params,
                                const BenchOptions& options);

std::string timing_csv_header();
std::string timing_csv_row(const TimingReport& r);

/// Aligned text with Forward / Backward / total columns in ms.
std::string timing_table(const std::vector<TimingReport>& rows);

}  // namespace mlctx
