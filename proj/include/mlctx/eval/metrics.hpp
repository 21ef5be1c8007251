#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlctx/data/augment.hpp"
#include "mlctx/data/dataset.hpp"
#include "mlctx/nn/graph.hpp"
#include "mlctx/nn/params.hpp"

namespace mlctx {

/// Fraction of rows (row-major, `num_classes` wide) whose label is among the k largest
/// entries; ties go to the lower class index.
double topk_accuracy(std::span<const double> probs, std::size_t num_classes, std::span<const int> labels,
                     std::size_t k);

/// Rank of `label` in `row` under the same tie rule (0 = top-1).
std::size_t label_rank(std::span<const double> row, int label);

/// Arithmetic mean in list order. Each vector must sum to 1 within 1e-4.
std::vector<double> average_probs(const std::vector<std::vector<double>>& crop_probs);

enum class EvalMode { center_crop, multi_crop };
std::string to_string(EvalMode mode);

struct EvalReport {
  std::string preset;
  EvalMode mode = EvalMode::center_crop;
  std::size_t num_samples = 0;
  double top1 = 0;
  double top5 = 0;
  /// k used for the "top-5" column (smaller when the task has fewer classes).
  std::size_t top5_k = 5;
  std::size_t forward_passes = 0;
  std::vector<double> per_class_accuracy;
};

struct EvalOptions {
  EvalMode mode = EvalMode::center_crop;
  CropPlan plan = CropPlan::mini_default();
  std::size_t batch_size = 64;
};

/// Infer-mode evaluation. centre: one preprocess_center crop per image. multi: every crop of
/// `plan` on the normalized image, probabilities averaged in crop order.
EvalReport evaluate(const NetworkGraph& graph, const ParamSet& params, const Dataset& data,
                    const Preprocess& pp, const EvalOptions& options);

/// Main-head probabilities (N x classes, row-major, widened to double) for a prepared batch.
std::vector<double> predict(const NetworkGraph& graph, const ParamSet& params, const Tensor& batch);

std::string eval_csv_header();
std::string eval_csv_row(const EvalReport& r);

/// Aligned text: one row per network, centre-crop and multi-crop top-1/top-5 columns, and
/// signed deltas of each row against the first.
std::string eval_table(const std::vector<std::pair<EvalReport, std::optional<EvalReport>>>& rows);

}  // namespace mlctx
