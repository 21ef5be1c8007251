#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mlctx/arch/shapes.hpp"
#include "mlctx/cli/config.hpp"
#include "mlctx/data/dataset.hpp"
#include "mlctx/eval/bench.hpp"
#include "mlctx/eval/metrics.hpp"

namespace mlctx {

struct DataSplits {
  Dataset train;
  Dataset val;
  std::size_t num_classes = 10;
};

/// Train/validation splits named by the config: the synthetic generator (fixed data seeds, so
/// every run seed sees the same images) or the first train_size / val_size images of the CIFAR-10
/// train and test batches, optionally restricted to the first `classes` classes.
DataSplits load_splits(const RunConfig& config);

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::size_t iter, double loss)
      : std::runtime_error("non-finite loss " + std::to_string(loss) + " at iteration " + std::to_string(iter)),
        iter_(iter) {}
  std::size_t iteration() const { return iter_; }

 private:
  std::size_t iter_;
};

/// Supplies the input batch for a set of sample indices during epoch `epoch`.
using BatchFn = std::function<Tensor(std::span<const std::size_t> indices, std::size_t epoch)>;

struct FitHooks {
  /// Called for every iteration with (iter, epoch, lr, loss) before the update is applied.
  std::function<void(std::size_t, std::size_t, double, double)> on_iteration;
  /// Called after each completed epoch with (epoch, iterations done so far).
  std::function<void(std::size_t, std::size_t)> on_epoch;
};

struct FitStats {
  std::size_t iterations = 0;
  std::size_t max_iter = 0;
  double final_loss = 0;
  double seconds = 0;
  double seconds_per_iter = 0;
  /// Robust to scheduler bursts on a shared core.
  double median_seconds_per_iter = 0;
};

/// SGD epoch loop: shuffle (seeded per epoch), batch, forward (train), backward, sgd_step with
/// lr_at. Stops at max_iter (epochs * iterations per epoch when zero). Throws NonFiniteLoss or
/// NonFiniteGradient before touching the parameters of the failing step.
template <typename T>
FitStats fit(const NetworkGraph& graph, BasicParamSet<T>& params, std::span<const int> labels,
             const BatchFn& batch, const TrainConfig& config, double aux_weight, std::uint64_t seed,
             const FitHooks& hooks = {});

struct TrainResult {
  ArchPreset preset;
  NetworkGraph graph;
  ParamSet params;
  Preprocess preprocess;
  FitStats stats;
  EvalReport val;
  std::filesystem::path log;
  std::filesystem::path checkpoint;
};

/// Writes <out>/train_log.csv (kind,iter,epoch,lr,loss,val_top1), <out>/checkpoint.mlck every
/// checkpoint_every epochs and at the end, and <out>/config.txt.
TrainResult cmd_train(const RunConfig& config, std::ostream& msg);

/// Writes <out>/eval.csv and <out>/eval.txt for the requested modes.
std::vector<EvalReport> cmd_eval(const RunConfig& config, std::ostream& msg);

struct ShapesResult {
  ShapeTable table;
  /// Empty when the preset has no reference table or when it matches.
  std::vector<std::string> diff;
  bool has_reference = false;
};

ShapesResult cmd_shapes(const std::string& preset, std::ostream& msg);

/// First preset is the baseline; every other preset is timed against it, interleaved.
/// Writes <out>/bench.csv and <out>/bench.txt.
std::vector<TimingComparison> cmd_bench(const RunConfig& config, std::ostream& msg);

struct PrestudyRow {
  std::size_t classes = 0;
  std::string variant;
  std::size_t feature_dim = 0;
  double final_train_loss = 0;
  double val_top1 = 0;
};

/// Trains a mini-AlexNet trunk, freezes it, and for each class-subset size trains a 3-layer FC
/// head on relu5 features, on L2-normalized relu4 + relu5, and on raw relu4 + relu5.
/// Writes <out>/prestudy.csv and <out>/prestudy.txt.
std::vector<PrestudyRow> cmd_prestudy(const RunConfig& config, std::ostream& msg);

std::string prestudy_table(const std::vector<PrestudyRow>& rows);

}  // namespace mlctx
