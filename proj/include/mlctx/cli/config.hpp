#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mlctx/arch/presets.hpp"
#include "mlctx/data/augment.hpp"
#include "mlctx/optim/sgd.hpp"

namespace mlctx {

/// Everything a command needs. Built from family defaults, then a key=value config file, then
/// command-line flags (same key names), in that order of precedence.
struct RunConfig {
  std::string preset = "alexnet-mini";
  TrainConfig train;
  double aux_weight = 0.0;
  /// "default", "gaussian" or "normalized".
  std::string init = "default";

  /// "synthetic" or a cifar-10-batches-bin directory.
  std::string data = "synthetic";
  std::size_t train_size = 5000;
  std::size_t val_size = 1000;
  /// Keep only the first `classes` classes (0 keeps all).
  std::size_t classes = 0;

  /// Zero keeps the scale default (mini 36/32, full 256 and the preset's input size).
  std::size_t base_size = 0;
  std::size_t crop_size = 0;
  /// Multiplier on mean-subtracted pixels; zero keeps the scale default.
  double pixel_scale = 0.0;
  CropPlan crop_plan = CropPlan::mini_default();

  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "runs/out";
  /// "single" or "double".
  std::string precision = "single";

  std::size_t log_every = 10;
  /// Checkpoint cadence in epochs.
  std::size_t checkpoint_every = 1;
  /// Validation cadence in epochs (0 disables intermediate validation).
  std::size_t val_every = 1;
  std::size_t eval_batch = 100;

  std::filesystem::path checkpoint;
  /// center, multi or both.
  std::string eval_mode = "center";

  std::vector<std::string> bench_presets{"alexnet-mini", "alexnet-mini++"};
  std::size_t bench_batch = 64;
  std::size_t bench_reps = 20;

  std::vector<std::size_t> prestudy_classes{10};
  std::size_t trunk_epochs = 10;
  std::size_t head_epochs = 30;
  std::size_t head_hidden = 256;

  /// Family defaults for `preset` (training hyperparameters, aux weight, crop plan).
  static RunConfig defaults_for(const std::string& preset);

  /// Applies one key=value setting. Throws std::invalid_argument on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  void load_file(const std::filesystem::path& file);

  /// Seed present, data paths exist, hyperparameters valid.
  void validate() const;
  std::uint64_t require_seed() const;

  ArchPreset arch(std::size_t num_classes) const;
  InitPolicy init_policy(const ArchPreset& preset) const;
  Preprocess preprocess(const ArchPreset& preset, std::vector<double> mean) const;

  /// Settings in key=value form, one per line, sorted by key.
  std::string dump() const;

  std::map<std::string, std::string> as_map() const;
};

Schedule parse_schedule(const std::string& text);
std::string schedule_string(const Schedule& s);

}  // namespace mlctx
