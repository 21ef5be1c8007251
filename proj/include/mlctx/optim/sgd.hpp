#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlctx/nn/params.hpp"

namespace mlctx {

struct Schedule {
  enum class Kind { step, poly };
  Kind kind = Kind::step;
  /// step: lr is divided by `divisor` at every milestone epoch that has been reached.
  double divisor = 10.0;
  std::vector<std::size_t> milestones{30, 60};
  /// poly: lr = base * (1 - iter / max_iter)^power
  double power = 0.5;

  static Schedule step(double divisor, std::vector<std::size_t> milestones);
  static Schedule poly(double power);

  void validate() const;
  std::string str() const;
};

struct TrainConfig {
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t batch_size = 64;
  std::size_t epochs = 90;
  /// Zero means epochs * iterations-per-epoch.
  std::size_t max_iter = 0;
  Schedule schedule;

  void validate() const;
};

/// ceil(dataset_size / batch_size)
std::size_t iters_per_epoch(std::size_t dataset_size, std::size_t batch_size);

/// Learning rate at iteration `iter` (0-based) of `max_iter`; `epoch` is 0-based and drives
/// the step schedule. Throws when iter > max_iter.
double lr_at(const Schedule& schedule, const TrainConfig& config, std::size_t iter,
             std::size_t max_iter, std::size_t epoch);

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in '" + param + "'"), param_(param) {}
  const std::string& param() const { return param_; }

 private:
  std::string param_;
};

/// Heavy-ball update on every entry: v = momentum*v - lr*(grad + weight_decay*theta);
/// theta += v; grad = 0. Checks all gradients first and leaves params untouched on NaN/Inf.
template <typename T>
void sgd_step(BasicParamSet<T>& params, double lr, double momentum, double weight_decay);

}  // namespace mlctx
