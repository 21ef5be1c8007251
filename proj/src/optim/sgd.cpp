#include "mlctx/optim/sgd.hpp"

#include <cmath>
#include <sstream>

namespace mlctx {

Schedule Schedule::step(double divisor, std::vector<std::size_t> milestones) {
  Schedule s;
  s.kind = Kind::step;
  s.divisor = divisor;
  s.milestones = std::move(milestones);
  s.validate();
  return s;
}

Schedule Schedule::poly(double power) {
  Schedule s;
  s.kind = Kind::poly;
  s.power = power;
  s.milestones.clear();
  s.validate();
  return s;
}

void Schedule::validate() const {
  if (kind == Kind::poly) {
    if (!(power > 0.0)) throw std::invalid_argument("poly schedule needs power > 0");
    return;
  }
  if (!(divisor > 0.0)) throw std::invalid_argument("step schedule needs divisor > 0");
  for (std::size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] <= milestones[i - 1]) {
      throw std::invalid_argument("step milestones must be strictly increasing");
    }
  }
}

std::string Schedule::str() const {
  std::ostringstream os;
  if (kind == Kind::poly) {
    os << "poly(power=" << power << ")";
  } else {
    os << "step(divisor=" << divisor << ", milestones=";
    for (std::size_t i = 0; i < milestones.size(); ++i) os << (i ? "/" : "") << milestones[i];
    os << ")";
  }
  return os.str();
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw std::invalid_argument("base_lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  schedule.validate();
}

std::size_t iters_per_epoch(std::size_t dataset_size, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  return (dataset_size + batch_size - 1) / batch_size;
}

double lr_at(const Schedule& schedule, const TrainConfig& config, std::size_t iter,
             std::size_t max_iter, std::size_t epoch) {
  if (iter > max_iter) {
    throw std::out_of_range("lr_at: iter " + std::to_string(iter) + " beyond max_iter " +
                            std::to_string(max_iter));
  }
  if (schedule.kind == Schedule::Kind::poly) {
    if (max_iter == 0) return config.base_lr;
    const double frac = static_cast<double>(iter) / static_cast<double>(max_iter);
    return config.base_lr * std::pow(1.0 - frac, schedule.power);
  }
  double lr = config.base_lr;
  for (auto m : schedule.milestones)
    if (epoch >= m) lr /= schedule.divisor;
  return lr;
}

template <typename T>
void sgd_step(BasicParamSet<T>& params, double lr, double momentum, double weight_decay) {
  for (const auto& e : params.entries()) {
    if (!e.grad.all_finite()) throw NonFiniteGradient(e.name);
  }
  for (auto& e : params.entries()) {
    auto theta = e.value.data();
    auto g = e.grad.data();
    auto v = e.momentum.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double step = momentum * static_cast<double>(v[i]) -
                          lr * (static_cast<double>(g[i]) + weight_decay * static_cast<double>(theta[i]));
      v[i] = static_cast<T>(step);
      theta[i] += v[i];
      g[i] = T(0);
    }
  }
}

template void sgd_step(BasicParamSet<float>&, double, double, double);
template void sgd_step(BasicParamSet<double>&, double, double, double);

}  // namespace mlctx
