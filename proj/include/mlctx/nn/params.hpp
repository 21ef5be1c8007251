#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlctx/nn/graph.hpp"

namespace mlctx {

template <typename T>
struct ParamEntry {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  BasicTensor<T> momentum;
  bool is_bias = false;
};

/// Named parameters with matching gradient and momentum buffers, kept in graph order.
template <typename T>
class BasicParamSet {
 public:
  void add(std::string name, BasicTensor<T> value, bool is_bias = false) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    const Shape s = value.shape();
    index_.emplace(name, entries_.size());
    entries_.push_back(ParamEntry<T>{std::move(name), std::move(value), BasicTensor<T>(s),
                                     BasicTensor<T>(s), is_bias});
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  ParamEntry<T>& at(const std::string& name) { return entries_[find(name)]; }
  const ParamEntry<T>& at(const std::string& name) const { return entries_[find(name)]; }

  std::vector<ParamEntry<T>>& entries() { return entries_; }
  const std::vector<ParamEntry<T>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t total = 0;
    for (const auto& e : entries_) total += e.value.size();
    return total;
  }

  void zero_grad() {
    for (auto& e : entries_) e.grad.fill(T(0));
  }

  template <typename U>
  BasicParamSet<U> cast() const {
    BasicParamSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.is_bias);
    return out;
  }

  /// Equality of names, shapes and values (not grads or momentum).
  bool same_values(const BasicParamSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name != other.entries_[i].name || entries_[i].value != other.entries_[i].value)
        return false;
    }
    return true;
  }

 private:
  std::size_t find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
    return it->second;
  }

  std::vector<ParamEntry<T>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

using ParamSet = BasicParamSet<float>;
using ParamSetD = BasicParamSet<double>;

struct ParamSpec {
  std::string name;
  std::string node;
  Shape shape;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  bool is_bias = false;
};

/// Parameter tensors required by a graph: "<node>.weight" and "<node>.bias" for conv and fc.
std::vector<ParamSpec> param_specs(const NetworkGraph& graph);

struct InitPolicy {
  enum class Kind { gaussian, normalized };
  Kind kind = Kind::gaussian;
  double mean = 0.0;
  double std = 0.01;
  double bias = 0.1;

  static InitPolicy gaussian(double mean = 0.0, double std = 0.01, double bias = 0.1) {
    if (!(std > 0.0)) throw std::invalid_argument("gaussian init needs std > 0");
    return InitPolicy{Kind::gaussian, mean, std, bias};
  }
  /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static InitPolicy normalized() { return InitPolicy{Kind::normalized, 0.0, 0.0, 0.0}; }
};

/// Deterministic per (seed, parameter name), so trunk parameters initialise identically
/// whether or not skip connections are present.
template <typename T>
BasicParamSet<T> init_params(const NetworkGraph& graph, const InitPolicy& policy, std::uint64_t seed);

}  // namespace mlctx
