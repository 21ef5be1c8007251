#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mlctx/nn/graph.hpp"
#include "mlctx/nn/params.hpp"

namespace mlctx {

enum class Mode { train, infer };

/// Every node's output from one forward pass plus what backward needs to replay it.
template <typename T>
struct Activations {
  const NetworkGraph* graph = nullptr;
  Mode mode = Mode::infer;
  std::vector<BasicTensor<T>> outputs;
  std::vector<bool> evaluated;
  std::vector<std::vector<std::size_t>> argmax;
  /// LRN scale or dropout mask, per node.
  std::vector<BasicTensor<T>> cache;

  const BasicTensor<T>& at(std::string_view id) const;
  /// Probabilities of the main softmax head.
  const BasicTensor<T>& probs() const;
};

/// Runs the graph. Dropout is active only in train mode, where a seed is then required.
/// Pure: identical arguments give bit-identical activations.
template <typename T>
Activations<T> forward(const NetworkGraph& graph, const BasicParamSet<T>& params,
                       const BasicTensor<T>& input, Mode mode,
                       std::optional<std::uint64_t> seed = std::nullopt);

/// Recomputes nodes from index `from` onward in place, reusing earlier outputs. Equivalent to a
/// fresh forward when only parameters of nodes at or after `from` changed.
template <typename T>
void forward_from(const NetworkGraph& graph, const BasicParamSet<T>& params, Activations<T>& acts,
                  std::size_t from, std::optional<std::uint64_t> seed = std::nullopt);

template <typename T>
struct BackwardResult {
  /// main + aux_weight * sum(aux)
  double loss = 0;
  double main_loss = 0;
  std::vector<double> aux_losses;
  BasicTensor<T> input_grad;
};

/// Accumulates parameter gradients (+=) for the mean cross-entropy of the main head plus
/// aux_weight times each auxiliary head. Auxiliary branches are skipped when aux_weight == 0.
template <typename T>
BackwardResult<T> backward(const NetworkGraph& graph, BasicParamSet<T>& params,
                           const Activations<T>& acts, std::span<const int> labels,
                           double aux_weight);

/// Loss that backward would report, without computing gradients.
template <typename T>
double total_loss(const NetworkGraph& graph, const Activations<T>& acts,
                  std::span<const int> labels, double aux_weight);

}  // namespace mlctx
