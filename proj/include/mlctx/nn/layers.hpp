#pragma once

#include <cstdint>
#include <span>

#include "mlctx/nn/graph.hpp"
#include "mlctx/tensor/ops.hpp"

namespace mlctx {

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> tanh_forward(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> tanh_backward(const BasicTensor<T>& output, const BasicTensor<T>& grad_out);

template <typename T>
struct LrnResult {
  BasicTensor<T> output;
  /// k + alpha/n * sum of squares over each site's channel window.
  BasicTensor<T> scale;
};

/// b_i = a_i / (k + alpha/n * sum_{j in window(i)} a_j^2)^beta across channels.
template <typename T>
LrnResult<T> lrn(const BasicTensor<T>& input, std::size_t depth_n, double alpha, double k,
                 double beta);
template <typename T>
LrnResult<T> lrn(const BasicTensor<T>& input, const LrnParams& p) {
  return lrn(input, p.size, p.alpha, p.k, p.beta);
}
template <typename T>
BasicTensor<T> lrn_backward(const BasicTensor<T>& input, const LrnResult<T>& fwd,
                            const BasicTensor<T>& grad_out, const LrnParams& p);

/// Scales each sample's flattened feature vector to unit L2 norm; zero vectors pass through.
template <typename T>
BasicTensor<T> l2_normalize(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> l2_normalize_backward(const BasicTensor<T>& input, const BasicTensor<T>& output,
                                     const BasicTensor<T>& grad_out);

/// Inverted-dropout mask: each element is 1/keep with probability keep, else 0.
template <typename T>
BasicTensor<T> dropout_mask(const Shape& shape, double keep, std::uint64_t seed);

/// Fully connected layer over the flattened (C*H*W) sample; weight is (out, in, 1, 1).
template <typename T>
BasicTensor<T> fc_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                          std::span<const T> bias);

template <typename T>
struct FcGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  std::vector<T> bias;
};

template <typename T>
FcGrads<T> fc_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                       const BasicTensor<T>& grad_out);

/// Row-wise softmax with max subtraction; output shape equals the (N, K, 1, 1) input.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

/// Mean cross-entropy computed from logits via log-sum-exp.
template <typename T>
double softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);

/// Mean cross-entropy of probability rows, with probabilities clamped below at 1e-12.
template <typename T>
double cross_entropy(const BasicTensor<T>& probs, std::span<const int> labels);

/// Throws when a label lies outside [0, num_classes).
void check_labels(std::span<const int> labels, std::size_t batch, std::size_t num_classes);

}  // namespace mlctx
