#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "mlctx/tensor/ops.hpp"

namespace mlctx {

enum class LayerKind {
  input,
  conv,
  maxpool,
  avgpool_global,
  relu,
  tanh,
  lrn,
  dropout,
  fc,
  concat,
  l2norm,
  softmax_xent,
};

const char* to_string(LayerKind kind);

/// Cross-channel local response normalization constants.
struct LrnParams {
  std::size_t size = 5;
  double alpha = 1e-4;
  double beta = 0.75;
  double k = 2.0;
};

struct DropoutParams {
  double keep = 0.5;
};

struct FcParams {
  std::size_t out = 1;
};

struct SoftmaxParams {
  /// Auxiliary heads contribute aux_weight * loss in training and are skipped at inference.
  bool auxiliary = false;
};

using LayerParams =
    std::variant<std::monostate, ConvSpec, PoolSpec, LrnParams, DropoutParams, FcParams, SoftmaxParams>;

struct LayerNode {
  std::string id;
  LayerKind kind = LayerKind::input;
  LayerParams params;
  std::vector<std::string> inputs;
  /// Building-block label (e.g. an inception block); empty for top-level layers.
  std::string group;
  /// Only evaluated in train mode (auxiliary classifier branches).
  bool train_only = false;
};

/// Immutable DAG of layers stored in topological order. Node 0 is the input.
class NetworkGraph {
 public:
  const std::string& name() const { return name_; }
  const std::vector<LayerNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  const LayerNode& node(std::size_t i) const { return nodes_.at(i); }
  const LayerNode& node(std::string_view id) const { return nodes_[index_of(id)]; }
  bool contains(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;
  const std::vector<std::size_t>& input_indices(std::size_t i) const { return edges_.at(i); }

  /// Per-sample input extent (n == 1).
  const Shape& input_shape() const { return input_shape_; }

  /// Index of the main (non-auxiliary) softmax head, if any.
  std::optional<std::size_t> output_index() const { return output_; }
  const std::vector<std::size_t>& aux_indices() const { return aux_; }
  std::size_t num_classes() const;

  /// Per-node output shapes for a batch of `batch` samples. Throws ShapeError naming the node.
  std::vector<Shape> infer_shapes(std::size_t batch = 1) const;
  std::vector<Shape> infer_shapes(const Shape& input) const;

  friend bool operator==(const NetworkGraph& a, const NetworkGraph& b);

 private:
  friend class GraphBuilder;
  std::string name_;
  Shape input_shape_;
  std::vector<LayerNode> nodes_;
  std::vector<std::vector<std::size_t>> edges_;
  std::unordered_map<std::string, std::size_t> index_;
  std::optional<std::size_t> output_;
  std::vector<std::size_t> aux_;
};

/// Appends nodes in topological order; every input must already exist.
class GraphBuilder {
 public:
  GraphBuilder(std::string name, Shape input_shape, std::string input_id = "data");

  std::string add(LayerNode node);

  std::string conv(std::string id, std::string in, ConvSpec spec);
  std::string maxpool(std::string id, std::string in, PoolSpec spec);
  std::string avgpool_global(std::string id, std::string in);
  std::string relu(std::string id, std::string in);
  std::string tanh(std::string id, std::string in);
  std::string lrn(std::string id, std::string in, LrnParams p = {});
  std::string dropout(std::string id, std::string in, double keep);
  std::string fc(std::string id, std::string in, std::size_t out);
  std::string concat(std::string id, std::vector<std::string> ins);
  std::string l2norm(std::string id, std::string in);
  std::string softmax_xent(std::string id, std::string in, bool auxiliary = false);

  /// Subsequent nodes get this group label / train-only flag until changed.
  void set_group(std::string group) { group_ = std::move(group); }
  void set_train_only(bool v) { train_only_ = v; }

  const std::string& input_id() const { return graph_.nodes_.front().id; }

  /// Per-sample output shape of an already added node.
  Shape shape_of(std::string_view id) const;

  /// Validates shapes end to end and returns the finished graph.
  NetworkGraph build() &&;

 private:
  NetworkGraph graph_;
  std::string group_;
  bool train_only_ = false;
};

}  // namespace mlctx
