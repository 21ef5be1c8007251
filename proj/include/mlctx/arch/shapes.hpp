#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mlctx/nn/graph.hpp"

namespace mlctx {

struct ShapeRow {
  std::string name;
  /// Per-sample input extent (n == 1).
  Shape input;
  /// Printed as a bare channel count (classifier vectors).
  bool flat = false;

  std::string shape_str() const;
  friend bool operator==(const ShapeRow&, const ShapeRow&) = default;
};

/// Input size of each layer in topological order. Nodes sharing a group collapse to one row
/// carrying the group name and the block's input.
struct ShapeTable {
  std::vector<ShapeRow> rows;

  const ShapeRow* find(const std::string& name) const;
  std::string to_text(const std::string& title = {}) const;
  std::string to_csv() const;
};

ShapeTable shape_table(const NetworkGraph& graph);
ShapeTable shape_table(const NetworkGraph& graph, const Shape& input);

/// Reference layer input sizes for the full-scale AlexNet / GoogLeNet and their "++" variants.
std::vector<ShapeRow> alexnet_reference(bool multilevel);
std::vector<ShapeRow> googlenet_reference(bool multilevel);

/// Mismatches between `table` and `reference`: every reference row must appear in the table,
/// in the same relative order, with an identical shape. Empty when they agree.
std::vector<std::string> diff_against(const ShapeTable& table, const std::vector<ShapeRow>& reference);

struct ParamCount {
  std::vector<std::pair<std::string, std::size_t>> per_layer;
  std::size_t total = 0;

  std::size_t at(const std::string& layer) const;
};

/// Weight plus bias scalars for every conv and fc node.
ParamCount count_params(const NetworkGraph& graph);

}  // namespace mlctx
