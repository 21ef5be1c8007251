#include "mlctx/arch/shapes.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "mlctx/nn/params.hpp"

namespace mlctx {

std::string ShapeRow::shape_str() const {
  if (flat) return std::to_string(input.c);
  return std::to_string(input.c) + "x" + std::to_string(input.h) + "x" + std::to_string(input.w);
}

const ShapeRow* ShapeTable::find(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return &r;
  return nullptr;
}

std::string ShapeTable::to_text(const std::string& title) const {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::ostringstream os;
  if (!title.empty()) os << title << "\n";
  os << std::string(width - 5, ' ') << "layer | input\n";
  os << std::string(width, '-') << "-+-" << std::string(12, '-') << "\n";
  for (const auto& r : rows) {
    os << std::string(width - r.name.size(), ' ') << r.name << " | " << r.shape_str() << "\n";
  }
  return os.str();
}

std::string ShapeTable::to_csv() const {
  std::ostringstream os;
  os << "layer,input\n";
  for (const auto& r : rows) os << r.name << "," << r.shape_str() << "\n";
  return os.str();
}

ShapeTable shape_table(const NetworkGraph& graph) { return shape_table(graph, graph.input_shape()); }

ShapeTable shape_table(const NetworkGraph& graph, const Shape& input) {
  const auto shapes = graph.infer_shapes(Shape{1, input.c, input.h, input.w});
  std::vector<bool> flat(graph.size(), false);
  ShapeTable t;
  std::string open_group;
  for (std::size_t i = 1; i < graph.size(); ++i) {
    const auto& node = graph.node(i);
    const auto& ins = graph.input_indices(i);
    bool in_flat = true;
    for (auto k : ins) in_flat = in_flat && flat[k];
    switch (node.kind) {
      case LayerKind::fc:
        flat[i] = true;
        break;
      case LayerKind::relu:
      case LayerKind::tanh:
      case LayerKind::dropout:
      case LayerKind::l2norm:
      case LayerKind::softmax_xent:
      case LayerKind::concat:
        flat[i] = in_flat;
        break;
      default:
        break;
    }
    if (!node.group.empty()) {
      if (node.group != open_group) {
        t.rows.push_back(ShapeRow{node.group, shapes[ins.front()], flat[ins.front()]});
        open_group = node.group;
      }
      continue;
    }
    open_group.clear();
    // A fan-in row shows the combined extent it receives.
    const Shape in = node.kind == LayerKind::concat ? shapes[i] : shapes[ins.front()];
    t.rows.push_back(ShapeRow{node.id, Shape{1, in.c, in.h, in.w}, in_flat});
  }
  return t;
}

namespace {

ShapeRow chw(std::string name, std::size_t c, std::size_t h, std::size_t w) {
  return ShapeRow{std::move(name), Shape{1, c, h, w}, false};
}

ShapeRow vec(std::string name, std::size_t c) { return ShapeRow{std::move(name), Shape{1, c, 1, 1}, true}; }

}  // namespace

std::vector<ShapeRow> alexnet_reference(bool multilevel) {
  return {
      chw("conv1", 3, 227, 227),
      chw("pool1", 96, 55, 55),
      chw("conv2", 96, 27, 27),
      chw("pool2", 256, 27, 27),
      chw("conv3", 256, 13, 13),
      chw("conv4", 384, 13, 13),
      chw("conv5", 384, 13, 13),
      chw("pool5", 256, 13, 13),
      chw("fc6", multilevel ? 640 : 256, 6, 6),
      vec("fc7", 4096),
      vec("fc8", 4096),
      vec("prob", 1000),
  };
}

std::vector<ShapeRow> googlenet_reference(bool multilevel) {
  const std::size_t top = multilevel ? 1856 : 1024;
  return {
      chw("conv1", 3, 224, 224),
      chw("pool1", 64, 112, 112),
      chw("conv2", 64, 56, 56),
      chw("pool2", 192, 56, 56),
      chw("inception3a", 192, 28, 28),
      chw("inception3b", 256, 28, 28),
      chw("pool3", 480, 28, 28),
      chw("inception4a", 480, 14, 14),
      chw("inception4b", 512, 14, 14),
      chw("inception4c", 512, 14, 14),
      chw("inception4d", 512, 14, 14),
      chw("inception4e", 528, 14, 14),
      chw("pool4", 832, 14, 14),
      chw("inception5a", 832, 7, 7),
      chw("inception5b", 832, 7, 7),
      chw("pool5", top, 7, 7),
      chw("fc", top, 1, 1),
      vec("prob", 1000),
  };
}

std::vector<std::string> diff_against(const ShapeTable& table, const std::vector<ShapeRow>& reference) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (const auto& ref : reference) {
    std::size_t k = pos;
    while (k < table.rows.size() && table.rows[k].name != ref.name) ++k;
    if (k == table.rows.size()) {
      out.push_back(ref.name + ": missing or out of order (expected " + ref.shape_str() + ")");
      continue;
    }
    const auto& got = table.rows[k];
    if (got.input != ref.input || got.flat != ref.flat) {
      out.push_back(ref.name + ": expected " + ref.shape_str() + ", got " + got.shape_str());
    }
    pos = k + 1;
  }
  return out;
}

std::size_t ParamCount::at(const std::string& layer) const {
  for (const auto& [name, n] : per_layer)
    if (name == layer) return n;
  throw std::out_of_range("no parameters for layer '" + layer + "'");
}

ParamCount count_params(const NetworkGraph& graph) {
  ParamCount pc;
  for (const auto& spec : param_specs(graph)) {
    const std::size_t n = spec.shape.size();
    if (pc.per_layer.empty() || pc.per_layer.back().first != spec.node) {
      pc.per_layer.emplace_back(spec.node, 0);
    }
    pc.per_layer.back().second += n;
    pc.total += n;
  }
  return pc;
}

}  // namespace mlctx
