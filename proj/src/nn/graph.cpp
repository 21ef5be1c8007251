#include "mlctx/nn/graph.hpp"

#include <stdexcept>

namespace mlctx {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::input: return "input";
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool_global: return "avgpool_global";
    case LayerKind::relu: return "relu";
    case LayerKind::tanh: return "tanh";
    case LayerKind::lrn: return "lrn";
    case LayerKind::dropout: return "dropout";
    case LayerKind::fc: return "fc";
    case LayerKind::concat: return "concat";
    case LayerKind::l2norm: return "l2norm";
    case LayerKind::softmax_xent: return "softmax_xent";
  }
  return "?";
}

bool NetworkGraph::contains(std::string_view id) const {
  return index_.find(std::string(id)) != index_.end();
}

std::size_t NetworkGraph::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) {
    throw std::invalid_argument("graph '" + name_ + "' has no node '" + std::string(id) + "'");
  }
  return it->second;
}

std::size_t NetworkGraph::num_classes() const {
  if (!output_) throw std::logic_error("graph '" + name_ + "' has no classifier head");
  return infer_shapes(1)[*output_].c;
}

std::vector<Shape> NetworkGraph::infer_shapes(std::size_t batch) const {
  Shape in = input_shape_;
  in.n = batch;
  return infer_shapes(in);
}

namespace {

[[noreturn]] void shape_fail(const LayerNode& node, const std::string& what) {
  throw ShapeError("node '" + node.id + "' (" + to_string(node.kind) + "): " + what);
}

}  // namespace

std::vector<Shape> NetworkGraph::infer_shapes(const Shape& input) const {
  if (input.c != input_shape_.c || input.h != input_shape_.h || input.w != input_shape_.w) {
    throw ShapeError("graph '" + name_ + "' expects input " + input_shape_.str() +
                     " per sample, got " + input.str());
  }
  std::vector<Shape> shapes(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const LayerNode& node = nodes_[i];
    const auto& ins = edges_[i];
    if (node.kind == LayerKind::input) {
      shapes[i] = input;
      continue;
    }
    const Shape in = shapes[ins.front()];
    try {
      switch (node.kind) {
        case LayerKind::conv:
          shapes[i] = std::get<ConvSpec>(node.params).output_shape(in);
          break;
        case LayerKind::maxpool:
          shapes[i] = std::get<PoolSpec>(node.params).output_shape(in);
          break;
        case LayerKind::avgpool_global:
          shapes[i] = Shape{in.n, in.c, 1, 1};
          break;
        case LayerKind::fc:
          shapes[i] = Shape{in.n, std::get<FcParams>(node.params).out, 1, 1};
          break;
        case LayerKind::concat: {
          Shape out = in;
          out.c = 0;
          for (std::size_t k = 0; k < ins.size(); ++k) {
            const Shape& s = shapes[ins[k]];
            if (s.n != in.n || s.h != in.h || s.w != in.w) {
              shape_fail(node, "input " + std::to_string(k) + " ('" + node.inputs[k] +
                                   "') has shape " + s.str() + ", incompatible with input 0 shape " +
                                   in.str());
            }
            out.c += s.c;
          }
          shapes[i] = out;
          break;
        }
        case LayerKind::softmax_xent:
          if (in.h != 1 || in.w != 1) shape_fail(node, "expects flat logits, got " + in.str());
          shapes[i] = in;
          break;
        case LayerKind::lrn: {
          const auto& p = std::get<LrnParams>(node.params);
          if (p.size == 0 || p.size % 2 == 0) shape_fail(node, "lrn size must be odd and >= 1");
          shapes[i] = in;
          break;
        }
        case LayerKind::dropout: {
          const double keep = std::get<DropoutParams>(node.params).keep;
          if (!(keep > 0.0 && keep <= 1.0)) shape_fail(node, "keep probability must be in (0, 1]");
          shapes[i] = in;
          break;
        }
        default:
          shapes[i] = in;
          break;
      }
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      if (msg.rfind("node '", 0) == 0) throw;
      shape_fail(node, msg + " (input " + in.str() + ")");
    }
  }
  return shapes;
}

bool operator==(const NetworkGraph& a, const NetworkGraph& b) {
  if (a.name_ != b.name_ || a.input_shape_ != b.input_shape_ || a.nodes_.size() != b.nodes_.size())
    return false;
  for (std::size_t i = 0; i < a.nodes_.size(); ++i) {
    const auto& x = a.nodes_[i];
    const auto& y = b.nodes_[i];
    if (x.id != y.id || x.kind != y.kind || x.inputs != y.inputs || x.group != y.group ||
        x.train_only != y.train_only || x.params.index() != y.params.index())
      return false;
  }
  return a.edges_ == b.edges_;
}

GraphBuilder::GraphBuilder(std::string name, Shape input_shape, std::string input_id) {
  graph_.name_ = std::move(name);
  input_shape.n = 1;
  if (!input_shape.valid()) throw ShapeError("graph input must have dims >= 1");
  graph_.input_shape_ = input_shape;
  LayerNode in;
  in.id = std::move(input_id);
  in.kind = LayerKind::input;
  graph_.index_.emplace(in.id, 0);
  graph_.nodes_.push_back(std::move(in));
  graph_.edges_.emplace_back();
}

std::string GraphBuilder::add(LayerNode node) {
  if (node.id.empty()) throw std::invalid_argument("node id must not be empty");
  if (graph_.index_.count(node.id)) {
    throw std::invalid_argument("duplicate node id '" + node.id + "'");
  }
  if (node.kind == LayerKind::input) throw std::invalid_argument("a graph has exactly one input");
  if (node.inputs.empty()) throw std::invalid_argument("node '" + node.id + "' has no inputs");
  if (node.kind != LayerKind::concat && node.inputs.size() != 1) {
    throw std::invalid_argument("node '" + node.id + "' takes exactly one input");
  }
  std::vector<std::size_t> edges;
  for (const auto& in : node.inputs) {
    auto it = graph_.index_.find(in);
    if (it == graph_.index_.end()) {
      throw std::invalid_argument("node '" + node.id + "' refers to unknown input '" + in + "'");
    }
    edges.push_back(it->second);
  }
  if (node.group.empty()) node.group = group_;
  node.train_only = node.train_only || train_only_;
  const std::size_t idx = graph_.nodes_.size();
  if (node.kind == LayerKind::softmax_xent) {
    if (std::get<SoftmaxParams>(node.params).auxiliary) {
      graph_.aux_.push_back(idx);
    } else {
      if (graph_.output_) throw std::invalid_argument("graph already has a main softmax head");
      graph_.output_ = idx;
    }
  }
  graph_.index_.emplace(node.id, idx);
  graph_.edges_.push_back(std::move(edges));
  graph_.nodes_.push_back(std::move(node));
  return graph_.nodes_.back().id;
}

namespace {

LayerNode make(std::string id, LayerKind kind, LayerParams params, std::vector<std::string> ins) {
  LayerNode n;
  n.id = std::move(id);
  n.kind = kind;
  n.params = std::move(params);
  n.inputs = std::move(ins);
  return n;
}

}  // namespace

std::string GraphBuilder::conv(std::string id, std::string in, ConvSpec spec) {
  return add(make(std::move(id), LayerKind::conv, spec, {std::move(in)}));
}
std::string GraphBuilder::maxpool(std::string id, std::string in, PoolSpec spec) {
  return add(make(std::move(id), LayerKind::maxpool, spec, {std::move(in)}));
}
std::string GraphBuilder::avgpool_global(std::string id, std::string in) {
  return add(make(std::move(id), LayerKind::avgpool_global, {}, {std::move(in)}));
}
std::string GraphBuilder::relu(std::string id, std::string in) {
  return add(make(std::move(id), LayerKind::relu, {}, {std::move(in)}));
}
std::string GraphBuilder::tanh(std::string id, std::string in) {
  return add(make(std::move(id), LayerKind::tanh, {}, {std::move(in)}));
}
std::string GraphBuilder::lrn(std::string id, std::string in, LrnParams p) {
  return add(make(std::move(id), LayerKind::lrn, p, {std::move(in)}));
}
std::string GraphBuilder::dropout(std::string id, std::string in, double keep) {
  return add(make(std::move(id), LayerKind::dropout, DropoutParams{keep}, {std::move(in)}));
}
std::string GraphBuilder::fc(std::string id, std::string in, std::size_t out) {
  return add(make(std::move(id), LayerKind::fc, FcParams{out}, {std::move(in)}));
}
std::string GraphBuilder::concat(std::string id, std::vector<std::string> ins) {
  return add(make(std::move(id), LayerKind::concat, {}, std::move(ins)));
}
std::string GraphBuilder::l2norm(std::string id, std::string in) {
  return add(make(std::move(id), LayerKind::l2norm, {}, {std::move(in)}));
}
std::string GraphBuilder::softmax_xent(std::string id, std::string in, bool auxiliary) {
  return add(make(std::move(id), LayerKind::softmax_xent, SoftmaxParams{auxiliary}, {std::move(in)}));
}

Shape GraphBuilder::shape_of(std::string_view id) const {
  return graph_.infer_shapes(1)[graph_.index_of(id)];
}

NetworkGraph GraphBuilder::build() && {
  graph_.infer_shapes(1);
  return std::move(graph_);
}

}  // namespace mlctx
