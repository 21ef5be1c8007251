#include "mlctx/nn/executor.hpp"

#include <algorithm>
#include <stdexcept>

#include "mlctx/nn/layers.hpp"
#include "mlctx/tensor/seed.hpp"

namespace mlctx {

template <typename T>
const BasicTensor<T>& Activations<T>::at(std::string_view id) const {
  const std::size_t i = graph->index_of(id);
  if (!evaluated[i]) {
    throw std::logic_error("node '" + std::string(id) + "' was not evaluated in this pass");
  }
  return outputs[i];
}

template <typename T>
const BasicTensor<T>& Activations<T>::probs() const {
  const auto out = graph->output_index();
  if (!out) throw std::logic_error("graph '" + graph->name() + "' has no classifier head");
  return outputs[*out];
}

namespace {

template <typename T>
std::span<const T> bias_of(const BasicParamSet<T>& params, const std::string& node) {
  return params.at(node + ".bias").value.data();
}

template <typename T>
void accumulate(std::optional<BasicTensor<T>>& slot, BasicTensor<T>&& g) {
  if (!slot) {
    slot = std::move(g);
    return;
  }
  auto dst = slot->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void add_into(BasicTensor<T>& dst, std::span<const T> src) {
  auto d = dst.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
}

template <typename T>
BasicTensor<T> softmax_grad(const BasicTensor<T>& probs, std::span<const int> labels, double weight) {
  BasicTensor<T> g = probs;
  const T scale = static_cast<T>(weight / static_cast<double>(probs.n()));
  for (std::size_t n = 0; n < probs.n(); ++n) {
    auto row = g.sample(n);
    row[static_cast<std::size_t>(labels[n])] -= T(1);
    for (T& v : row) v *= scale;
  }
  return g;
}

bool has_live_dropout(const NetworkGraph& graph) {
  for (const auto& n : graph.nodes())
    if (n.kind == LayerKind::dropout) return true;
  return false;
}

template <typename T>
void run_nodes(const NetworkGraph& graph, const BasicParamSet<T>& params, Activations<T>& a,
               std::optional<std::uint64_t> seed, std::size_t from) {
  const Mode mode = a.mode;
  for (std::size_t i = from; i < graph.size(); ++i) {
    const LayerNode& node = graph.node(i);
    if (node.train_only && mode == Mode::infer) continue;
    const auto& ins = graph.input_indices(i);
    const BasicTensor<T>& x = a.outputs[ins.front()];
    try {
      switch (node.kind) {
        case LayerKind::conv:
          a.outputs[i] = conv2d_forward(x, params.at(node.id + ".weight").value,
                                        bias_of(params, node.id), std::get<ConvSpec>(node.params));
          break;
        case LayerKind::maxpool: {
          auto r = maxpool2d(x, std::get<PoolSpec>(node.params));
          a.outputs[i] = std::move(r.output);
          a.argmax[i] = std::move(r.argmax);
          break;
        }
        case LayerKind::avgpool_global:
          a.outputs[i] = avgpool_global(x);
          break;
        case LayerKind::relu:
          a.outputs[i] = relu_forward(x);
          break;
        case LayerKind::tanh:
          a.outputs[i] = tanh_forward(x);
          break;
        case LayerKind::lrn: {
          auto r = lrn(x, std::get<LrnParams>(node.params));
          a.outputs[i] = std::move(r.output);
          a.cache[i] = std::move(r.scale);
          break;
        }
        case LayerKind::dropout: {
          const double keep = std::get<DropoutParams>(node.params).keep;
          if (mode == Mode::infer || keep >= 1.0) {
            a.outputs[i] = x;
            break;
          }
          auto mask = dropout_mask<T>(x.shape(), keep, derive_seed(*seed, {fnv1a(node.id)}));
          BasicTensor<T> y = x;
          for (std::size_t k = 0; k < y.size(); ++k) y[k] *= mask[k];
          a.outputs[i] = std::move(y);
          a.cache[i] = std::move(mask);
          break;
        }
        case LayerKind::fc:
          a.outputs[i] =
              fc_forward(x, params.at(node.id + ".weight").value, bias_of(params, node.id));
          break;
        case LayerKind::concat: {
          std::vector<const BasicTensor<T>*> parts;
          for (auto k : ins) parts.push_back(&a.outputs[k]);
          a.outputs[i] = concat_channels<T>(std::span<const BasicTensor<T>* const>(parts));
          break;
        }
        case LayerKind::l2norm:
          a.outputs[i] = l2_normalize(x);
          break;
        case LayerKind::softmax_xent:
          a.outputs[i] = softmax(x);
          break;
        case LayerKind::input:
          throw std::logic_error("input node in graph body");
      }
    } catch (const ShapeError& e) {
      throw ShapeError("node '" + node.id + "' (" + to_string(node.kind) + "): " + e.what());
    }
    a.evaluated[i] = true;
  }
}

template <typename T>
void check_forward_args(const NetworkGraph& graph, const BasicTensor<T>& input, Mode mode,
                        std::optional<std::uint64_t> seed) {
  const Shape& expect = graph.input_shape();
  if (input.c() != expect.c || input.h() != expect.h || input.w() != expect.w) {
    throw ShapeError("node '" + graph.node(0).id + "' (input): graph expects " + expect.str() +
                     " per sample, got " + input.shape().str());
  }
  if (mode == Mode::train && !seed && has_live_dropout(graph)) {
    throw std::invalid_argument("forward: train mode with dropout requires a seed");
  }
}

}  // namespace

template <typename T>
Activations<T> forward(const NetworkGraph& graph, const BasicParamSet<T>& params,
                       const BasicTensor<T>& input, Mode mode, std::optional<std::uint64_t> seed) {
  check_forward_args(graph, input, mode, seed);
  Activations<T> a;
  a.graph = &graph;
  a.mode = mode;
  const std::size_t count = graph.size();
  a.outputs.resize(count);
  a.evaluated.assign(count, false);
  a.argmax.resize(count);
  a.cache.resize(count);
  a.outputs[0] = input;
  a.evaluated[0] = true;
  run_nodes(graph, params, a, seed, 1);
  return a;
}

template <typename T>
void forward_from(const NetworkGraph& graph, const BasicParamSet<T>& params, Activations<T>& acts,
                  std::size_t from, std::optional<std::uint64_t> seed) {
  if (acts.graph != &graph) throw std::invalid_argument("forward_from: activations from another graph");
  check_forward_args(graph, acts.outputs[0], acts.mode, seed);
  run_nodes(graph, params, acts, seed, std::max<std::size_t>(from, 1));
}

template <typename T>
double total_loss(const NetworkGraph& graph, const Activations<T>& acts,
                  std::span<const int> labels, double aux_weight) {
  const auto out = graph.output_index();
  if (!out) throw std::logic_error("graph '" + graph.name() + "' has no classifier head");
  double loss = softmax_cross_entropy(acts.outputs[graph.input_indices(*out).front()], labels);
  if (aux_weight != 0.0) {
    for (auto k : graph.aux_indices()) {
      if (!acts.evaluated[k]) throw std::logic_error("auxiliary head skipped; run in train mode");
      loss += aux_weight * softmax_cross_entropy(acts.outputs[graph.input_indices(k).front()], labels);
    }
  }
  return loss;
}

template <typename T>
BackwardResult<T> backward(const NetworkGraph& graph, BasicParamSet<T>& params,
                           const Activations<T>& acts, std::span<const int> labels,
                           double aux_weight) {
  if (acts.graph != &graph) throw std::invalid_argument("backward: activations from another graph");
  if (acts.mode != Mode::train) throw std::invalid_argument("backward: forward must run in train mode");
  const auto out = graph.output_index();
  if (!out) throw std::logic_error("graph '" + graph.name() + "' has no classifier head");
  const std::size_t batch = acts.outputs[0].n();
  check_labels(labels, batch, acts.outputs[*out].shape().per_sample());

  BackwardResult<T> result;
  const std::size_t count = graph.size();
  std::vector<std::optional<BasicTensor<T>>> grads(count);

  auto seed_head = [&](std::size_t k, double weight) {
    const std::size_t logits = graph.input_indices(k).front();
    const double l = softmax_cross_entropy(acts.outputs[logits], labels);
    accumulate(grads[logits], softmax_grad(acts.outputs[k], labels, weight));
    return l;
  };
  result.main_loss = seed_head(*out, 1.0);
  result.loss = result.main_loss;
  if (aux_weight != 0.0) {
    for (auto k : graph.aux_indices()) {
      if (!acts.evaluated[k]) throw std::logic_error("auxiliary head skipped; run in train mode");
      const double l = seed_head(k, aux_weight);
      result.aux_losses.push_back(l);
      result.loss += aux_weight * l;
    }
  }

  for (std::size_t i = count; i-- > 1;) {
    if (!grads[i]) continue;
    const LayerNode& node = graph.node(i);
    BasicTensor<T> g = std::move(*grads[i]);
    grads[i].reset();
    const auto& ins = graph.input_indices(i);
    const std::size_t in = ins.front();
    const BasicTensor<T>& x = acts.outputs[in];
    switch (node.kind) {
      case LayerKind::conv: {
        auto& w = params.at(node.id + ".weight");
        auto cg = conv2d_backward(x, w.value, g, std::get<ConvSpec>(node.params));
        add_into(w.grad, std::span<const T>(cg.weight.data()));
        add_into(params.at(node.id + ".bias").grad, std::span<const T>(cg.bias));
        accumulate(grads[in], std::move(cg.input));
        break;
      }
      case LayerKind::maxpool:
        accumulate(grads[in], maxpool2d_backward(g, std::span<const std::size_t>(acts.argmax[i]),
                                                 x.shape()));
        break;
      case LayerKind::avgpool_global:
        accumulate(grads[in], avgpool_global_backward(g, x.shape()));
        break;
      case LayerKind::relu:
        accumulate(grads[in], relu_backward(x, g));
        break;
      case LayerKind::tanh:
        accumulate(grads[in], tanh_backward(acts.outputs[i], g));
        break;
      case LayerKind::lrn: {
        const LrnResult<T> fwd{acts.outputs[i], acts.cache[i]};
        accumulate(grads[in], lrn_backward(x, fwd, g, std::get<LrnParams>(node.params)));
        break;
      }
      case LayerKind::dropout: {
        if (std::get<DropoutParams>(node.params).keep < 1.0) {
          const auto& mask = acts.cache[i];
          for (std::size_t k = 0; k < g.size(); ++k) g[k] *= mask[k];
        }
        accumulate(grads[in], std::move(g));
        break;
      }
      case LayerKind::fc: {
        auto& w = params.at(node.id + ".weight");
        auto fg = fc_backward(x, w.value, g);
        add_into(w.grad, std::span<const T>(fg.weight.data()));
        add_into(params.at(node.id + ".bias").grad, std::span<const T>(fg.bias));
        accumulate(grads[in], std::move(fg.input));
        break;
      }
      case LayerKind::concat: {
        std::vector<std::size_t> widths;
        for (auto k : ins) widths.push_back(acts.outputs[k].c());
        auto parts = split_channels(g, widths);
        for (std::size_t k = 0; k < ins.size(); ++k) accumulate(grads[ins[k]], std::move(parts[k]));
        break;
      }
      case LayerKind::l2norm:
        accumulate(grads[in], l2_normalize_backward(x, acts.outputs[i], g));
        break;
      case LayerKind::softmax_xent:
      case LayerKind::input:
        break;
    }
  }
  result.input_grad = grads[0] ? std::move(*grads[0]) : BasicTensor<T>(acts.outputs[0].shape());
  return result;
}

template struct Activations<float>;
template struct Activations<double>;
template Activations<float> forward(const NetworkGraph&, const BasicParamSet<float>&,
                                    const BasicTensor<float>&, Mode, std::optional<std::uint64_t>);
template Activations<double> forward(const NetworkGraph&, const BasicParamSet<double>&,
                                     const BasicTensor<double>&, Mode, std::optional<std::uint64_t>);
template void forward_from(const NetworkGraph&, const BasicParamSet<float>&, Activations<float>&,
                           std::size_t, std::optional<std::uint64_t>);
template void forward_from(const NetworkGraph&, const BasicParamSet<double>&, Activations<double>&,
                           std::size_t, std::optional<std::uint64_t>);
template BackwardResult<float> backward(const NetworkGraph&, BasicParamSet<float>&,
                                        const Activations<float>&, std::span<const int>, double);
template BackwardResult<double> backward(const NetworkGraph&, BasicParamSet<double>&,
                                         const Activations<double>&, std::span<const int>, double);
template double total_loss(const NetworkGraph&, const Activations<float>&, std::span<const int>,
                           double);
template double total_loss(const NetworkGraph&, const Activations<double>&, std::span<const int>,
                           double);

}  // namespace mlctx
