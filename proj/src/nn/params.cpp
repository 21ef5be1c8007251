#include "mlctx/nn/params.hpp"

#include <cmath>
#include <random>

#include "mlctx/tensor/seed.hpp"

namespace mlctx {

std::vector<ParamSpec> param_specs(const NetworkGraph& graph) {
  const auto shapes = graph.infer_shapes(1);
  std::vector<ParamSpec> specs;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const LayerNode& node = graph.node(i);
    const Shape in = shapes[graph.input_indices(i).empty() ? 0 : graph.input_indices(i).front()];
    if (node.kind == LayerKind::conv) {
      const auto& cs = std::get<ConvSpec>(node.params);
      const std::size_t area = cs.kernel_h * cs.kernel_w;
      specs.push_back({node.id + ".weight", node.id, cs.weight_shape(in.c), in.c * area,
                       cs.out_channels * area, false});
      specs.push_back({node.id + ".bias", node.id, Shape{1, cs.out_channels, 1, 1}, in.c * area,
                       cs.out_channels * area, true});
    } else if (node.kind == LayerKind::fc) {
      const std::size_t out = std::get<FcParams>(node.params).out;
      const std::size_t fan_in = in.per_sample();
      specs.push_back({node.id + ".weight", node.id, Shape{out, fan_in, 1, 1}, fan_in, out, false});
      specs.push_back({node.id + ".bias", node.id, Shape{1, out, 1, 1}, fan_in, out, true});
    }
  }
  return specs;
}

template <typename T>
BasicParamSet<T> init_params(const NetworkGraph& graph, const InitPolicy& policy,
                             std::uint64_t seed) {
  BasicParamSet<T> params;
  for (const auto& spec : param_specs(graph)) {
    BasicTensor<T> value(spec.shape);
    std::mt19937_64 rng(derive_seed(seed, {fnv1a(spec.name)}));
    if (policy.kind == InitPolicy::Kind::gaussian) {
      if (!(policy.std > 0.0)) throw std::invalid_argument("gaussian init needs std > 0");
      if (spec.is_bias) {
        value.fill(static_cast<T>(policy.bias));
      } else {
        std::normal_distribution<double> dist(policy.mean, policy.std);
        for (auto& v : value.data()) v = static_cast<T>(dist(rng));
      }
    } else if (!spec.is_bias) {
      const double bound = std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : value.data()) v = static_cast<T>(dist(rng));
    }
    params.add(spec.name, std::move(value), spec.is_bias);
  }
  return params;
}

template BasicParamSet<float> init_params(const NetworkGraph&, const InitPolicy&, std::uint64_t);
template BasicParamSet<double> init_params(const NetworkGraph&, const InitPolicy&, std::uint64_t);

}  // namespace mlctx
