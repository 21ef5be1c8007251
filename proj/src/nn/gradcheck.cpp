#include "mlctx/nn/gradcheck.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

namespace mlctx {

namespace {

std::vector<std::size_t> pick_coordinates(std::size_t total, std::size_t max_checked) {
  std::vector<std::size_t> idx;
  if (total <= max_checked) {
    idx.resize(total);
    for (std::size_t i = 0; i < total; ++i) idx[i] = i;
    return idx;
  }
  idx.reserve(max_checked);
  for (std::size_t k = 0; k < max_checked; ++k) {
    idx.push_back(static_cast<std::size_t>((static_cast<double>(k) + 0.5) *
                                           static_cast<double>(total) /
                                           static_cast<double>(max_checked)));
  }
  return idx;
}

double relative_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

void check_eps(double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw std::invalid_argument("grad_check: eps must be a positive finite step");
  }
}

}  // namespace

GradCheckReport compare_central_differences(const std::function<double()>& loss,
                                            std::span<double> theta,
                                            std::span<const double> analytic, double eps,
                                            const GradCheckOptions& opts,
                                            const std::string& label) {
  check_eps(eps);
  if (theta.size() != analytic.size()) {
    throw std::invalid_argument("grad_check: analytic gradient length mismatch");
  }
  GradCheckReport rep;
  for (auto i : pick_coordinates(theta.size(), opts.max_checked)) {
    const double saved = theta[i];
    theta[i] = saved + eps;
    const double up = loss();
    theta[i] = saved - eps;
    const double down = loss();
    theta[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = relative_error(analytic[i], numeric, opts.floor);
    ++rep.checked;
    if (rep.worst.empty() || err > rep.max_rel_error) {
      rep.max_rel_error = err;
      rep.worst = label + "[" + std::to_string(i) + "]";
    }
  }
  return rep;
}

GradCheckReport grad_check(const NetworkGraph& graph, ParamSetD& params, const TensorD& input,
                           std::span<const int> labels, double eps, const GradCheckOptions& opts) {
  check_eps(eps);
  params.zero_grad();
  auto acts = forward(graph, params, input, Mode::train, opts.seed);
  auto bw = backward(graph, params, acts, labels, opts.aux_weight);

  TensorD x = input;
  auto loss = [&] {
    auto a = forward(graph, params, x, Mode::train, opts.seed);
    return total_loss(graph, a, labels, opts.aux_weight);
  };

  // One flat coordinate space across all parameters so subsampling is global. Entries follow
  // graph order, so a probe only has to recompute from its own node onward.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::vector<std::size_t> node_of(params.size());
  for (std::size_t e = 0; e < params.size(); ++e) {
    const auto& name = params.entries()[e].name;
    node_of[e] = graph.index_of(name.substr(0, name.rfind('.')));
    for (std::size_t k = 0; k < params.entries()[e].value.size(); ++k) coords.emplace_back(e, k);
  }

  std::optional<std::size_t> dirty;
  auto probe = [&](std::size_t node) {
    forward_from(graph, params, acts, node, opts.seed);
    dirty = node;
    return total_loss(graph, acts, labels, opts.aux_weight);
  };

  GradCheckReport rep;
  for (auto c : pick_coordinates(coords.size(), opts.max_checked)) {
    auto& entry = params.entries()[coords[c].first];
    const std::size_t node = node_of[coords[c].first];
    if (dirty && *dirty < node) forward_from(graph, params, acts, *dirty, opts.seed);
    double& v = entry.value[coords[c].second];
    const double saved = v;
    v = saved + eps;
    const double up = probe(node);
    v = saved - eps;
    const double down = probe(node);
    v = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = relative_error(entry.grad[coords[c].second], numeric, opts.floor);
    ++rep.checked;
    if (rep.worst.empty() || err > rep.max_rel_error) {
      rep.max_rel_error = err;
      rep.worst = entry.name + "[" + std::to_string(coords[c].second) + "]";
    }
  }

  if (opts.include_input) {
    std::vector<double> analytic(bw.input_grad.data().begin(), bw.input_grad.data().end());
    auto sub = compare_central_differences(loss, x.data(), analytic, eps, opts, "input");
    rep.checked += sub.checked;
    if (sub.max_rel_error > rep.max_rel_error) {
      rep.max_rel_error = sub.max_rel_error;
      rep.worst = sub.worst;
    }
  }
  return rep;
}

}  // namespace mlctx
