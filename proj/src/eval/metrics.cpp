#include "mlctx/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "mlctx/nn/executor.hpp"

namespace mlctx {

std::size_t label_rank(std::span<const double> row, int label) {
  const auto l = static_cast<std::size_t>(label);
  const double p = row[l];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] > p || (row[j] == p && j < l)) ++rank;
  }
  return rank;
}

double topk_accuracy(std::span<const double> probs, std::size_t num_classes, std::span<const int> labels,
                     std::size_t k) {
  if (num_classes == 0 || probs.size() != labels.size() * num_classes) {
    throw std::invalid_argument("topk_accuracy: probs are not labels x num_classes");
  }
  if (k == 0 || k > num_classes) {
    throw std::invalid_argument("topk_accuracy: k=" + std::to_string(k) + " with " +
                                std::to_string(num_classes) + " classes");
  }
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw std::out_of_range("label " + std::to_string(labels[i]) + " out of range");
    }
    hits += label_rank(probs.subspan(i * num_classes, num_classes), labels[i]) < k;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<double> average_probs(const std::vector<std::vector<double>>& crop_probs) {
  if (crop_probs.empty()) throw std::invalid_argument("average_probs of an empty list");
  const std::size_t k = crop_probs.front().size();
  std::vector<double> mean(k, 0.0);
  for (const auto& p : crop_probs) {
    if (p.size() != k) throw std::invalid_argument("average_probs: vectors differ in length");
    double s = 0.0;
    for (double v : p) s += v;
    if (std::abs(s - 1.0) > 1e-4) throw std::invalid_argument("average_probs: vector sums to " + std::to_string(s));
    for (std::size_t j = 0; j < k; ++j) mean[j] += p[j];
  }
  for (auto& m : mean) m /= static_cast<double>(crop_probs.size());
  return mean;
}

std::string to_string(EvalMode mode) { return mode == EvalMode::center_crop ? "center" : "multi"; }

std::vector<double> predict(const NetworkGraph& graph, const ParamSet& params, const Tensor& batch) {
  const auto acts = forward(graph, params, batch, Mode::infer);
  const auto p = acts.probs().data();
  return std::vector<double>(p.begin(), p.end());
}

namespace {

void check_classes(const NetworkGraph& graph, const Dataset& data) {
  const std::size_t k = graph.num_classes();
  const bool names_mismatch = !data.class_names.empty() && data.class_names.size() != k;
  if (names_mismatch || data.num_classes() > k) {
    throw std::invalid_argument("dataset has " + std::to_string(data.num_classes()) + " classes, network " +
                                graph.name() + " has " + std::to_string(k));
  }
}

}  // namespace

EvalReport evaluate(const NetworkGraph& graph, const ParamSet& params, const Dataset& data,
                    const Preprocess& pp, const EvalOptions& options) {
  check_classes(graph, data);
  if (options.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  const std::size_t k = graph.num_classes();
  std::vector<double> probs(data.size() * k);

  if (options.mode == EvalMode::center_crop) {
    for (std::size_t begin = 0; begin < data.size(); begin += options.batch_size) {
      const std::size_t n = std::min(options.batch_size, data.size() - begin);
      std::vector<Tensor> xs;
      xs.reserve(n);
      for (std::size_t i = 0; i < n; ++i) xs.push_back(preprocess_center(data.image(begin + i), pp));
      const auto p = predict(graph, params, stack_batch(std::span<const Tensor>(xs)));
      std::copy(p.begin(), p.end(), probs.begin() + static_cast<std::ptrdiff_t>(begin * k));
    }
  } else {
    pp.validate(data.channels);
    for (std::size_t i = 0; i < data.size(); ++i) {
      Tensor x = data.image(i);
      normalize(x, pp);
      const auto crops = tta_crops(x, options.plan);
      std::vector<std::vector<double>> per_crop;
      per_crop.reserve(crops.size());
      for (std::size_t begin = 0; begin < crops.size(); begin += options.batch_size) {
        const std::size_t n = std::min(options.batch_size, crops.size() - begin);
        const auto p = predict(graph, params,
                               stack_batch(std::span<const Tensor>(crops).subspan(begin, n)));
        for (std::size_t j = 0; j < n; ++j) {
          per_crop.emplace_back(p.begin() + static_cast<std::ptrdiff_t>(j * k),
                                p.begin() + static_cast<std::ptrdiff_t>((j + 1) * k));
        }
      }
      const auto mean = average_probs(per_crop);
      std::copy(mean.begin(), mean.end(), probs.begin() + static_cast<std::ptrdiff_t>(i * k));
    }
  }

  EvalReport r;
  r.preset = graph.name();
  r.mode = options.mode;
  r.num_samples = data.size();
  r.forward_passes = data.size() * (options.mode == EvalMode::center_crop ? 1 : options.plan.total());
  r.top5_k = std::min<std::size_t>(5, k);
  if (data.size() > 0) {
    r.top1 = topk_accuracy(probs, k, data.labels, 1);
    r.top5 = topk_accuracy(probs, k, data.labels, r.top5_k);
  }
  std::vector<std::size_t> hit(k, 0), seen(k, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto l = static_cast<std::size_t>(data.labels[i]);
    ++seen[l];
    hit[l] += label_rank(std::span<const double>(probs).subspan(i * k, k), data.labels[i]) == 0;
  }
  r.per_class_accuracy.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    r.per_class_accuracy[c] = seen[c] ? static_cast<double>(hit[c]) / static_cast<double>(seen[c]) : 0.0;
  }
  return r;
}

std::string eval_csv_header() { return "preset,mode,samples,forward_passes,top1,top5,top5_k"; }

std::string eval_csv_row(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%zu,%zu,%.6f,%.6f,%zu", r.preset.c_str(), to_string(r.mode).c_str(),
                r.num_samples, r.forward_passes, r.top1, r.top5, r.top5_k);
  return buf;
}

std::string eval_table(const std::vector<std::pair<EvalReport, std::optional<EvalReport>>>& rows) {
  std::size_t name_w = 7;
  for (const auto& [c, m] : rows) name_w = std::max(name_w, c.preset.size() + (m ? 13 : 6));
  std::string crops_label = "multi crop";
  for (const auto& [c, m] : rows) {
    if (m) crops_label = std::to_string(m->forward_passes / std::max<std::size_t>(1, m->num_samples)) + " crops";
  }
  auto pct = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%6.2f%%", 100.0 * v);
    return std::string(b);
  };
  auto delta = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%+6.2f", 100.0 * v);
    return std::string(b);
  };
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  std::ostringstream os;
  os << pad("Network", name_w) << " | " << pad("center crop", 17) << " | " << crops_label << "\n";
  os << pad("", name_w) << " | " << "Top-1    Top-5   " << " | " << "Top-1    Top-5\n";
  os << std::string(name_w, '-') << "-+-" << std::string(17, '-') << "-+-" << std::string(17, '-') << "\n";
  for (const auto& [c, m] : rows) {
    os << pad(c.preset, name_w) << " | " << pct(c.top1) << "  " << pct(c.top5) << " | ";
    if (m) {
      os << pct(m->top1) << "  " << pct(m->top5);
    } else {
      os << "   -        -";
    }
    os << "\n";
  }
  if (rows.size() > 1) {
    const auto& [c0, m0] = rows.front();
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& [c, m] = rows[i];
      os << pad("delta " + c.preset, name_w) << " | " << delta(c.top1 - c0.top1) << "   "
         << delta(c.top5 - c0.top5) << "  | ";
      if (m && m0) {
        os << delta(m->top1 - m0->top1) << "   " << delta(m->top5 - m0->top5);
      } else {
        os << "   -        -";
      }
      os << "\n";
    }
  }
  for (const auto& [c, m] : rows) {
    if (m) {
      os << pad("multi-center " + c.preset, name_w) << " | " << delta(m->top1 - c.top1) << "   "
         << delta(m->top5 - c.top5) << "\n";
    }
  }
  return os.str();
}

}  // namespace mlctx
