#include "mlctx/data/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "mlctx/nn/executor.hpp"

namespace mlctx {

namespace {
constexpr std::uint32_t kVersion = 1;
}

Tensor FeatureStore::batch(std::size_t begin, std::size_t n) const {
  if (begin + n > count || n == 0) throw std::out_of_range("feature batch out of range");
  const auto first = values.begin() + static_cast<std::ptrdiff_t>(begin * dim);
  return Tensor({n, dim, 1, 1}, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(n * dim)));
}

FeatureStore extract_features(const NetworkGraph& graph, const ParamSet& params, const Dataset& data,
                              const std::vector<std::string>& node_ids,
                              const std::vector<std::string>& l2_ids, const Preprocess& pp,
                              std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  const auto shapes = graph.infer_shapes(1);
  std::vector<std::size_t> nodes, widths;
  std::vector<bool> l2;
  for (const auto& id : node_ids) {
    if (!graph.contains(id)) throw std::invalid_argument("unknown feature node '" + id + "'");
    nodes.push_back(graph.index_of(id));
    widths.push_back(shapes[nodes.back()].per_sample());
    l2.push_back(std::find(l2_ids.begin(), l2_ids.end(), id) != l2_ids.end());
  }
  for (const auto& id : l2_ids) {
    if (std::find(node_ids.begin(), node_ids.end(), id) == node_ids.end()) {
      throw std::invalid_argument("l2 node '" + id + "' is not a feature node");
    }
  }

  FeatureStore store;
  store.count = data.size();
  for (auto w : widths) store.dim += w;
  store.values.resize(store.count * store.dim);
  store.labels = data.labels;

  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t n = std::min(batch_size, data.size() - begin);
    std::vector<Tensor> samples;
    samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) samples.push_back(preprocess_center(data.image(begin + i), pp));
    const auto acts = forward(graph, params, stack_batch(std::span<const Tensor>(samples)), Mode::infer);
    for (std::size_t i = 0; i < n; ++i) {
      float* dst = store.values.data() + (begin + i) * store.dim;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        const auto src = acts.outputs[nodes[k]].data().subspan(i * widths[k], widths[k]);
        std::copy(src.begin(), src.end(), dst);
        if (l2[k]) {
          double ss = 0.0;
          for (float v : src) ss += static_cast<double>(v) * v;
          if (ss > 0.0) {
            const double inv = 1.0 / std::sqrt(ss);
            for (std::size_t j = 0; j < widths[k]; ++j) dst[j] = static_cast<float>(dst[j] * inv);
          }
        }
        dst += widths[k];
      }
    }
  }
  return store;
}

void save_features(const FeatureStore& store, const std::filesystem::path& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os.write("MLFS", 4);
  binio::put_u32(os, kVersion);
  binio::put_u32(os, static_cast<std::uint32_t>(store.count));
  binio::put_u32(os, static_cast<std::uint32_t>(store.dim));
  for (float v : store.values) binio::put_f32(os, v);
  for (int l : store.labels) binio::put_u32(os, static_cast<std::uint32_t>(l));
}

FeatureStore load_features(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  binio::Reader r(is);
  char magic[4];
  r.bytes(magic, 4, "feature store magic");
  if (std::string(magic, 4) != "MLFS") throw binio::FormatError(file.string() + ": bad feature store magic", 0);
  const auto version = r.u32("feature store version");
  if (version != kVersion) {
    throw binio::FormatError(file.string() + ": unsupported version " + std::to_string(version), 4);
  }
  FeatureStore s;
  s.count = r.u32("feature count");
  s.dim = r.u32("feature dim");
  s.values.resize(s.count * s.dim);
  for (auto& v : s.values) v = r.f32("feature values");
  s.labels.resize(s.count);
  for (auto& l : s.labels) l = static_cast<int>(r.u32("feature labels"));
  if (!r.at_end()) throw binio::FormatError(file.string() + ": trailing bytes", r.offset());
  return s;
}

}  // namespace mlctx
