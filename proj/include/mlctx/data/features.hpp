#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mlctx/data/augment.hpp"
#include "mlctx/data/dataset.hpp"
#include "mlctx/nn/graph.hpp"
#include "mlctx/nn/params.hpp"

namespace mlctx {

/// Row-major count x dim features with one label per row.
struct FeatureStore {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<float> values;
  std::vector<int> labels;

  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  /// Rows [begin, begin + n) as an n x dim x 1 x 1 tensor.
  Tensor batch(std::size_t begin, std::size_t n) const;
};

/// Per image (centre-cropped by `pp`), the flattened infer-mode activations of each node in
/// `node_ids`, concatenated in that order; nodes listed in `l2_ids` are scaled to unit norm first.
FeatureStore extract_features(const NetworkGraph& graph, const ParamSet& params, const Dataset& data,
                              const std::vector<std::string>& node_ids,
                              const std::vector<std::string>& l2_ids, const Preprocess& pp,
                              std::size_t batch_size = 64);

/// Little-endian: "MLFS", u32 version, u32 count, u32 dim, count*dim f32, count i32 labels.
void save_features(const FeatureStore& store, const std::filesystem::path& file);
FeatureStore load_features(const std::filesystem::path& file);

}  // namespace mlctx
