#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlctx/nn/graph.hpp"
#include "mlctx/nn/params.hpp"

namespace mlctx {

enum class Family { alexnet, inception };
enum class Scale { mini, full };

struct ArchPreset {
  Family family = Family::alexnet;
  Scale scale = Scale::mini;
  bool multilevel = false;
  /// Conv-stage outputs below the trunk top whose activations join the classifier input.
  std::vector<std::string> skip_sources;
  std::size_t num_classes = 10;
  /// Train-only auxiliary classifiers (inception family).
  bool aux_heads = false;
  /// Set by parse_preset for the "-all" keys so key() round-trips.
  bool all_sources = false;
  /// Per-sample input extent; the scale default when unset.
  std::optional<Shape> input;

  std::string key() const;
};

/// Keys: "<alexnet|inception>-<mini|full>" plus "++" (top-two concat) or "-all" (every
/// conv stage). num_classes 0 picks the scale default (10 mini, 1000 full).
ArchPreset parse_preset(std::string_view key, std::size_t num_classes = 0);

/// Every preset key accepted by parse_preset.
std::vector<std::string> preset_keys();

/// Names of conv-stage outputs that may be used as skip sources, lowest first. The last
/// entry is the trunk top and is not itself a valid source.
std::vector<std::string> conv_stages(Family family);

Shape default_input(Scale scale, Family family);

NetworkGraph build(const ArchPreset& preset);

/// Gaussian(0, 0.01) for full-scale AlexNet; normalized init for inception and every mini
/// preset (the small gaussian starves the narrow mini layers of signal).
InitPolicy default_init(const ArchPreset& preset);

struct InceptionWidths {
  std::size_t b1, b3r, b3, b5r, b5, pool_proj;
  std::size_t out() const { return b1 + b3 + b5 + pool_proj; }
};

/// Four parallel branches (1x1; 1x1 -> 3x3; 1x1 -> 5x5; 3x3/1 max-pool -> 1x1) concatenated
/// on channels. Nodes carry `name` as their group. Returns the id of the output node.
std::string inception_block(GraphBuilder& b, const std::string& name, const std::string& input,
                            const InceptionWidths& widths);

}  // namespace mlctx
