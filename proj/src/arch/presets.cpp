#include "mlctx/arch/presets.hpp"

#include <algorithm>
#include <stdexcept>

namespace mlctx {

namespace {

constexpr std::string_view kAllSuffix = "-all";

const std::vector<std::string> kAlexStages{"conv1", "conv2", "conv3", "conv4", "conv5"};
const std::vector<std::string> kInceptionStages{"inception3a", "inception3b", "inception4a",
                                                "inception4b", "inception4c", "inception4d",
                                                "inception4e", "inception5a", "inception5b"};
const std::vector<std::string> kMiniInceptionStages{"inception3a", "inception3b", "inception5a",
                                                    "inception5b"};

const std::vector<std::string>& stages(Family family, Scale scale) {
  if (family == Family::alexnet) return kAlexStages;
  return scale == Scale::full ? kInceptionStages : kMiniInceptionStages;
}

void validate(const ArchPreset& p) {
  if (p.num_classes < 1) throw std::invalid_argument("preset needs at least one class");
  if (p.multilevel == p.skip_sources.empty()) {
    throw std::invalid_argument("skip_sources must be non-empty exactly when multilevel is set");
  }
  const auto& st = stages(p.family, p.scale);
  for (const auto& s : p.skip_sources) {
    auto it = std::find(st.begin(), st.end(), s);
    if (it == st.end()) throw std::invalid_argument("unknown skip source '" + s + "'");
    if (it + 1 == st.end()) {
      throw std::invalid_argument("skip source '" + s + "' is the trunk top, not below it");
    }
  }
}

// Pools `from` down to `target` spatial extent, optionally squashing with tanh.
std::string pooled_skip(GraphBuilder& b, const std::string& stage, const std::string& from,
                        const Shape& target, const PoolSpec& pool, bool squash) {
  std::string cur = from;
  for (int k = 1; b.shape_of(cur).h > target.h; ++k) {
    cur = b.maxpool(stage + "_skip_pool" + std::to_string(k), cur, pool);
  }
  const Shape s = b.shape_of(cur);
  if (s.h != target.h || s.w != target.w) {
    throw ShapeError("skip from '" + stage + "' pools to " + s.str() + ", classifier input is " +
                     target.str());
  }
  if (squash) cur = b.tanh(stage + "_skip_tanh", cur);
  return cur;
}

NetworkGraph build_alexnet(const ArchPreset& p) {
  const bool full = p.scale == Scale::full;
  GraphBuilder b(p.key(), p.input.value_or(default_input(p.scale, p.family)));
  const PoolSpec pool = full ? PoolSpec{3, 2, 0} : PoolSpec{2, 2, 0};
  if (full) {
    b.conv("conv1", "data", ConvSpec::square(96, 11, 4, 0));
  } else {
    b.conv("conv1", "data", ConvSpec::square(32, 3, 1, 1));
  }
  b.relu("relu1", "conv1");
  b.lrn("norm1", "relu1");
  b.maxpool("pool1", "norm1", pool);
  b.conv("conv2", "pool1", full ? ConvSpec::square(256, 5, 1, 2) : ConvSpec::square(64, 3, 1, 1));
  b.relu("relu2", "conv2");
  b.lrn("norm2", "relu2");
  b.maxpool("pool2", "norm2", pool);
  const std::size_t c3 = full ? 384 : 96, c5 = full ? 256 : 64;
  b.conv("conv3", "pool2", ConvSpec::square(c3, 3, 1, 1));
  b.relu("relu3", "conv3");
  b.conv("conv4", "relu3", ConvSpec::square(c3, 3, 1, 1));
  b.relu("relu4", "conv4");
  b.conv("conv5", "relu4", ConvSpec::square(c5, 3, 1, 1));
  b.relu("relu5", "conv5");
  std::string top = b.maxpool("pool5", "relu5", pool);

  if (p.multilevel) {
    const Shape target = b.shape_of(top);
    std::vector<std::string> ins{top};
    for (const auto& stage : kAlexStages) {
      if (std::find(p.skip_sources.begin(), p.skip_sources.end(), stage) == p.skip_sources.end())
        continue;
      ins.push_back(pooled_skip(b, stage, "relu" + stage.substr(4), target, pool, true));
    }
    top = b.concat("concat", ins);
  }

  const std::size_t hidden = full ? 4096 : 256;
  b.fc("fc6", top, hidden);
  b.relu("relu6", "fc6");
  b.dropout("drop6", "relu6", 0.5);
  b.fc("fc7", "drop6", hidden);
  b.relu("relu7", "fc7");
  b.dropout("drop7", "relu7", 0.5);
  b.fc("fc8", "drop7", p.num_classes);
  b.softmax_xent("prob", "fc8");
  return std::move(b).build();
}

void aux_head(GraphBuilder& b, const std::string& name, const std::string& from, std::size_t hidden,
              std::size_t classes) {
  b.set_train_only(true);
  b.avgpool_global(name + "/pool", from);
  std::string cur = name + "/pool";
  if (hidden > 0) {
    b.fc(name + "/fc_hidden", cur, hidden);
    cur = b.relu(name + "/relu", name + "/fc_hidden");
  }
  b.fc(name + "/classifier", cur, classes);
  b.softmax_xent(name + "/prob", name + "/classifier", true);
  b.set_train_only(false);
}

NetworkGraph build_inception(const ArchPreset& p) {
  const bool full = p.scale == Scale::full;
  GraphBuilder b(p.key(), p.input.value_or(default_input(p.scale, p.family)));
  std::string cur;
  std::vector<std::pair<std::string, std::string>> outputs;  // stage -> output node
  auto block = [&](const std::string& name, const InceptionWidths& w) {
    cur = inception_block(b, name, cur, w);
    outputs.emplace_back(name, cur);
  };

  if (full) {
    const PoolSpec down{3, 2, 1};
    b.conv("conv1", "data", ConvSpec::square(64, 7, 2, 3));
    b.relu("relu1", "conv1");
    b.maxpool("pool1", "relu1", down);
    b.lrn("norm1", "pool1");
    b.conv("conv2_reduce", "norm1", ConvSpec::square(64, 1));
    b.relu("relu2_reduce", "conv2_reduce");
    b.conv("conv2", "relu2_reduce", ConvSpec::square(192, 3, 1, 1));
    b.relu("relu2", "conv2");
    b.lrn("norm2", "relu2");
    cur = b.maxpool("pool2", "norm2", down);
    block("inception3a", {64, 96, 128, 16, 32, 32});
    block("inception3b", {128, 128, 192, 32, 96, 64});
    cur = b.maxpool("pool3", cur, down);
    block("inception4a", {192, 96, 208, 16, 48, 64});
    if (p.aux_heads) aux_head(b, "loss1", cur, 1024, p.num_classes);
    block("inception4b", {160, 112, 224, 24, 64, 64});
    block("inception4c", {128, 128, 256, 24, 64, 64});
    block("inception4d", {112, 144, 288, 32, 64, 64});
    if (p.aux_heads) aux_head(b, "loss2", cur, 1024, p.num_classes);
    block("inception4e", {256, 160, 320, 32, 128, 128});
    cur = b.maxpool("pool4", cur, down);
    block("inception5a", {256, 160, 320, 32, 128, 128});
    block("inception5b", {384, 192, 384, 48, 128, 128});
  } else {
    const PoolSpec down{2, 2, 0};
    b.conv("conv1", "data", ConvSpec::square(32, 3, 1, 1));
    b.relu("relu1", "conv1");
    cur = b.maxpool("pool1", "relu1", down);
    block("inception3a", {32, 32, 48, 8, 8, 8});
    block("inception3b", {32, 48, 64, 8, 16, 16});
    if (p.aux_heads) aux_head(b, "loss1", cur, 0, p.num_classes);
    cur = b.maxpool("pool3", cur, down);
    block("inception5a", {32, 32, 48, 8, 8, 8});
    block("inception5b", {32, 48, 64, 8, 16, 16});
  }

  if (p.multilevel) {
    // Top block first, then the requested lower blocks from the highest down.
    const Shape target = b.shape_of(cur);
    std::vector<std::string> ins{cur};
    const PoolSpec pool = full ? PoolSpec{3, 2, 1} : PoolSpec{2, 2, 0};
    for (auto it = outputs.rbegin() + 1; it != outputs.rend(); ++it) {
      if (std::find(p.skip_sources.begin(), p.skip_sources.end(), it->first) == p.skip_sources.end())
        continue;
      ins.push_back(pooled_skip(b, it->first, it->second, target, pool, false));
    }
    cur = b.concat("concat", ins);
  }

  b.avgpool_global("pool5", cur);
  b.dropout("drop5", "pool5", 0.6);
  b.fc("fc", "drop5", p.num_classes);
  b.softmax_xent("prob", "fc");
  return std::move(b).build();
}

}  // namespace

std::string ArchPreset::key() const {
  std::string k = family == Family::alexnet ? "alexnet" : "inception";
  k += scale == Scale::mini ? "-mini" : "-full";
  if (all_sources) {
    k += kAllSuffix;
  } else if (multilevel) {
    k += "++";
  }
  return k;
}

std::vector<std::string> conv_stages(Family family) {
  return family == Family::alexnet ? kAlexStages : kInceptionStages;
}

InitPolicy default_init(const ArchPreset& preset) {
  if (preset.family == Family::alexnet && preset.scale == Scale::full) return InitPolicy::gaussian();
  return InitPolicy::normalized();
}

Shape default_input(Scale scale, Family family) {
  if (scale == Scale::mini) return Shape{1, 3, 32, 32};
  return family == Family::alexnet ? Shape{1, 3, 227, 227} : Shape{1, 3, 224, 224};
}

ArchPreset parse_preset(std::string_view key, std::size_t num_classes) {
  ArchPreset p;
  std::string_view rest = key;
  if (rest.starts_with("alexnet-")) {
    p.family = Family::alexnet;
    rest.remove_prefix(8);
  } else if (rest.starts_with("inception-")) {
    p.family = Family::inception;
    rest.remove_prefix(10);
  } else {
    throw std::invalid_argument("unknown preset '" + std::string(key) + "'");
  }
  if (rest.starts_with("mini")) {
    p.scale = Scale::mini;
  } else if (rest.starts_with("full")) {
    p.scale = Scale::full;
  } else {
    throw std::invalid_argument("unknown preset '" + std::string(key) + "'");
  }
  rest.remove_prefix(4);
  const auto& st = stages(p.family, p.scale);
  if (rest == "++") {
    p.multilevel = true;
    p.skip_sources = {st[st.size() - 2]};
  } else if (rest == kAllSuffix) {
    p.multilevel = true;
    p.all_sources = true;
    p.skip_sources.assign(st.begin(), st.end() - 1);
  } else if (!rest.empty()) {
    throw std::invalid_argument("unknown preset '" + std::string(key) + "'");
  }
  p.num_classes = num_classes ? num_classes : (p.scale == Scale::mini ? 10 : 1000);
  p.aux_heads = p.family == Family::inception;
  return p;
}

std::vector<std::string> preset_keys() {
  std::vector<std::string> keys;
  for (const char* f : {"alexnet", "inception"})
    for (const char* s : {"mini", "full"})
      for (const char* v : {"", "++", "-all"}) keys.push_back(std::string(f) + "-" + s + v);
  return keys;
}

std::string inception_block(GraphBuilder& b, const std::string& name, const std::string& input,
                            const InceptionWidths& w) {
  for (auto v : {w.b1, w.b3r, w.b3, w.b5r, w.b5, w.pool_proj}) {
    if (v < 1) throw std::invalid_argument("inception block '" + name + "' has a zero width");
  }
  b.set_group(name);
  const std::string p = name + "/";
  b.conv(p + "1x1", input, ConvSpec::square(w.b1, 1));
  b.relu(p + "relu_1x1", p + "1x1");
  b.conv(p + "3x3_reduce", input, ConvSpec::square(w.b3r, 1));
  b.relu(p + "relu_3x3_reduce", p + "3x3_reduce");
  b.conv(p + "3x3", p + "relu_3x3_reduce", ConvSpec::square(w.b3, 3, 1, 1));
  b.relu(p + "relu_3x3", p + "3x3");
  b.conv(p + "5x5_reduce", input, ConvSpec::square(w.b5r, 1));
  b.relu(p + "relu_5x5_reduce", p + "5x5_reduce");
  b.conv(p + "5x5", p + "relu_5x5_reduce", ConvSpec::square(w.b5, 5, 1, 2));
  b.relu(p + "relu_5x5", p + "5x5");
  b.maxpool(p + "pool", input, PoolSpec{3, 1, 1});
  b.conv(p + "pool_proj", p + "pool", ConvSpec::square(w.pool_proj, 1));
  b.relu(p + "relu_pool_proj", p + "pool_proj");
  auto out = b.concat(p + "output", {p + "relu_1x1", p + "relu_3x3", p + "relu_5x5", p + "relu_pool_proj"});
  b.set_group("");
  return out;
}

NetworkGraph build(const ArchPreset& preset) {
  validate(preset);
  return preset.family == Family::alexnet ? build_alexnet(preset) : build_inception(preset);
}

}  // namespace mlctx
