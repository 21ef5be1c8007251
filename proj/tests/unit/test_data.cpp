#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <set>

#include "mlctx/arch/presets.hpp"
#include "mlctx/data/augment.hpp"
#include "mlctx/data/dataset.hpp"
#include "mlctx/data/features.hpp"
#include "mlctx/tensor/ops.hpp"
#include "oracles.hpp"

using namespace mlctx;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("mlctx_data_" + std::to_string(std::random_device{}()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream os(p, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Handwritten CIFAR records: label byte then 3072 pixels whose value encodes (record, index).
std::vector<unsigned char> cifar_records(std::size_t n) {
  std::vector<unsigned char> out;
  for (std::size_t r = 0; r < n; ++r) {
    out.push_back(static_cast<unsigned char>(r % 10));
    for (std::size_t k = 0; k < 3072; ++k) out.push_back(static_cast<unsigned char>((r * 7 + k) % 251));
  }
  return out;
}

void push_be(std::vector<unsigned char>& v, std::uint32_t x) {
  for (int s = 24; s >= 0; s -= 8) v.push_back(static_cast<unsigned char>(x >> s));
}

Tensor coordinate_image(std::size_t h, std::size_t w) {
  Tensor t({1, 3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) t(0, c, y, x) = static_cast<float>(y * 1000 + x);
  return t;
}

}  // namespace

TEST(Cifar, RecordCountFromFileSize) {
  TempDir dir;
  write_bytes(dir / "batch.bin", cifar_records(10000));
  ASSERT_EQ(fs::file_size(dir / "batch.bin"), 10000u * 3073u);
  const auto d = load_cifar10_batch(dir / "batch.bin");
  EXPECT_EQ(d.size(), 10000u);
  EXPECT_EQ(d.image(9999).shape(), (Shape{1, 3, 32, 32}));
  EXPECT_EQ(d.labels[9999], 9);
  EXPECT_EQ(d.raw(3)[5], static_cast<std::uint8_t>((3 * 7 + 5) % 251));
}

TEST(Cifar, RoundTripReproducesBytes) {
  TempDir dir;
  write_bytes(dir / "a.bin", cifar_records(25));
  save_cifar10_batch(load_cifar10_batch(dir / "a.bin"), dir / "b.bin");
  EXPECT_EQ(read_bytes(dir / "a.bin"), read_bytes(dir / "b.bin"));
}

TEST(Cifar, EmptyFileRejected) {
  TempDir dir;
  write_bytes(dir / "empty.bin", {});
  EXPECT_THROW(load_cifar10_batch(dir / "empty.bin"), binio::FormatError);
}

TEST(Cifar, TruncatedRecordReportsOffset) {
  TempDir dir;
  auto bytes = cifar_records(3);
  bytes.resize(bytes.size() - 100);
  write_bytes(dir / "t.bin", bytes);
  try {
    load_cifar10_batch(dir / "t.bin");
    FAIL();
  } catch (const binio::FormatError& e) {
    EXPECT_EQ(e.offset(), 2u * 3073u);
  }
}

TEST(Cifar, BadLabelReportsOffset) {
  TempDir dir;
  auto bytes = cifar_records(4);
  bytes[2 * 3073] = 10;
  write_bytes(dir / "l.bin", bytes);
  try {
    load_cifar10_batch(dir / "l.bin");
    FAIL();
  } catch (const binio::FormatError& e) {
    EXPECT_EQ(e.offset(), 2u * 3073u);
    EXPECT_NE(std::string(e.what()).find("label 10"), std::string::npos);
  }
}

TEST(Cifar, DirectoryLoadConcatenatesBatches) {
  TempDir dir;
  for (int b = 1; b <= 5; ++b) write_bytes(dir / ("data_batch_" + std::to_string(b) + ".bin"), cifar_records(3));
  write_bytes(dir / "test_batch.bin", cifar_records(2));
  EXPECT_EQ(load_cifar10(dir / "", true).size(), 15u);
  EXPECT_EQ(load_cifar10(dir / "", false).size(), 2u);
}

TEST(Idx, HeaderParse) {
  TempDir dir;
  std::vector<unsigned char> img, lab;
  push_be(img, 0x00000803);
  push_be(img, 3);
  push_be(img, 28);
  push_be(img, 28);
  for (std::size_t k = 0; k < 3 * 784; ++k) img.push_back(static_cast<unsigned char>(k % 256));
  push_be(lab, 0x00000801);
  push_be(lab, 3);
  lab.insert(lab.end(), {7, 0, 4});
  write_bytes(dir / "img", img);
  write_bytes(dir / "lab", lab);

  const auto d = load_idx(dir / "img", dir / "lab");
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.image(0).shape(), (Shape{1, 1, 28, 28}));
  EXPECT_EQ(d.labels, (std::vector<int>{7, 0, 4}));
  EXPECT_EQ(d.raw(2)[0], static_cast<std::uint8_t>((2 * 784) % 256));

  save_idx(d, dir / "img2", dir / "lab2");
  EXPECT_EQ(read_bytes(dir / "img"), read_bytes(dir / "img2"));
  EXPECT_EQ(read_bytes(dir / "lab"), read_bytes(dir / "lab2"));
}

TEST(Idx, BadMagicAndTruncation) {
  TempDir dir;
  std::vector<unsigned char> img;
  push_be(img, 0x00000802);
  push_be(img, 1);
  push_be(img, 2);
  push_be(img, 2);
  img.insert(img.end(), {1, 2, 3, 4});
  std::vector<unsigned char> lab;
  push_be(lab, 0x00000801);
  push_be(lab, 1);
  lab.push_back(1);
  write_bytes(dir / "img", img);
  write_bytes(dir / "lab", lab);
  EXPECT_THROW(load_idx(dir / "img", dir / "lab"), binio::FormatError);

  img[3] = 0x03;
  img.pop_back();
  write_bytes(dir / "img", img);
  try {
    load_idx(dir / "img", dir / "lab");
    FAIL();
  } catch (const binio::FormatError& e) {
    EXPECT_EQ(e.offset(), 19u);
  }
}

TEST(Idx, LabelCountMismatchRejected) {
  TempDir dir;
  Dataset d;
  d.channels = 1;
  d.height = d.width = 2;
  d.append(std::vector<std::uint8_t>{1, 2, 3, 4}, 1);
  d.append(std::vector<std::uint8_t>{5, 6, 7, 8}, 2);
  save_idx(d, dir / "img", dir / "lab");
  save_idx(d.head(1), dir / "img1", dir / "lab1");
  EXPECT_THROW(load_idx(dir / "img", dir / "lab1"), binio::FormatError);
}

TEST(MeanPixel, PerChannelAverage) {
  Dataset d;
  d.channels = 2;
  d.height = 1;
  d.width = 2;
  d.append(std::vector<std::uint8_t>{0, 10, 100, 200}, 0);
  d.append(std::vector<std::uint8_t>{20, 30, 0, 0}, 1);
  const auto m = mean_pixel(d);
  EXPECT_DOUBLE_EQ(m[0], 15.0);
  EXPECT_DOUBLE_EQ(m[1], 75.0);
}

TEST(Dataset, FilterClassesRelabels) {
  const auto d = synthetic_cifar(200, 10, 3);
  const std::vector<int> keep{7, 2};
  const auto f = d.filter_classes(keep);
  std::size_t expected = 0;
  for (int l : d.labels) expected += (l == 7 || l == 2);
  EXPECT_EQ(f.size(), expected);
  for (int l : f.labels) EXPECT_TRUE(l == 0 || l == 1);
}

TEST(Synthetic, DeterministicAndBalancedEnough) {
  const auto a = synthetic_cifar(500, 10, 11);
  const auto b = synthetic_cifar(500, 10, 11);
  EXPECT_EQ(a.pixels, b.pixels);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(synthetic_cifar(500, 10, 12).pixels, a.pixels);
  std::vector<int> count(10);
  for (int l : a.labels) ++count[static_cast<std::size_t>(l)];
  for (int c : count) EXPECT_GT(c, 20);
}

TEST(Preprocess, FullScaleCropGeometry) {
  Preprocess pp{256, 227, {120, 115, 100}, 1.0};
  std::set<std::size_t> tops, lefts;
  for (std::uint64_t s = 0; s < 3000; ++s) {
    const auto d = draw_crop(pp, s);
    EXPECT_LE(d.top, 29u);
    EXPECT_LE(d.left, 29u);
    tops.insert(d.top);
    lefts.insert(d.left);
  }
  EXPECT_EQ(tops.size(), 30u);
  EXPECT_EQ(lefts.size(), 30u);
  const auto out = preprocess_train(coordinate_image(40, 50), pp, 1);
  EXPECT_EQ(out.shape(), (Shape{1, 3, 227, 227}));
}

TEST(Preprocess, BaseEqualsCropTakesWholeImage) {
  Preprocess pp{32, 32, {10, 20, 30}, 0.5};
  const auto img = coordinate_image(32, 32);
  Tensor whole = img;
  normalize(whole, pp);
  for (std::uint64_t s = 0; s < 8; ++s) {
    const auto out = preprocess_train(img, pp, s);
    EXPECT_TRUE(out == whole || out == mirror_h(whole));
  }
}

TEST(Preprocess, MirrorRate) {
  Preprocess pp{36, 32, {0, 0, 0}, 1.0};
  int mirrored = 0;
  for (std::uint64_t s = 0; s < 4000; ++s) mirrored += draw_crop(pp, s).mirror;
  // Binomial(4000, 0.5): sigma ~ 31.6
  EXPECT_NEAR(mirrored, 2000, 3 * 31.6);
}

TEST(Preprocess, SameSeedBitIdentical) {
  const auto d = synthetic_cifar(1, 10, 5);
  const auto pp = Preprocess::mini(mean_pixel(d));
  EXPECT_EQ(preprocess_train(d.image(0), pp, 42), preprocess_train(d.image(0), pp, 42));
}

TEST(Preprocess, CropLargerThanBaseRejected) {
  Preprocess pp{32, 33, {0, 0, 0}, 1.0};
  EXPECT_THROW(preprocess_train(coordinate_image(32, 32), pp, 0), std::invalid_argument);
}

// Pixels i.i.d. per channel, so any crop has the same expectation as the whole image.
TEST(Preprocess, OutputMeanApproachesZero) {
  std::mt19937_64 rng(9);
  Dataset d;
  for (int i = 0; i < 400; ++i) {
    std::vector<std::uint8_t> px(3072);
    for (std::size_t c = 0; c < 3; ++c) {
      std::uniform_int_distribution<int> u(static_cast<int>(c) * 40, static_cast<int>(c) * 40 + 150);
      for (std::size_t k = 0; k < 1024; ++k) px[c * 1024 + k] = static_cast<std::uint8_t>(u(rng));
    }
    d.append(px, 0);
  }
  const auto pp = Preprocess::mini(mean_pixel(d));
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> means;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto out = preprocess_train(d.image(i), pp, i);
      double s = 0;
      for (std::size_t k = 0; k < 1024; ++k) s += out.data()[c * 1024 + k];
      means.push_back(s / 1024.0);
    }
    double m = 0, v = 0;
    for (double x : means) m += x;
    m /= static_cast<double>(means.size());
    for (double x : means) v += (x - m) * (x - m);
    const double se = std::sqrt(v / static_cast<double>(means.size() - 1) / static_cast<double>(means.size()));
    EXPECT_LT(std::abs(m), 3 * se) << "channel " << c;
  }
}

TEST(CropPlan, CountsAndParse) {
  EXPECT_EQ(CropPlan::full_default().total(), 144u);
  EXPECT_EQ(CropPlan::mini_default().total(), 144u);
  EXPECT_EQ(CropPlan::single(36, 32).total(), 1u);
  EXPECT_EQ(CropPlan::parse("mini").str(), CropPlan::mini_default().str());
  const auto p = CropPlan::parse("40,44:32:3x6:nomirror");
  EXPECT_EQ(p.total(), 36u);
  EXPECT_EQ(CropPlan::parse(p.str()).str(), p.str());
  EXPECT_EQ(CropPlan::parse("center:36:32").total(), 1u);
  EXPECT_THROW(CropPlan::parse("30:32"), std::invalid_argument);
  EXPECT_THROW(CropPlan::parse("36:32:2x6"), std::invalid_argument);
  EXPECT_THROW(CropPlan::parse("abc"), std::invalid_argument);
}

TEST(TtaCrops, FullDefaultOnLandscapeImage) {
  std::mt19937_64 rng(1);
  const auto img = mlctx::testing::random_tensor<float>({1, 3, 375, 500}, rng, 0.0, 255.0);
  const auto crops = tta_crops(img, CropPlan::full_default());
  ASSERT_EQ(crops.size(), 144u);
  for (const auto& c : crops) EXPECT_EQ(c.shape(), (Shape{1, 3, 224, 224}));
  for (std::size_t i = 0; i < 72; ++i) EXPECT_EQ(crops[i + 72], mirror_h(crops[i])) << i;
}

TEST(TtaCrops, MiniDefault) {
  const auto d = synthetic_cifar(1, 10, 2);
  const auto crops = tta_crops(d.image(0), CropPlan::mini_default());
  ASSERT_EQ(crops.size(), 144u);
  for (const auto& c : crops) EXPECT_EQ(c.shape(), (Shape{1, 3, 32, 32}));
}

TEST(TtaCrops, DegenerateSquareAllIdentical) {
  const auto img = coordinate_image(50, 50);
  const auto crops = tta_crops(img, CropPlan{{32}, 3, 6, false, 32});
  ASSERT_EQ(crops.size(), 18u);
  const auto resized = resize_bilinear(img, 32, 32);
  for (const auto& c : crops) EXPECT_EQ(c, resized);
}

// Top-left pixel of each crop encodes its source coordinates as y*1000 + x.
TEST(TtaCrops, PositionOracle) {
  const CropPlan plan{{40}, 3, 6, false, 32};
  const std::vector<std::pair<int, int>> in_square{{0, 0}, {0, 8}, {8, 0}, {8, 8}, {4, 4}};
  for (bool portrait : {false, true}) {
    const auto img = portrait ? coordinate_image(60, 40) : coordinate_image(40, 60);
    const auto crops = tta_crops(img, plan);
    ASSERT_EQ(crops.size(), 18u);
    std::size_t i = 0;
    for (int start : {0, 10, 20}) {
      const int sy = portrait ? start : 0, sx = portrait ? 0 : start;
      for (auto [y, x] : in_square) {
        EXPECT_EQ(crops[i](0, 0, 0, 0), static_cast<float>((sy + y) * 1000 + sx + x)) << i;
        ++i;
      }
      EXPECT_EQ(crops[i](0, 0, 0, 0), static_cast<float>(sy * 1000 + sx)) << i;
      EXPECT_EQ(crops[i](0, 0, 31, 31), static_cast<float>((sy + 39) * 1000 + sx + 39)) << i;
      ++i;
    }
  }
}

TEST(TtaCrops, CountFormulaProperty) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    CropPlan plan;
    plan.crop_size = 4 + rng() % 8;
    plan.scales.clear();
    for (std::size_t s = 0, n = 1 + rng() % 3; s < n; ++s) plan.scales.push_back(plan.crop_size + rng() % 10);
    plan.positions_per_scale = rng() % 2 ? 3 : 1;
    plan.crops_per_square = rng() % 2 ? 6 : 1;
    plan.mirror = rng() % 2;
    const auto img = mlctx::testing::random_tensor<float>(
        {1, 2, 5 + rng() % 20, 5 + rng() % 20}, rng, 0.0, 1.0);
    const auto crops = tta_crops(img, plan);
    ASSERT_EQ(crops.size(), plan.total()) << plan.str();
    for (const auto& c : crops) EXPECT_EQ(c.shape(), (Shape{1, 2, plan.crop_size, plan.crop_size}));
  }
}

TEST(TtaCrops, SingleCropPlanMatchesCenterPreprocess) {
  const auto d = synthetic_cifar(5, 10, 8);
  const auto pp = Preprocess::mini(mean_pixel(d));
  for (std::size_t i = 0; i < d.size(); ++i) {
    Tensor x = d.image(i);
    normalize(x, pp);
    const auto crops = tta_crops(x, CropPlan::single(pp.base, pp.crop));
    ASSERT_EQ(crops.size(), 1u);
    EXPECT_EQ(crops[0], preprocess_center(d.image(i), pp));
  }
}

TEST(TtaCrops, CropBeyondScaleRejected) {
  EXPECT_THROW(tta_crops(coordinate_image(40, 40), CropPlan{{30}, 3, 6, true, 32}), std::invalid_argument);
}

class Features : public ::testing::Test {
 protected:
  Features() : graph(build(parse_preset("alexnet-mini"))) {
    params = init_params<float>(graph, InitPolicy::normalized(), 3);
    data = synthetic_cifar(12, 10, 4);
    pp = Preprocess::mini(mean_pixel(data));
  }
  NetworkGraph graph;
  ParamSet params;
  Dataset data;
  Preprocess pp;
};

TEST_F(Features, Conv5Width) {
  const auto store = extract_features(graph, params, data, {"conv5"}, {}, pp);
  EXPECT_EQ(store.count, 12u);
  EXPECT_EQ(store.dim, graph.infer_shapes(1)[graph.index_of("conv5")].per_sample());
  EXPECT_EQ(store.labels, data.labels);
}

TEST_F(Features, L2SliceHasUnitNorm) {
  const auto store = extract_features(graph, params, data, {"conv4", "conv5"}, {"conv4"}, pp);
  const auto shapes = graph.infer_shapes(1);
  const std::size_t w4 = shapes[graph.index_of("conv4")].per_sample();
  EXPECT_EQ(store.dim, w4 + shapes[graph.index_of("conv5")].per_sample());
  for (std::size_t i = 0; i < store.count; ++i) {
    double ss = 0;
    for (std::size_t k = 0; k < w4; ++k) ss += static_cast<double>(store.row(i)[k]) * store.row(i)[k];
    EXPECT_NEAR(std::sqrt(ss), 1.0, 1e-5);
  }
}

TEST_F(Features, OrderStable) {
  const auto a = extract_features(graph, params, data, {"conv5"}, {}, pp, 1);
  std::vector<std::size_t> rev(data.size());
  for (std::size_t i = 0; i < rev.size(); ++i) rev[i] = rev.size() - 1 - i;
  const auto b = extract_features(graph, params, data.subset(rev), {"conv5"}, {}, pp, 1);
  for (std::size_t i = 0; i < a.count; ++i) {
    const auto ra = a.row(i), rb = b.row(rev[i]);
    EXPECT_TRUE(std::equal(ra.begin(), ra.end(), rb.begin())) << i;
  }
  const auto batched = extract_features(graph, params, data, {"conv5"}, {}, pp, 5);
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    ASSERT_NEAR(a.values[k], batched.values[k], 1e-5f * (1.0f + std::abs(a.values[k])));
  }
}

TEST_F(Features, UnknownNodeRejected) {
  EXPECT_THROW(extract_features(graph, params, data, {"conv9"}, {}, pp), std::invalid_argument);
  EXPECT_THROW(extract_features(graph, params, data, {"conv5"}, {"conv4"}, pp), std::invalid_argument);
}

TEST_F(Features, StoreRoundTripAndEmpty) {
  TempDir dir;
  const auto store = extract_features(graph, params, data.head(3), {"conv5"}, {}, pp);
  save_features(store, dir / "f.mlfs");
  const auto back = load_features(dir / "f.mlfs");
  EXPECT_EQ(back.values, store.values);
  EXPECT_EQ(back.labels, store.labels);
  EXPECT_EQ(back.dim, store.dim);

  const auto empty = extract_features(graph, params, data.head(0), {"conv5"}, {}, pp);
  save_features(empty, dir / "e.mlfs");
  EXPECT_EQ(fs::file_size(dir / "e.mlfs"), 16u);
  const auto e = load_features(dir / "e.mlfs");
  EXPECT_EQ(e.count, 0u);
  EXPECT_EQ(e.dim, store.dim);

  auto bytes = read_bytes(dir / "f.mlfs");
  bytes[0] = 'X';
  std::ofstream(dir / "bad.mlfs", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  EXPECT_THROW(load_features(dir / "bad.mlfs"), binio::FormatError);
}
