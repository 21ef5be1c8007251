#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "mlctx/nn/executor.hpp"
#include "mlctx/nn/gradcheck.hpp"
#include "mlctx/nn/layers.hpp"
#include "oracles.hpp"

using namespace mlctx;
using mlctx::testing::random_tensor;

namespace {

NetworkGraph single_layer(LayerKind kind, Shape in) {
  GraphBuilder b("single", in);
  if (kind == LayerKind::relu) b.relu("out", "data");
  if (kind == LayerKind::tanh) b.tanh("out", "data");
  return std::move(b).build();
}

std::vector<int> random_labels(std::size_t n, int k, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, k - 1);
  std::vector<int> l(n);
  for (auto& v : l) v = d(rng);
  return l;
}

}  // namespace

TEST(Forward, SingleReluAndTanh) {
  auto g = single_layer(LayerKind::relu, {1, 2, 1, 1});
  ParamSet none;
  auto a = forward(g, none, Tensor({1, 2, 1, 1}, std::vector<float>{-1, 2}), Mode::infer);
  EXPECT_EQ(a.at("out").vec(), (std::vector<float>{0, 2}));

  auto t = single_layer(LayerKind::tanh, {1, 1, 1, 1});
  auto b = forward(t, none, Tensor({1, 1, 1, 1}, 0.0f), Mode::infer);
  EXPECT_EQ(b.at("out")[0], 0.0f);
}

TEST(Forward, RejectsWrongInputShapeNamingBoth) {
  auto g = single_layer(LayerKind::relu, {1, 3, 4, 4});
  ParamSet none;
  try {
    forward(g, none, Tensor({1, 3, 5, 4}), Mode::infer);
    FAIL();
  } catch (const ShapeError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("data"), std::string::npos);
    EXPECT_NE(m.find("1x3x4x4"), std::string::npos);
    EXPECT_NE(m.find("1x3x5x4"), std::string::npos);
  }
}

TEST(Forward, TrainWithDropoutNeedsSeed) {
  GraphBuilder b("d", {1, 4, 1, 1});
  b.dropout("drop", "data", 0.5);
  auto g = std::move(b).build();
  ParamSet none;
  EXPECT_THROW(forward(g, none, Tensor({1, 4, 1, 1}), Mode::train), std::invalid_argument);
  EXPECT_NO_THROW(forward(g, none, Tensor({1, 4, 1, 1}), Mode::train, 3u));
}

TEST(Graph, BuilderRejectsDuplicateAndUnknownIds) {
  GraphBuilder b("g", {1, 2, 3, 3});
  b.relu("r", "data");
  EXPECT_THROW(b.relu("r", "data"), std::invalid_argument);
  EXPECT_THROW(b.relu("s", "missing"), std::invalid_argument);
}

TEST(Graph, ConcatMismatchNamesNode) {
  GraphBuilder b("g", {1, 2, 6, 6});
  b.maxpool("p", "data", PoolSpec{2, 2, 0});
  b.concat("cat", {"data", "p"});
  try {
    std::move(b).build();
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("cat"), std::string::npos);
  }
}

TEST(Lrn, DegenerateConstantsAreIdentity) {
  std::mt19937_64 rng(1);
  auto x = random_tensor<double>({2, 7, 3, 3}, rng);
  EXPECT_EQ(lrn(x, 5, 0.0, 1.0, 0.75).output, x);
}

TEST(Lrn, ScalarEvaluation) {
  auto r = lrn(TensorD({1, 1, 1, 1}, 1.0), 1, 1e-4, 2.0, 0.75);
  EXPECT_DOUBLE_EQ(r.output[0], 1.0 / std::pow(2.0001, 0.75));
}

TEST(Lrn, ZeroInputZeroOutput) {
  auto r = lrn(Tensor({1, 6, 2, 2}), LrnParams{});
  for (float v : r.output.data()) EXPECT_EQ(v, 0.0f);
}

TEST(L2Normalize, Cases) {
  auto y = l2_normalize(TensorD({1, 2, 1, 1}, std::vector<double>{3, 4}));
  EXPECT_DOUBLE_EQ(y[0], 0.6);
  EXPECT_DOUBLE_EQ(y[1], 0.8);
  TensorD unit({1, 3, 1, 1}, std::vector<double>{0, 1, 0});
  EXPECT_EQ(l2_normalize(unit), unit);
  TensorD zero({2, 3, 1, 1});
  EXPECT_EQ(l2_normalize(zero), zero);
}

TEST(InitParams, GaussianStatisticsAndBias) {
  GraphBuilder b("g", {1, 64, 1, 1});
  b.fc("fc", "data", 64);
  auto g = std::move(b).build();
  auto p = init_params<float>(g, InitPolicy::gaussian(0.0, 0.01, 0.1), 42);
  const auto& w = p.at("fc.weight").value;
  ASSERT_EQ(w.size(), 4096u);
  double mean = 0, sq = 0;
  for (float v : w.data()) mean += v;
  mean /= 4096.0;
  for (float v : w.data()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / 4095.0);
  EXPECT_NEAR(sd, 0.01, 0.001);
  for (float v : p.at("fc.bias").value.data()) EXPECT_EQ(v, 0.1f);
}

TEST(InitParams, RejectsNonPositiveStd) {
  EXPECT_THROW(InitPolicy::gaussian(0.0, 0.0), std::invalid_argument);
}

TEST(InitParams, NormalizedBoundForFanThree) {
  GraphBuilder b("g", {1, 3, 1, 1});
  b.fc("fc", "data", 3);
  auto g = std::move(b).build();
  auto p = init_params<double>(g, InitPolicy::normalized(), 5);
  for (double v : p.at("fc.weight").value.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  for (double v : p.at("fc.bias").value.data()) EXPECT_EQ(v, 0.0);
}

TEST(InitParams, DeterministicPerSeed) {
  GraphBuilder b("g", {1, 3, 8, 8});
  b.conv("c", "data", ConvSpec::square(4, 3, 1, 1));
  b.fc("f", "c", 5);
  auto g = std::move(b).build();
  auto a = init_params<float>(g, InitPolicy::gaussian(), 9);
  auto c = init_params<float>(g, InitPolicy::gaussian(), 9);
  auto d = init_params<float>(g, InitPolicy::gaussian(), 10);
  EXPECT_TRUE(a.same_values(c));
  EXPECT_FALSE(a.same_values(d));
}

TEST(Softmax, RowsAreProbabilityVectors) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    auto logits = random_tensor<float>({4, 10, 1, 1}, rng, -5.0, 5.0);
    auto p = softmax(logits);
    for (std::size_t n = 0; n < 4; ++n) {
      double s = 0;
      for (float v : p.sample(n)) {
        EXPECT_GT(v, 0.0f);
        EXPECT_LT(v, 1.0f);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-5);
    }
  }
}

TEST(Loss, UniformSoftmaxGivesLnK) {
  std::vector<int> labels{0, 3, 6};
  EXPECT_NEAR(softmax_cross_entropy(Tensor({3, 7, 1, 1}, 0.25f), labels), std::log(7.0), 1e-6);
}

TEST(Loss, OneHotPredictionIsZero) {
  TensorD p({2, 3, 1, 1}, std::vector<double>{0, 1, 0, 0, 0, 1});
  std::vector<int> labels{1, 2};
  EXPECT_EQ(cross_entropy(p, labels), 0.0);
  // Clamping keeps a wrong one-hot finite.
  std::vector<int> wrong{0, 0};
  EXPECT_NEAR(cross_entropy(p, wrong), -std::log(1e-12), 1e-6);
}

TEST(Loss, LabelOutOfRangeRejected) {
  GraphBuilder b("g", {1, 4, 1, 1});
  b.fc("fc", "data", 3);
  b.softmax_xent("prob", "fc");
  auto g = std::move(b).build();
  auto p = init_params<float>(g, InitPolicy::gaussian(), 1);
  auto a = forward(g, p, Tensor({2, 4, 1, 1}, 1.0f), Mode::train, 1u);
  std::vector<int> labels{0, 3};
  EXPECT_THROW(backward(g, p, a, labels, 0.0), std::out_of_range);
}

TEST(Dropout, TrainExpectationMatchesInfer) {
  const Shape s{1, 1, 1, 1};
  const double keep = 0.5;
  const int seeds = 4000;
  double sum = 0;
  for (int i = 0; i < seeds; ++i) sum += dropout_mask<double>(s, keep, static_cast<std::uint64_t>(i))[0];
  const double mean = sum / seeds;
  // Each draw is 2 or 0: variance (1/keep - 1) = 1.
  const double sigma = std::sqrt((1.0 / keep - 1.0) / seeds);
  EXPECT_LT(std::abs(mean - 1.0), 3 * sigma);
}

TEST(Dropout, InferIsIdentityAndDeterministic) {
  GraphBuilder b("d", {1, 16, 1, 1});
  b.dropout("drop", "data", 0.5);
  auto g = std::move(b).build();
  ParamSet none;
  std::mt19937_64 rng(2);
  auto x = random_tensor<float>({3, 16, 1, 1}, rng);
  EXPECT_EQ(forward(g, none, x, Mode::infer).at("drop"), x);
  EXPECT_EQ(forward(g, none, x, Mode::train, 4u).at("drop"), forward(g, none, x, Mode::train, 4u).at("drop"));
}

namespace {

NetworkGraph two_layer_fc() {
  GraphBuilder b("mlp", {1, 5, 1, 1});
  b.fc("fc1", "data", 7);
  b.tanh("act", "fc1");
  b.fc("fc2", "act", 3);
  b.softmax_xent("prob", "fc2");
  return std::move(b).build();
}

// conv, relu, lrn, maxpool, tanh, concat, l2norm, avgpool, fc with a train-only aux head.
NetworkGraph every_kind(bool with_aux) {
  GraphBuilder b("all", {1, 3, 6, 6});
  b.conv("conv1", "data", ConvSpec::square(4, 3, 1, 1));
  b.relu("relu1", "conv1");
  b.lrn("norm1", "relu1", LrnParams{3, 0.5, 0.75, 1.0});
  b.maxpool("pool1", "norm1", PoolSpec{2, 2, 0});
  b.conv("conv2", "pool1", ConvSpec::square(5, 3, 1, 1));
  b.tanh("tanh2", "conv2");
  b.maxpool("pool_skip", "norm1", PoolSpec{3, 2, 1});
  b.concat("cat", {"tanh2", "pool_skip"});
  b.l2norm("l2", "cat");
  b.avgpool_global("gpool", "cat");
  b.fc("fc_a", "l2", 6);
  b.fc("fc_b", "gpool", 6);
  b.concat("heads", {"fc_a", "fc_b"});
  b.dropout("drop", "heads", 1.0);
  b.fc("fc", "drop", 4);
  b.softmax_xent("prob", "fc");
  if (with_aux) {
    b.set_train_only(true);
    b.fc("aux_fc", "gpool", 4);
    b.softmax_xent("aux_prob", "aux_fc", true);
  }
  return std::move(b).build();
}

}  // namespace

TEST(Backward, AuxWeightZeroMatchesGraphWithoutAux) {
  auto with = every_kind(true);
  auto without = every_kind(false);
  auto pw = init_params<double>(with, InitPolicy::normalized(), 3);
  auto po = init_params<double>(without, InitPolicy::normalized(), 3);
  std::mt19937_64 rng(4);
  auto x = random_tensor<double>({2, 3, 6, 6}, rng);
  std::vector<int> labels{1, 3};
  auto aw = forward(with, pw, x, Mode::train, 1u);
  auto ao = forward(without, po, x, Mode::train, 1u);
  auto rw = backward(with, pw, aw, labels, 0.0);
  auto ro = backward(without, po, ao, labels, 0.0);
  EXPECT_EQ(rw.loss, ro.loss);
  for (const auto& e : po.entries()) {
    const auto& gw = pw.at(e.name).grad;
    for (std::size_t i = 0; i < gw.size(); ++i) EXPECT_EQ(gw[i], e.grad[i]) << e.name << i;
  }
  for (double v : pw.at("aux_fc.weight").grad.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, LossIncludesWeightedAux) {
  auto g = every_kind(true);
  auto p = init_params<double>(g, InitPolicy::normalized(), 3);
  std::mt19937_64 rng(5);
  auto x = random_tensor<double>({2, 3, 6, 6}, rng);
  std::vector<int> labels{0, 2};
  auto a = forward(g, p, x, Mode::train, 1u);
  auto r = backward(g, p, a, labels, 0.3);
  ASSERT_EQ(r.aux_losses.size(), 1u);
  EXPECT_DOUBLE_EQ(r.loss, r.main_loss + 0.3 * r.aux_losses[0]);
  EXPECT_FALSE(forward(g, p, x, Mode::infer).evaluated[g.index_of("aux_prob")]);
}

TEST(GradCheck, TwoLayerFcMatchesFiniteDifferences) {
  auto g = two_layer_fc();
  auto p = init_params<double>(g, InitPolicy::normalized(), 11);
  std::mt19937_64 rng(12);
  auto x = random_tensor<double>({4, 5, 1, 1}, rng);
  auto labels = random_labels(4, 3, rng);
  auto rep = grad_check(g, p, x, labels, 1e-6, GradCheckOptions{.include_input = true});
  EXPECT_EQ(rep.checked, p.scalar_count() + x.size());
  EXPECT_LT(rep.max_rel_error, 1e-6) << rep.worst;
}

TEST(GradCheck, EveryLayerKind) {
  auto g = every_kind(true);
  auto p = init_params<double>(g, InitPolicy::normalized(), 13);
  std::mt19937_64 rng(14);
  auto x = random_tensor<double>({2, 3, 6, 6}, rng);
  auto labels = random_labels(2, 4, rng);
  GradCheckOptions opts;
  opts.aux_weight = 0.3;
  opts.include_input = true;
  auto rep = grad_check(g, p, x, labels, 1e-6, opts);
  EXPECT_LT(rep.max_rel_error, 1e-5) << rep.worst;
}

TEST(GradCheck, DropoutWithFixedSeed) {
  GraphBuilder b("drop", {1, 6, 1, 1});
  b.fc("fc1", "data", 8);
  b.dropout("drop", "fc1", 0.5);
  b.fc("fc2", "drop", 3);
  b.softmax_xent("prob", "fc2");
  auto g = std::move(b).build();
  auto p = init_params<double>(g, InitPolicy::normalized(), 1);
  std::mt19937_64 rng(2);
  auto x = random_tensor<double>({3, 6, 1, 1}, rng);
  auto labels = random_labels(3, 3, rng);
  EXPECT_LT(grad_check(g, p, x, labels, 1e-6).max_rel_error, 1e-6);
}

TEST(GradCheck, QuadraticOneParameter) {
  std::vector<double> theta{0.7};
  std::vector<double> analytic{2 * (3.0 * 0.7 - 1.0) * 3.0};
  auto loss = [&] { return (3.0 * theta[0] - 1.0) * (3.0 * theta[0] - 1.0); };
  auto rep = compare_central_differences(loss, theta, analytic, 1e-4, {});
  EXPECT_LT(rep.max_rel_error, 1e-9);
}

TEST(GradCheck, RejectsZeroEps) {
  auto g = two_layer_fc();
  auto p = init_params<double>(g, InitPolicy::normalized(), 1);
  std::vector<int> labels{0};
  EXPECT_THROW(grad_check(g, p, TensorD({1, 5, 1, 1}), labels, 0.0), std::invalid_argument);
}

TEST(Forward, PureAcrossCalls) {
  auto g = every_kind(true);
  auto p = init_params<float>(g, InitPolicy::gaussian(), 21);
  std::mt19937_64 rng(22);
  auto x = random_tensor<float>({3, 3, 6, 6}, rng);
  auto a = forward(g, p, x, Mode::train, 99u);
  auto b = forward(g, p, x, Mode::train, 99u);
  EXPECT_EQ(a.outputs, b.outputs);
}

TEST(Backward, GradsAccumulateAcrossCalls) {
  auto g = two_layer_fc();
  auto p = init_params<double>(g, InitPolicy::normalized(), 1);
  std::mt19937_64 rng(3);
  auto x = random_tensor<double>({2, 5, 1, 1}, rng);
  std::vector<int> labels{0, 2};
  auto a = forward(g, p, x, Mode::train, 1u);
  backward(g, p, a, labels, 0.0);
  const auto once = p.at("fc1.weight").grad;
  backward(g, p, a, labels, 0.0);
  const auto& twice = p.at("fc1.weight").grad;
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(twice[i], 2 * once[i]);
}
