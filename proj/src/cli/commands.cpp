#include "mlctx/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "mlctx/cli/checkpoint.hpp"
#include "mlctx/data/features.hpp"
#include "mlctx/nn/executor.hpp"
#include "mlctx/tensor/seed.hpp"

namespace mlctx {

namespace {

constexpr std::uint64_t kTrainDataSeed = 1;
constexpr std::uint64_t kValDataSeed = 2;

std::ofstream open_out(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  return os;
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string f6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

Tensor image_batch(const Dataset& data, std::span<const std::size_t> idx, const Preprocess& pp,
                   std::uint64_t seed, std::size_t epoch) {
  std::vector<Tensor> xs;
  xs.reserve(idx.size());
  for (auto i : idx) xs.push_back(preprocess_train(data.image(i), pp, derive_seed(seed, {fnv1a("augment"), epoch, i})));
  return stack_batch(std::span<const Tensor>(xs));
}

void check_classes(const DataSplits& s, const NetworkGraph& g) {
  if (s.num_classes != g.num_classes() || s.train.num_classes() > g.num_classes()) {
    throw std::invalid_argument("dataset has " + std::to_string(s.num_classes) + " classes but preset " + g.name() +
                                " has " + std::to_string(g.num_classes()));
  }
}

}  // namespace

DataSplits load_splits(const RunConfig& config) {
  DataSplits s;
  s.num_classes = config.classes ? config.classes : 10;
  if (config.data == "synthetic") {
    s.train = synthetic_cifar(config.train_size, s.num_classes, kTrainDataSeed);
    s.val = synthetic_cifar(config.val_size, s.num_classes, kValDataSeed);
    return s;
  }
  s.train = load_cifar10(config.data, true);
  s.val = load_cifar10(config.data, false);
  if (config.classes) {
    std::vector<int> keep(config.classes);
    std::iota(keep.begin(), keep.end(), 0);
    s.train = s.train.filter_classes(keep);
    s.val = s.val.filter_classes(keep);
  }
  if (config.train_size) s.train = s.train.head(config.train_size);
  if (config.val_size) s.val = s.val.head(config.val_size);
  return s;
}

template <typename T>
FitStats fit(const NetworkGraph& graph, BasicParamSet<T>& params, std::span<const int> labels,
             const BatchFn& batch, const TrainConfig& config, double aux_weight, std::uint64_t seed,
             const FitHooks& hooks) {
  config.validate();
  const std::size_t n = labels.size();
  if (n == 0) throw std::invalid_argument("cannot train on an empty dataset");
  const std::size_t ipe = iters_per_epoch(n, config.batch_size);
  FitStats stats;
  stats.max_iter = config.max_iter ? config.max_iter : config.epochs * ipe;

  using Clock = std::chrono::steady_clock;
  double busy = 0;
  std::vector<double> per_iter;
  std::vector<std::size_t> order(n);
  std::vector<int> batch_labels;
  std::size_t iter = 0;
  for (std::size_t epoch = 0; iter < stats.max_iter; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, {fnv1a("shuffle"), epoch}));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < ipe && iter < stats.max_iter; ++b, ++iter) {
      const auto t0 = Clock::now();
      const std::size_t begin = b * config.batch_size;
      const auto idx = std::span<const std::size_t>(order).subspan(begin, std::min(config.batch_size, n - begin));
      batch_labels.clear();
      for (auto i : idx) batch_labels.push_back(labels[i]);
      Tensor x = batch(idx, epoch);
      Activations<T> acts;
      if constexpr (std::is_same_v<T, float>) {
        acts = forward(graph, params, x, Mode::train, derive_seed(seed, {fnv1a("dropout"), iter}));
      } else {
        acts = forward(graph, params, x.template cast<T>(), Mode::train, derive_seed(seed, {fnv1a("dropout"), iter}));
      }
      const auto r = backward(graph, params, acts, batch_labels, aux_weight);
      if (!std::isfinite(r.loss)) throw NonFiniteLoss(iter, r.loss);
      const double lr = lr_at(config.schedule, config, iter, stats.max_iter, epoch);
      sgd_step(params, lr, config.momentum, config.weight_decay);
      per_iter.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
      busy += per_iter.back();
      stats.final_loss = r.loss;
      if (hooks.on_iteration) hooks.on_iteration(iter, epoch, lr, r.loss);
    }
    if (hooks.on_epoch) hooks.on_epoch(epoch, iter);
  }
  stats.iterations = iter;
  stats.seconds = busy;
  stats.seconds_per_iter = iter ? busy / static_cast<double>(iter) : 0.0;
  if (!per_iter.empty()) {
    auto mid = per_iter.begin() + static_cast<std::ptrdiff_t>(per_iter.size() / 2);
    std::nth_element(per_iter.begin(), mid, per_iter.end());
    stats.median_seconds_per_iter = *mid;
  }
  return stats;
}

template FitStats fit(const NetworkGraph&, BasicParamSet<float>&, std::span<const int>, const BatchFn&,
                      const TrainConfig&, double, std::uint64_t, const FitHooks&);
template FitStats fit(const NetworkGraph&, BasicParamSet<double>&, std::span<const int>, const BatchFn&,
                      const TrainConfig&, double, std::uint64_t, const FitHooks&);

namespace {

template <typename T>
TrainResult train_impl(const RunConfig& config, std::ostream& msg) {
  const std::uint64_t seed = config.require_seed();
  config.validate();
  const auto splits = load_splits(config);
  TrainResult res{config.arch(splits.num_classes), NetworkGraph{}, ParamSet{}, Preprocess{}, {}, {}, {}, {}};
  res.graph = build(res.preset);
  check_classes(splits, res.graph);
  res.preprocess = config.preprocess(res.preset, mean_pixel(splits.train));
  auto params = init_params<T>(res.graph, config.init_policy(res.preset), derive_seed(seed, {fnv1a("init")}));

  std::filesystem::create_directories(config.out);
  {
    auto cfg = open_out(config.out / "config.txt");
    cfg << config.dump();
  }
  res.log = config.out / "train_log.csv";
  res.checkpoint = config.out / "checkpoint.mlck";
  auto log = open_out(res.log);
  log << "kind,iter,epoch,lr,loss,val_top1\n";

  const std::size_t ipe = iters_per_epoch(splits.train.size(), config.train.batch_size);
  const std::size_t max_iter = config.train.max_iter ? config.train.max_iter : config.train.epochs * ipe;
  msg << res.preset.key() << ": " << splits.train.size() << " train / " << splits.val.size() << " val images, "
      << max_iter << " iterations (" << ipe << " per epoch), " << config.train.schedule.str() << "\n";

  auto as_float = [&]() {
    if constexpr (std::is_same_v<T, float>) {
      return params;
    } else {
      return params.template cast<float>();
    }
  };
  auto validate = [&]() {
    return evaluate(res.graph, as_float(), splits.val, res.preprocess,
                    {EvalMode::center_crop, config.crop_plan, config.eval_batch});
  };

  FitHooks hooks;
  std::size_t last_iter = 0;
  hooks.on_iteration = [&](std::size_t iter, std::size_t epoch, double lr, double loss) {
    last_iter = iter;
    if (iter % config.log_every == 0 || iter + 1 == max_iter) {
      log << "train," << iter << "," << epoch << "," << g17(lr) << "," << g17(loss) << ",\n";
    }
  };
  hooks.on_epoch = [&](std::size_t epoch, std::size_t done) {
    const bool last = done >= max_iter;
    if (config.val_every && (epoch + 1) % config.val_every == 0 && !last && splits.val.size()) {
      const auto r = validate();
      log << "val," << done << "," << epoch << ",,," << f6(r.top1) << "\n";
      msg << "epoch " << epoch + 1 << ": val top-1 " << f6(r.top1) << "\n";
    }
    if (config.checkpoint_every && (epoch + 1) % config.checkpoint_every == 0) {
      save_checkpoint(res.checkpoint, res.preset.key(), done, as_float());
    }
    log.flush();
  };

  const auto labels = splits.train.labels;
  BatchFn batch = [&](std::span<const std::size_t> idx, std::size_t epoch) {
    return image_batch(splits.train, idx, res.preprocess, seed, epoch);
  };
  try {
    res.stats = fit(res.graph, params, labels, batch, config.train, config.aux_weight, seed, hooks);
  } catch (const std::exception& e) {
    log.flush();
    msg << "training aborted after iteration " << last_iter << ": " << e.what() << "\n";
    throw;
  }
  res.params = as_float();
  save_checkpoint(res.checkpoint, res.preset.key(), res.stats.iterations, res.params);
  const double end_lr = lr_at(config.train.schedule, config.train, max_iter, max_iter,
                              max_iter / std::max<std::size_t>(ipe, 1));
  if (splits.val.size()) {
    res.val = validate();
    log << "end," << max_iter << "," << (max_iter - 1) / ipe << "," << g17(end_lr) << ","
        << g17(res.stats.final_loss) << "," << f6(res.val.top1) << "\n";
    msg << "final val top-1 " << f6(res.val.top1) << " top-" << res.val.top5_k << " " << f6(res.val.top5) << "\n";
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.3f ms/iter (median %.3f) over %zu iterations\n", 1e3 * res.stats.seconds_per_iter,
                1e3 * res.stats.median_seconds_per_iter, res.stats.iterations);
  msg << buf;
  return res;
}

}  // namespace

TrainResult cmd_train(const RunConfig& config, std::ostream& msg) {
  return config.precision == "double" ? train_impl<double>(config, msg) : train_impl<float>(config, msg);
}

std::vector<EvalReport> cmd_eval(const RunConfig& config, std::ostream& msg) {
  config.validate();
  if (config.checkpoint.empty()) throw std::invalid_argument("eval needs a checkpoint");
  const auto splits = load_splits(config);
  const auto preset = config.arch(splits.num_classes);
  const auto graph = build(preset);
  check_classes(splits, graph);
  auto params = init_params<float>(graph, InitPolicy::normalized(), 0);
  load_checkpoint_into(config.checkpoint, preset.key(), params);
  const auto pp = config.preprocess(preset, mean_pixel(splits.train));

  std::vector<EvalReport> reports;
  std::optional<EvalReport> center, multi;
  if (config.eval_mode == "center" || config.eval_mode == "both") {
    center = evaluate(graph, params, splits.val, pp, {EvalMode::center_crop, config.crop_plan, config.eval_batch});
    reports.push_back(*center);
  }
  if (config.eval_mode == "multi" || config.eval_mode == "both") {
    multi = evaluate(graph, params, splits.val, pp, {EvalMode::multi_crop, config.crop_plan, config.eval_batch});
    reports.push_back(*multi);
    msg << multi->forward_passes / std::max<std::size_t>(1, multi->num_samples) << " forward passes per image\n";
  }
  auto csv = open_out(config.out / "eval.csv");
  csv << eval_csv_header() << "\n";
  for (const auto& r : reports) csv << eval_csv_row(r) << "\n";
  const auto table = center ? eval_table({{*center, multi}}) : eval_table({{*multi, std::nullopt}});
  open_out(config.out / "eval.txt") << table;
  msg << table;
  return reports;
}

ShapesResult cmd_shapes(const std::string& key, std::ostream& msg) {
  const auto preset = parse_preset(key);
  const auto graph = build(preset);
  ShapesResult r;
  r.table = shape_table(graph);
  msg << r.table.to_text(key);
  if (preset.scale == Scale::full && !preset.all_sources) {
    r.has_reference = true;
    const auto ref = preset.family == Family::alexnet ? alexnet_reference(preset.multilevel)
                                                      : googlenet_reference(preset.multilevel);
    r.diff = diff_against(r.table, ref);
    msg << (r.diff.empty() ? "matches reference table (" + std::to_string(ref.size()) + " rows)\n"
                           : std::to_string(r.diff.size()) + " mismatches against reference table:\n");
    for (const auto& d : r.diff) msg << "  " << d << "\n";
  }
  return r;
}

std::vector<TimingComparison> cmd_bench(const RunConfig& config, std::ostream& msg) {
  const std::uint64_t seed = config.require_seed();
  if (config.bench_presets.size() < 2) throw std::invalid_argument("bench needs a baseline and at least one other preset");
  BenchOptions o;
  o.batch_size = config.bench_batch;
  o.reps = config.bench_reps;
  o.seed = seed;
  auto make = [&](const std::string& key) {
    const auto p = parse_preset(key);
    auto g = build(p);
    auto params = init_params<float>(g, default_init(p), derive_seed(seed, {fnv1a("init")}));
    return std::pair{std::move(g), std::move(params)};
  };
  const auto [base_graph, base_params] = make(config.bench_presets.front());
  std::vector<TimingComparison> out;
  std::vector<TimingReport> rows;
  for (std::size_t i = 1; i < config.bench_presets.size(); ++i) {
    const auto [g, p] = make(config.bench_presets[i]);
    out.push_back(compare_timing(base_graph, base_params, g, p, o));
    if (i == 1) rows.push_back(out.back().base);
    rows.push_back(out.back().other);
  }
  auto csv = open_out(config.out / "bench.csv");
  csv << timing_csv_header() << ",forward_ratio\n";
  csv << timing_csv_row(rows.front()) << ",1\n";
  for (const auto& c : out) csv << timing_csv_row(c.other) << "," << f6(c.forward_ratio) << "\n";
  std::ostringstream text;
  text << timing_table(rows);
  for (const auto& c : out) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "overhead %s vs %s: forward %+.2f%%, total %+.2f%%\n", c.other.preset.c_str(),
                  c.base.preset.c_str(), 100.0 * (c.forward_ratio - 1.0), 100.0 * (c.total_ratio - 1.0));
    text << buf;
  }
  open_out(config.out / "bench.txt") << text.str();
  msg << text.str();
  return out;
}

namespace {

NetworkGraph head_graph(std::size_t dim, std::size_t hidden, std::size_t classes) {
  GraphBuilder b("prestudy-head", Shape{1, dim, 1, 1}, "features");
  b.fc("fc6", "features", hidden);
  b.relu("relu6", "fc6");
  b.dropout("drop6", "relu6", 0.5);
  b.fc("fc7", "drop6", hidden);
  b.relu("relu7", "fc7");
  b.dropout("drop7", "relu7", 0.5);
  b.fc("fc8", "drop7", classes);
  b.softmax_xent("prob", "fc8");
  return std::move(b).build();
}

double head_top1(const NetworkGraph& g, const ParamSet& p, const FeatureStore& val, std::size_t k) {
  if (val.count == 0) return 0.0;
  std::vector<double> probs;
  for (std::size_t begin = 0; begin < val.count; begin += 256) {
    const auto part = predict(g, p, val.batch(begin, std::min<std::size_t>(256, val.count - begin)));
    probs.insert(probs.end(), part.begin(), part.end());
  }
  return topk_accuracy(probs, k, val.labels, 1);
}

}  // namespace

std::vector<PrestudyRow> cmd_prestudy(const RunConfig& config, std::ostream& msg) {
  const std::uint64_t seed = config.require_seed();
  config.validate();
  RunConfig trunk_cfg = config;
  trunk_cfg.preset = "alexnet-mini";
  trunk_cfg.classes = 0;
  trunk_cfg.train.epochs = config.trunk_epochs;
  trunk_cfg.train.max_iter = 0;
  trunk_cfg.out = config.out / "trunk";
  msg << "training trunk for " << config.trunk_epochs << " epochs\n";
  const auto trunk = cmd_train(trunk_cfg, msg);
  const auto all = load_splits(trunk_cfg);

  struct Variant {
    std::string name;
    std::vector<std::string> nodes, l2;
  };
  const std::vector<Variant> variants{{"conv5", {"relu5"}, {}},
                                      {"conv4(l2)+conv5", {"relu4", "relu5"}, {"relu4"}},
                                      {"conv4(raw)+conv5", {"relu4", "relu5"}, {}}};
  std::vector<PrestudyRow> rows;
  for (std::size_t k : config.prestudy_classes) {
    if (k < 2 || k > all.num_classes) throw std::invalid_argument("prestudy class subsets must be in [2, 10]");
    std::vector<int> classes(all.num_classes);
    std::iota(classes.begin(), classes.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, {fnv1a("classes"), k}));
    std::shuffle(classes.begin(), classes.end(), rng);
    classes.resize(k);
    std::sort(classes.begin(), classes.end());
    const auto train = all.train.filter_classes(classes);
    const auto val = all.val.filter_classes(classes);
    for (const auto& v : variants) {
      const auto ftrain = extract_features(trunk.graph, trunk.params, train, v.nodes, v.l2, trunk.preprocess);
      const auto fval = extract_features(trunk.graph, trunk.params, val, v.nodes, v.l2, trunk.preprocess);
      const auto head = head_graph(ftrain.dim, config.head_hidden, k);
      auto params = init_params<float>(head, InitPolicy::normalized(), derive_seed(seed, {fnv1a("head"), k}));
      TrainConfig tc = config.train;
      tc.epochs = config.head_epochs;
      tc.max_iter = 0;
      BatchFn batch = [&](std::span<const std::size_t> idx, std::size_t) {
        Tensor x({idx.size(), ftrain.dim, 1, 1});
        for (std::size_t i = 0; i < idx.size(); ++i) {
          const auto row = ftrain.row(idx[i]);
          std::copy(row.begin(), row.end(), x.sample(i).begin());
        }
        return x;
      };
      PrestudyRow row{k, v.name, ftrain.dim, 0.0, 0.0};
      try {
        const auto stats = fit(head, params, ftrain.labels, batch, tc, 0.0, derive_seed(seed, {fnv1a("fit"), k}));
        row.final_train_loss = stats.final_loss;
        row.val_top1 = head_top1(head, params, fval, k);
      } catch (const NonFiniteLoss&) {
        row.final_train_loss = std::nan("");
      } catch (const NonFiniteGradient&) {
        row.final_train_loss = std::nan("");
      }
      msg << k << " classes, " << v.name << " (dim " << row.feature_dim << "): loss " << f6(row.final_train_loss)
          << ", val top-1 " << f6(row.val_top1) << "\n";
      rows.push_back(row);
    }
  }
  auto csv = open_out(config.out / "prestudy.csv");
  csv << "classes,variant,feature_dim,final_train_loss,val_top1\n";
  for (const auto& r : rows) {
    csv << r.classes << "," << r.variant << "," << r.feature_dim << "," << g17(r.final_train_loss) << ","
        << f6(r.val_top1) << "\n";
  }
  const auto table = prestudy_table(rows);
  open_out(config.out / "prestudy.txt") << table;
  msg << table;
  return rows;
}

std::string prestudy_table(const std::vector<PrestudyRow>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s | %-8s | %-15s | %s\n", "", "conv5", "conv4 & conv5", "raw conv4 & conv5 loss");
  os << buf << std::string(12, '-') << "-+-" << std::string(8, '-') << "-+-" << std::string(15, '-') << "-+-"
     << std::string(22, '-') << "\n";
  std::vector<std::size_t> ks;
  for (const auto& r : rows) {
    if (std::find(ks.begin(), ks.end(), r.classes) == ks.end()) ks.push_back(r.classes);
  }
  for (auto k : ks) {
    double c5 = 0, c45 = 0, raw_loss = 0;
    for (const auto& r : rows) {
      if (r.classes != k) continue;
      if (r.variant == "conv5") c5 = r.val_top1;
      if (r.variant == "conv4(l2)+conv5") c45 = r.val_top1;
      if (r.variant == "conv4(raw)+conv5") raw_loss = r.final_train_loss;
    }
    std::snprintf(buf, sizeof buf, "%-12s | %7.2f%% | %14.2f%% | %.4f\n", (std::to_string(k) + " classes").c_str(),
                  100.0 * c5, 100.0 * c45, raw_loss);
    os << buf;
  }
  return os.str();
}

}  // namespace mlctx
