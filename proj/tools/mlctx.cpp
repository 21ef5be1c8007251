#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mlctx/cli/commands.hpp"

using namespace mlctx;

namespace {

struct Flags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;
};

void add_flag(CLI::App* app, Flags& f, const std::string& name, const std::string& help) {
  const std::string key = name;
  app->add_option_function<std::string>(
      "--" + name, [&f, key](const std::string& v) { f.values[key] = v; }, help);
}

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config_file, "key=value config file")->check(CLI::ExistingFile);
  add_flag(app, f, "preset", "architecture preset, e.g. alexnet-mini++");
  add_flag(app, f, "seed", "run seed (required for train/eval/bench/prestudy)");
  add_flag(app, f, "out", "output directory");
  add_flag(app, f, "data", "'synthetic' or a cifar-10-batches-bin directory");
  add_flag(app, f, "precision", "single or double");
  app->add_option("--set", f.sets, "any config key as key=value (repeatable)");
}

void add_training(CLI::App* app, Flags& f) {
  add_flag(app, f, "epochs", "training epochs");
  add_flag(app, f, "batch", "batch size");
  add_flag(app, f, "lr", "base learning rate");
  add_flag(app, f, "schedule", "step:<divisor>:<e1>,<e2> or poly:<power>");
  add_flag(app, f, "aux-weight", "auxiliary loss weight");
  add_flag(app, f, "crop-plan", "mini, full, center:<base>:<crop> or <scales>:<crop>[:PxC][:mirror|:nomirror]");
}

RunConfig resolve(const Flags& f) {
  std::string preset = "alexnet-mini";
  if (!f.config_file.empty()) {
    RunConfig probe;
    probe.load_file(f.config_file);
    preset = probe.preset;
  }
  // --set first so the named flags win.
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  overrides.insert(overrides.end(), f.values.begin(), f.values.end());
  for (const auto& [k, v] : overrides) {
    if (k == "preset") preset = v;
  }
  auto cfg = RunConfig::defaults_for(preset);
  if (!f.config_file.empty()) cfg.load_file(f.config_file);
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilevel-context CNN training and evaluation"};
  app.require_subcommand(1);

  Flags train_f, eval_f, bench_f, pre_f;
  auto* train = app.add_subcommand("train", "train a preset and write log + checkpoint");
  add_common(train, train_f);
  add_training(train, train_f);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (center, multi or both)");
  add_common(eval, eval_f);
  add_flag(eval, eval_f, "checkpoint", "MLCK checkpoint to evaluate");
  add_flag(eval, eval_f, "mode", "center, multi or both");
  add_flag(eval, eval_f, "crop-plan", "test-time crop plan");

  auto* bench = app.add_subcommand("bench", "forward/backward timing, baseline first");
  add_common(bench, bench_f);
  add_flag(bench, bench_f, "presets", "comma-separated presets; the first is the baseline");
  add_flag(bench, bench_f, "batch", "batch size");
  add_flag(bench, bench_f, "reps", "timed repetitions (>= 10)");

  auto* shapes = app.add_subcommand("shapes", "print the layer input-size table");
  std::string shapes_preset = "alexnet-full++";
  shapes->add_option("preset", shapes_preset, "preset key")->required();

  auto* pre = app.add_subcommand("prestudy", "frozen-trunk feature study (conv5 vs conv4+conv5)");
  add_common(pre, pre_f);
  add_training(pre, pre_f);
  add_flag(pre, pre_f, "classes", "comma-separated class-subset sizes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      cmd_train(resolve(train_f), std::cout);
    } else if (eval->parsed()) {
      auto f = eval_f;
      if (f.values.count("mode")) f.values["eval_mode"] = f.values["mode"], f.values.erase("mode");
      cmd_eval(resolve(f), std::cout);
    } else if (bench->parsed()) {
      auto f = bench_f;
      for (const auto& [from, to] : {std::pair{"presets", "bench_presets"}, {"batch", "bench_batch"}, {"reps", "bench_reps"}}) {
        if (f.values.count(from)) f.values[to] = f.values[from], f.values.erase(from);
      }
      cmd_bench(resolve(f), std::cout);
    } else if (shapes->parsed()) {
      const auto r = cmd_shapes(shapes_preset, std::cout);
      return r.diff.empty() ? 0 : 1;
    } else if (pre->parsed()) {
      auto f = pre_f;
      if (f.values.count("classes")) f.values["prestudy_classes"] = f.values["classes"], f.values.erase("classes");
      cmd_prestudy(resolve(f), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
