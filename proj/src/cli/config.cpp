#include "mlctx/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mlctx {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, sep);) out.push_back(trim(part));
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw std::invalid_argument(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

}  // namespace

Schedule parse_schedule(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() == 2 && parts[0] == "poly") return Schedule::poly(to_double("schedule", parts[1]));
  if (parts.size() == 3 && parts[0] == "step") {
    std::vector<std::size_t> ms;
    for (const auto& m : split(parts[2], ',')) ms.push_back(to_size("schedule", m));
    return Schedule::step(to_double("schedule", parts[1]), ms);
  }
  throw std::invalid_argument("schedule: expected 'step:<divisor>:<e1>,<e2>,...' or 'poly:<power>', got '" +
                              text + "'");
}

std::string schedule_string(const Schedule& s) {
  if (s.kind == Schedule::Kind::poly) return "poly:" + fmt(s.power);
  return "step:" + fmt(s.divisor) + ":" + join(s.milestones);
}

RunConfig RunConfig::defaults_for(const std::string& preset) {
  RunConfig c;
  c.preset = preset;
  const auto p = parse_preset(preset);
  const bool mini = p.scale == Scale::mini;
  if (p.family == Family::inception) {
    c.train.base_lr = 0.01;
    c.train.momentum = 0.9;
    c.train.weight_decay = 0.0002;
    c.train.batch_size = 32;
    c.train.epochs = 133;
    c.train.schedule = Schedule::poly(0.5);
    c.aux_weight = 0.3;
  } else {
    c.train.base_lr = 0.01;
    c.train.momentum = 0.9;
    c.train.weight_decay = 0.0005;
    c.train.batch_size = mini ? 64 : 256;
    c.train.epochs = 90;
    c.train.schedule = Schedule::step(10.0, {30, 60});
    c.aux_weight = 0.0;
  }
  c.crop_plan = mini ? CropPlan::mini_default() : CropPlan::full_default();
  return c;
}

void RunConfig::set(const std::string& raw_key, const std::string& raw_value) {
  std::string key = trim(raw_key);
  for (auto& ch : key) ch = ch == '-' ? '_' : ch;
  const std::string v = trim(raw_value);
  if (key == "preset") {
    parse_preset(v);
    preset = v;
  } else if (key == "lr") {
    train.base_lr = to_double(key, v);
  } else if (key == "momentum") {
    train.momentum = to_double(key, v);
  } else if (key == "weight_decay") {
    train.weight_decay = to_double(key, v);
  } else if (key == "batch") {
    train.batch_size = to_size(key, v);
  } else if (key == "epochs") {
    train.epochs = to_size(key, v);
  } else if (key == "max_iter") {
    train.max_iter = to_size(key, v);
  } else if (key == "schedule") {
    train.schedule = parse_schedule(v);
  } else if (key == "aux_weight") {
    aux_weight = to_double(key, v);
  } else if (key == "init") {
    if (v != "default" && v != "gaussian" && v != "normalized") {
      throw std::invalid_argument("init: expected default, gaussian or normalized");
    }
    init = v;
  } else if (key == "data") {
    data = v;
  } else if (key == "train_size") {
    train_size = to_size(key, v);
  } else if (key == "val_size") {
    val_size = to_size(key, v);
  } else if (key == "classes") {
    classes = to_size(key, v);
  } else if (key == "base_size") {
    base_size = to_size(key, v);
  } else if (key == "crop_size") {
    crop_size = to_size(key, v);
  } else if (key == "pixel_scale") {
    pixel_scale = to_double(key, v);
  } else if (key == "crop_plan") {
    crop_plan = CropPlan::parse(v);
  } else if (key == "seed") {
    seed = to_size(key, v);
  } else if (key == "out") {
    out = v;
  } else if (key == "precision") {
    if (v != "single" && v != "double") throw std::invalid_argument("precision: expected single or double");
    precision = v;
  } else if (key == "log_every") {
    log_every = to_size(key, v);
  } else if (key == "checkpoint_every") {
    checkpoint_every = to_size(key, v);
  } else if (key == "val_every") {
    val_every = to_size(key, v);
  } else if (key == "eval_batch") {
    eval_batch = to_size(key, v);
  } else if (key == "checkpoint") {
    checkpoint = v;
  } else if (key == "eval_mode") {
    if (v != "center" && v != "multi" && v != "both") {
      throw std::invalid_argument("eval_mode: expected center, multi or both");
    }
    eval_mode = v;
  } else if (key == "bench_presets") {
    bench_presets = split(v, ',');
    for (const auto& p : bench_presets) parse_preset(p);
  } else if (key == "bench_batch") {
    bench_batch = to_size(key, v);
  } else if (key == "bench_reps") {
    bench_reps = to_size(key, v);
  } else if (key == "prestudy_classes") {
    prestudy_classes.clear();
    for (const auto& c : split(v, ',')) prestudy_classes.push_back(to_size(key, c));
  } else if (key == "trunk_epochs") {
    trunk_epochs = to_size(key, v);
  } else if (key == "head_epochs") {
    head_epochs = to_size(key, v);
  } else if (key == "head_hidden") {
    head_hidden = to_size(key, v);
  } else {
    throw std::invalid_argument("unknown config key '" + raw_key + "'");
  }
}

void RunConfig::load_file(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw std::invalid_argument("cannot read config " + file.string());
  std::size_t line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(file.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw std::invalid_argument("a seed is required (--seed or seed=...)");
  return *seed;
}

void RunConfig::validate() const {
  require_seed();
  train.validate();
  crop_plan.validate();
  if (data != "synthetic" && !std::filesystem::is_directory(data)) {
    throw std::invalid_argument("data directory '" + data + "' does not exist");
  }
  if (!checkpoint.empty() && !std::filesystem::exists(checkpoint)) {
    throw std::invalid_argument("checkpoint '" + checkpoint.string() + "' does not exist");
  }
  if (classes > 10) throw std::invalid_argument("classes must be <= 10");
  if (log_every == 0) throw std::invalid_argument("log_every must be >= 1");
  if (eval_batch == 0) throw std::invalid_argument("eval_batch must be >= 1");
  if (aux_weight < 0) throw std::invalid_argument("aux_weight must be >= 0");
}

ArchPreset RunConfig::arch(std::size_t num_classes) const {
  auto p = parse_preset(preset, num_classes);
  if (crop_size != 0) p.input = Shape{1, 3, crop_size, crop_size};
  return p;
}

InitPolicy RunConfig::init_policy(const ArchPreset& p) const {
  if (init == "gaussian") return InitPolicy::gaussian();
  if (init == "normalized") return InitPolicy::normalized();
  return default_init(p);
}

Preprocess RunConfig::preprocess(const ArchPreset& p, std::vector<double> mean) const {
  const Shape in = p.input.value_or(default_input(p.scale, p.family));
  Preprocess pp = p.scale == Scale::mini ? Preprocess::mini(std::move(mean)) : Preprocess::full(in.h, std::move(mean));
  pp.crop = in.h;
  if (base_size != 0) pp.base = base_size;
  if (pixel_scale != 0.0) pp.scale = pixel_scale;
  return pp;
}

std::map<std::string, std::string> RunConfig::as_map() const {
  std::map<std::string, std::string> m;
  m["preset"] = preset;
  m["lr"] = fmt(train.base_lr);
  m["momentum"] = fmt(train.momentum);
  m["weight_decay"] = fmt(train.weight_decay);
  m["batch"] = std::to_string(train.batch_size);
  m["epochs"] = std::to_string(train.epochs);
  m["max_iter"] = std::to_string(train.max_iter);
  m["schedule"] = schedule_string(train.schedule);
  m["aux_weight"] = fmt(aux_weight);
  m["init"] = init;
  m["data"] = data;
  m["train_size"] = std::to_string(train_size);
  m["val_size"] = std::to_string(val_size);
  m["classes"] = std::to_string(classes);
  m["base_size"] = std::to_string(base_size);
  m["crop_size"] = std::to_string(crop_size);
  m["pixel_scale"] = fmt(pixel_scale);
  m["crop_plan"] = crop_plan.str();
  if (seed) m["seed"] = std::to_string(*seed);
  m["out"] = out.string();
  m["precision"] = precision;
  m["log_every"] = std::to_string(log_every);
  m["checkpoint_every"] = std::to_string(checkpoint_every);
  m["val_every"] = std::to_string(val_every);
  m["eval_batch"] = std::to_string(eval_batch);
  if (!checkpoint.empty()) m["checkpoint"] = checkpoint.string();
  m["eval_mode"] = eval_mode;
  m["bench_presets"] = join(bench_presets);
  m["bench_batch"] = std::to_string(bench_batch);
  m["bench_reps"] = std::to_string(bench_reps);
  m["prestudy_classes"] = join(prestudy_classes);
  m["trunk_epochs"] = std::to_string(trunk_epochs);
  m["head_epochs"] = std::to_string(head_epochs);
  m["head_hidden"] = std::to_string(head_hidden);
  return m;
}

std::string RunConfig::dump() const {
  std::string s;
  for (const auto& [k, v] : as_map()) s += k + "=" + v + "\n";
  return s;
}

}  // namespace mlctx
