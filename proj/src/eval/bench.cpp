#include "mlctx/eval/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>
#include <stdexcept>

#include "mlctx/nn/executor.hpp"
#include "mlctx/tensor/seed.hpp"

namespace mlctx {

namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

class Runner {
 public:
  Runner(const NetworkGraph& graph, const ParamSet& params, const BenchOptions& o)
      : graph_(graph), params_(params), input_(Shape{}) {
    Shape s = graph.input_shape();
    s.n = o.batch_size;
    input_ = Tensor(s);
    std::mt19937_64 rng(derive_seed(o.seed, {fnv1a("bench")}));
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (auto& v : input_.data()) v = u(rng);
    labels_.resize(o.batch_size);
    for (auto& l : labels_) l = static_cast<int>(rng() % graph.num_classes());
  }

  void pass(std::uint64_t seed, bool record) {
    params_.zero_grad();
    const auto t0 = Clock::now();
    const auto acts = forward(graph_, params_, input_, Mode::train, seed);
    const auto t1 = Clock::now();
    backward(graph_, params_, acts, labels_, 0.0);
    const auto t2 = Clock::now();
    if (record) {
      fwd_.push_back(ms_between(t0, t1));
      bwd_.push_back(ms_between(t1, t2));
    }
  }

  TimingReport report(const BenchOptions& o) const {
    TimingReport r;
    r.preset = graph_.name();
    r.batch_size = o.batch_size;
    r.repetitions = fwd_.size();
    r.forward_ms = median(fwd_);
    r.backward_ms = median(bwd_);
    r.total_ms = r.forward_ms + r.backward_ms;
    return r;
  }

  const std::vector<double>& forward_times() const { return fwd_; }
  double total_at(std::size_t i) const { return fwd_[i] + bwd_[i]; }

 private:
  const NetworkGraph& graph_;
  ParamSet params_;
  Tensor input_;
  std::vector<int> labels_;
  std::vector<double> fwd_, bwd_;
};

void check(const BenchOptions& o) {
  if (o.reps < 10) throw std::invalid_argument("benchmark needs reps >= 10");
  if (o.warmup < 3) throw std::invalid_argument("benchmark needs warmup >= 3");
  if (o.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
}

}  // namespace

TimingReport benchmark(const NetworkGraph& graph, const ParamSet& params, const BenchOptions& options) {
  check(options);
  Runner r(graph, params, options);
  for (std::size_t i = 0; i < options.warmup; ++i) r.pass(i, false);
  for (std::size_t i = 0; i < options.reps; ++i) r.pass(options.warmup + i, true);
  return r.report(options);
}

TimingComparison compare_timing(const NetworkGraph& base, const ParamSet& base_params,
                                const NetworkGraph& other, const ParamSet& other_params,
                                const BenchOptions& options) {
  check(options);
  Runner a(base, base_params, options), b(other, other_params, options);
  for (std::size_t i = 0; i < options.warmup; ++i) {
    a.pass(i, false);
    b.pass(i, false);
  }
  for (std::size_t i = 0; i < options.reps; ++i) {
    // Alternate which graph goes first so neither always inherits the other's cache state.
    if (i % 2 == 0) {
      a.pass(options.warmup + i, true);
      b.pass(options.warmup + i, true);
    } else {
      b.pass(options.warmup + i, true);
      a.pass(options.warmup + i, true);
    }
  }
  TimingComparison c;
  c.base = a.report(options);
  c.other = b.report(options);
  // Ratios are paired per repetition, then the median is taken, so slow drift cancels.
  std::vector<double> fwd, total;
  for (std::size_t i = 0; i < options.reps; ++i) {
    fwd.push_back(b.forward_times()[i] / a.forward_times()[i]);
    total.push_back(b.total_at(i) / a.total_at(i));
  }
  c.forward_ratio = median(fwd);
  c.total_ratio = median(total);
  return c;
}

std::string timing_csv_header() { return "preset,batch,reps,forward_ms,backward_ms,total_ms"; }

std::string timing_csv_row(const TimingReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.4f,%.4f,%.4f", r.preset.c_str(), r.batch_size, r.repetitions,
                r.forward_ms, r.backward_ms, r.total_ms);
  return buf;
}

std::string timing_table(const std::vector<TimingReport>& rows) {
  std::size_t w = 7;
  for (const auto& r : rows) w = std::max(w, r.preset.size());
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s | %12s | %12s | %12s\n", static_cast<int>(w), "Network", "Forward ms",
                "Backward ms", "Sum ms");
  os << buf << std::string(w, '-') << "-+-" << std::string(12, '-') << "-+-" << std::string(12, '-') << "-+-"
     << std::string(12, '-') << "\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s | %12.3f | %12.3f | %12.3f\n", static_cast<int>(w), r.preset.c_str(),
                  r.forward_ms, r.backward_ms, r.total_ms);
    os << buf;
  }
  return os.str();
}

}  // namespace mlctx
