#include "mlctx/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "mlctx/tensor/seed.hpp"

namespace mlctx {

namespace {

constexpr std::size_t kCifarPixels = 3 * 32 * 32;
constexpr std::size_t kCifarRecord = 1 + kCifarPixels;
constexpr int kMaxLabel = 9;

std::ifstream open_in(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  return is;
}

std::ofstream open_out(const std::filesystem::path& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  return os;
}

}  // namespace

std::size_t Dataset::num_classes() const {
  if (!class_names.empty()) return class_names.size();
  int top = -1;
  for (int l : labels) top = std::max(top, l);
  return static_cast<std::size_t>(top + 1);
}

Tensor Dataset::image(std::size_t i) const {
  const auto px = raw(i);
  Tensor t({1, channels, height, width});
  auto d = t.data();
  for (std::size_t k = 0; k < px.size(); ++k) d[k] = static_cast<float>(px[k]);
  return t;
}

std::span<const std::uint8_t> Dataset::raw(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("image index " + std::to_string(i) + " of " + std::to_string(size()));
  return {pixels.data() + i * image_size(), image_size()};
}

void Dataset::append(std::span<const std::uint8_t> image, int label) {
  if (image.size() != image_size()) throw std::invalid_argument("image has wrong pixel count");
  if (label < 0) throw std::invalid_argument("negative label");
  pixels.insert(pixels.end(), image.begin(), image.end());
  labels.push_back(label);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.channels = channels;
  out.height = height;
  out.width = width;
  out.class_names = class_names;
  out.pixels.reserve(indices.size() * image_size());
  for (auto i : indices) out.append(raw(i), labels[i]);
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return subset(idx);
}

Dataset Dataset::filter_classes(std::span<const int> classes) const {
  Dataset out;
  out.channels = channels;
  out.height = height;
  out.width = width;
  for (int c : classes) {
    if (!class_names.empty() && static_cast<std::size_t>(c) < class_names.size()) {
      out.class_names.push_back(class_names[static_cast<std::size_t>(c)]);
    }
  }
  if (out.class_names.size() != classes.size()) out.class_names.clear();
  for (std::size_t i = 0; i < size(); ++i) {
    auto it = std::find(classes.begin(), classes.end(), labels[i]);
    if (it != classes.end()) out.append(raw(i), static_cast<int>(it - classes.begin()));
  }
  return out;
}

Dataset load_cifar10_batch(const std::filesystem::path& file) {
  auto is = open_in(file);
  const auto bytes = std::filesystem::file_size(file);
  if (bytes == 0) throw binio::FormatError(file.string() + ": empty CIFAR batch", 0);
  if (bytes % kCifarRecord != 0) {
    throw binio::FormatError(file.string() + ": truncated CIFAR record (size " + std::to_string(bytes) +
                                 " is not a multiple of " + std::to_string(kCifarRecord) + ")",
                             bytes - bytes % kCifarRecord);
  }
  const std::size_t n = bytes / kCifarRecord;
  Dataset d;
  d.pixels.resize(n * kCifarPixels);
  d.labels.resize(n);
  binio::Reader r(is);
  for (std::size_t i = 0; i < n; ++i) {
    const auto at = r.offset();
    std::uint8_t label;
    r.bytes(&label, 1, "CIFAR label");
    if (label > kMaxLabel) {
      throw binio::FormatError(file.string() + ": label " + std::to_string(label) + " out of range", at);
    }
    d.labels[i] = label;
    r.bytes(d.pixels.data() + i * kCifarPixels, kCifarPixels, "CIFAR pixels");
  }
  return d;
}

void save_cifar10_batch(const Dataset& data, const std::filesystem::path& file) {
  if (data.channels != 3 || data.height != 32 || data.width != 32) {
    throw std::invalid_argument("CIFAR batches hold 3x32x32 images");
  }
  auto os = open_out(file);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] > kMaxLabel) throw std::invalid_argument("CIFAR labels must be <= 9");
    const char label = static_cast<char>(data.labels[i]);
    os.write(&label, 1);
    const auto px = data.raw(i);
    os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  }
}

Dataset load_cifar10(const std::filesystem::path& dir, bool train) {
  Dataset out;
  std::vector<std::filesystem::path> files;
  if (train) {
    for (int b = 1; b <= 5; ++b) files.push_back(dir / ("data_batch_" + std::to_string(b) + ".bin"));
  } else {
    files.push_back(dir / "test_batch.bin");
  }
  for (const auto& f : files) {
    auto d = load_cifar10_batch(f);
    out.pixels.insert(out.pixels.end(), d.pixels.begin(), d.pixels.end());
    out.labels.insert(out.labels.end(), d.labels.begin(), d.labels.end());
  }
  std::ifstream names(dir / "batches.meta.txt");
  for (std::string line; std::getline(names, line);) {
    if (!line.empty()) out.class_names.push_back(line);
  }
  if (out.class_names.size() != 10) out.class_names.clear();
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  auto is = open_in(images);
  binio::Reader r(is);
  const auto magic = r.u32_be("IDX magic");
  if (magic != 0x00000803) throw binio::FormatError(images.string() + ": bad IDX image magic", 0);
  const std::size_t n = r.u32_be("IDX dims");
  Dataset d;
  d.channels = 1;
  d.height = r.u32_be("IDX dims");
  d.width = r.u32_be("IDX dims");
  if (d.height == 0 || d.width == 0) throw binio::FormatError(images.string() + ": zero image extent", 8);
  d.pixels.resize(n * d.image_size());
  r.bytes(d.pixels.data(), d.pixels.size(), "IDX pixels");

  auto ls = open_in(labels);
  binio::Reader lr(ls);
  if (lr.u32_be("IDX magic") != 0x00000801) {
    throw binio::FormatError(labels.string() + ": bad IDX label magic", 0);
  }
  const std::size_t nl = lr.u32_be("IDX dims");
  if (nl != n) {
    throw binio::FormatError(labels.string() + ": " + std::to_string(nl) + " labels for " +
                                 std::to_string(n) + " images",
                             4);
  }
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto at = lr.offset();
    std::uint8_t label;
    lr.bytes(&label, 1, "IDX label");
    if (label > kMaxLabel) {
      throw binio::FormatError(labels.string() + ": label " + std::to_string(label) + " out of range", at);
    }
    d.labels[i] = label;
  }
  return d;
}

void save_idx(const Dataset& data, const std::filesystem::path& images,
              const std::filesystem::path& labels) {
  if (data.channels != 1) throw std::invalid_argument("IDX images are single-channel");
  auto be = [](std::ostream& os, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    os.write(b, 4);
  };
  auto os = open_out(images);
  be(os, 0x00000803);
  be(os, static_cast<std::uint32_t>(data.size()));
  be(os, static_cast<std::uint32_t>(data.height));
  be(os, static_cast<std::uint32_t>(data.width));
  os.write(reinterpret_cast<const char*>(data.pixels.data()), static_cast<std::streamsize>(data.pixels.size()));
  auto ls = open_out(labels);
  be(ls, 0x00000801);
  be(ls, static_cast<std::uint32_t>(data.size()));
  for (int l : data.labels) {
    const char c = static_cast<char>(l);
    ls.write(&c, 1);
  }
}

std::vector<double> mean_pixel(const Dataset& train) {
  if (train.size() == 0) throw std::invalid_argument("mean pixel of an empty dataset");
  std::vector<double> mean(train.channels, 0.0);
  const std::size_t plane = train.height * train.width;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto px = train.raw(i);
    for (std::size_t c = 0; c < train.channels; ++c) {
      std::uint64_t s = 0;
      for (std::size_t k = 0; k < plane; ++k) s += px[c * plane + k];
      mean[c] += static_cast<double>(s);
    }
  }
  for (auto& m : mean) m /= static_cast<double>(train.size() * plane);
  return mean;
}

namespace {

struct ClassPattern {
  double colour_a[3], colour_b[3], blob[3];
  double freq, angle, blob_x, blob_y;
};

// Prototypes depend only on the class index so train and test draws share them.
ClassPattern class_pattern(std::size_t c) {
  std::mt19937_64 rng(derive_seed(0x5eed, {c}));
  std::uniform_real_distribution<double> col(30.0, 225.0), u(0.0, 1.0);
  ClassPattern p{};
  for (int k = 0; k < 3; ++k) {
    p.colour_a[k] = col(rng);
    p.colour_b[k] = col(rng);
    p.blob[k] = col(rng);
  }
  p.freq = 1.0 + 3.0 * u(rng);
  p.angle = std::numbers::pi * u(rng);
  p.blob_x = 8.0 + 16.0 * u(rng);
  p.blob_y = 8.0 + 16.0 * u(rng);
  return p;
}

}  // namespace

Dataset synthetic_cifar(std::size_t count, std::size_t num_classes, std::uint64_t seed) {
  if (num_classes == 0 || num_classes > 10) throw std::invalid_argument("synthetic_cifar: 1..10 classes");
  std::vector<ClassPattern> patterns;
  for (std::size_t c = 0; c < num_classes; ++c) patterns.push_back(class_pattern(c));

  Dataset d;
  d.pixels.resize(count * kCifarPixels);
  d.labels.resize(count);
  std::mt19937_64 rng(derive_seed(seed, {fnv1a("synthetic_cifar")}));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    const auto label = static_cast<std::size_t>(rng() % num_classes);
    const auto& p = patterns[label];
    // Half the samples borrow another class's colours, so colour alone is a weak cue.
    const auto& tint = u(rng) < 0.5 ? patterns[rng() % num_classes] : p;
    const double phase = 2.0 * std::numbers::pi * u(rng);
    const double contrast = 0.3 + 0.7 * u(rng);
    const double angle = p.angle + 0.8 * (u(rng) - 0.5);
    const double bx = p.blob_x + 12.0 * (u(rng) - 0.5), by = p.blob_y + 12.0 * (u(rng) - 0.5);
    const double radius = 2.5 + 3.5 * u(rng);
    const double brightness = 60.0 * (u(rng) - 0.5);
    const bool mirror = u(rng) < 0.5;
    const double ca = std::cos(angle), sa = std::sin(angle);
    std::uint8_t* px = d.pixels.data() + i * kCifarPixels;
    for (std::size_t y = 0; y < 32; ++y) {
      for (std::size_t x = 0; x < 32; ++x) {
        const double fx = mirror ? 31.0 - static_cast<double>(x) : static_cast<double>(x);
        const double fy = static_cast<double>(y);
        const double wave = std::sin(2.0 * std::numbers::pi * p.freq * (fx * ca + fy * sa) / 32.0 + phase);
        const double t = 0.5 + 0.5 * contrast * wave;
        const double r2 = (fx - bx) * (fx - bx) + (fy - by) * (fy - by);
        const double blob = std::exp(-r2 / (2.0 * radius * radius));
        for (std::size_t c = 0; c < 3; ++c) {
          double v = (1.0 - t) * tint.colour_a[c] + t * tint.colour_b[c];
          v = (1.0 - blob) * v + blob * tint.blob[c] + brightness + 40.0 * noise(rng);
          px[c * 1024 + y * 32 + x] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
      }
    }
    d.labels[i] = static_cast<int>(label);
  }
  return d;
}

}  // namespace mlctx
