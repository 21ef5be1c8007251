#include "mlctx/data/augment.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "mlctx/tensor/ops.hpp"
#include "mlctx/tensor/seed.hpp"

namespace mlctx {

void Preprocess::validate(std::size_t channels) const {
  if (crop == 0 || base == 0) throw std::invalid_argument("preprocess sizes must be >= 1");
  if (crop > base) {
    throw std::invalid_argument("crop " + std::to_string(crop) + " exceeds base " + std::to_string(base));
  }
  if (mean.size() != channels) {
    throw std::invalid_argument("mean pixel has " + std::to_string(mean.size()) + " channels, image has " +
                                std::to_string(channels));
  }
}

void normalize(Tensor& image, const Preprocess& pp) {
  const auto& s = image.shape();
  if (pp.mean.size() != s.c) throw std::invalid_argument("mean pixel channel count mismatch");
  const std::size_t plane = s.h * s.w;
  auto d = image.data();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const float m = static_cast<float>(pp.mean[c]);
      const float k = static_cast<float>(pp.scale);
      float* p = d.data() + (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - m) * k;
    }
  }
}

CropDraw draw_crop(const Preprocess& pp, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, {fnv1a("crop")}));
  std::uniform_int_distribution<std::size_t> offset(0, pp.base - pp.crop);
  CropDraw d;
  d.top = offset(rng);
  d.left = offset(rng);
  d.mirror = (rng() & 1u) != 0;
  return d;
}

namespace {

Tensor square_normalized(const Tensor& image, const Preprocess& pp) {
  if (image.shape().n != 1) throw ShapeError("preprocess expects one image, got " + image.shape().str());
  pp.validate(image.shape().c);
  // Normalize before resizing, as tta_crops callers do, so a one-crop plan matches exactly.
  Tensor x = image;
  normalize(x, pp);
  if (x.shape().h == pp.base && x.shape().w == pp.base) return x;
  return resize_bilinear(x, pp.base, pp.base);
}

}  // namespace

Tensor preprocess_train(const Tensor& image, const Preprocess& pp, std::uint64_t seed) {
  const Tensor sq = square_normalized(image, pp);
  const auto d = draw_crop(pp, seed);
  Tensor out = crop(sq, d.top, d.left, pp.crop, pp.crop);
  return d.mirror ? mirror_h(out) : out;
}

Tensor preprocess_center(const Tensor& image, const Preprocess& pp) {
  const Tensor sq = square_normalized(image, pp);
  const std::size_t off = (pp.base - pp.crop) / 2;
  return crop(sq, off, off, pp.crop, pp.crop);
}

void CropPlan::validate() const {
  if (scales.empty()) throw std::invalid_argument("crop plan needs at least one scale");
  if (positions_per_scale != 1 && positions_per_scale != 3) {
    throw std::invalid_argument("crop plan positions must be 1 or 3");
  }
  if (crops_per_square != 1 && crops_per_square != 6) {
    throw std::invalid_argument("crop plan crops per square must be 1 or 6");
  }
  for (auto s : scales) {
    if (crop_size == 0 || crop_size > s) {
      throw std::invalid_argument("crop size " + std::to_string(crop_size) + " exceeds scale " +
                                  std::to_string(s));
    }
  }
}

std::string CropPlan::str() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < scales.size(); ++i) os << (i ? "," : "") << scales[i];
  os << ":" << crop_size << ":" << positions_per_scale << "x" << crops_per_square
     << (mirror ? ":mirror" : ":nomirror");
  return os.str();
}

// "mini", "full", "center:<base>:<crop>", or "<s1>,<s2>,...:<crop>[:<positions>x<crops>][:mirror|:nomirror]"
CropPlan CropPlan::parse(const std::string& text) {
  if (text == "mini") return mini_default();
  if (text == "full") return full_default();
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  auto num = [&](const std::string& s) -> std::size_t {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw std::invalid_argument("bad crop plan '" + text + "'");
    return v;
  };
  CropPlan plan;
  if (parts.size() == 3 && parts[0] == "center") {
    plan = single(num(parts[1]), num(parts[2]));
  } else {
    if (parts.size() < 2 || parts.size() > 4) throw std::invalid_argument("bad crop plan '" + text + "'");
    plan.scales.clear();
    std::stringstream sc(parts[0]);
    for (std::string s; std::getline(sc, s, ',');) plan.scales.push_back(num(s));
    plan.crop_size = num(parts[1]);
    for (std::size_t i = 2; i < parts.size(); ++i) {
      if (parts[i] == "mirror") {
        plan.mirror = true;
      } else if (parts[i] == "nomirror") {
        plan.mirror = false;
      } else if (auto x = parts[i].find('x'); x != std::string::npos) {
        plan.positions_per_scale = num(parts[i].substr(0, x));
        plan.crops_per_square = num(parts[i].substr(x + 1));
      } else {
        throw std::invalid_argument("bad crop plan '" + text + "'");
      }
    }
  }
  plan.validate();
  return plan;
}

template <typename T>
BasicTensor<T> resize_shorter(const BasicTensor<T>& image, std::size_t shorter) {
  const auto& s = image.shape();
  std::size_t h = shorter, w = shorter;
  if (s.h < s.w) {
    w = static_cast<std::size_t>(std::lround(static_cast<double>(s.w) * static_cast<double>(shorter) /
                                             static_cast<double>(s.h)));
  } else if (s.w < s.h) {
    h = static_cast<std::size_t>(std::lround(static_cast<double>(s.h) * static_cast<double>(shorter) /
                                             static_cast<double>(s.w)));
  }
  if (h == s.h && w == s.w) return image;
  return resize_bilinear(image, h, w);
}

template <typename T>
std::vector<BasicTensor<T>> tta_crops(const BasicTensor<T>& image, const CropPlan& plan) {
  plan.validate();
  if (image.shape().n != 1) throw ShapeError("tta_crops expects one image, got " + image.shape().str());
  const std::size_t k = plan.crop_size;
  std::vector<BasicTensor<T>> out;
  out.reserve(plan.total());
  for (auto scale : plan.scales) {
    const auto resized = resize_shorter(image, scale);
    const std::size_t h = resized.shape().h, w = resized.shape().w;
    const std::size_t side = std::min(h, w);
    const std::size_t slack = std::max(h, w) - side;
    std::vector<std::size_t> starts;
    if (plan.positions_per_scale == 1) {
      starts = {slack / 2};
    } else {
      starts = {0, slack / 2, slack};
    }
    for (auto start : starts) {
      const std::size_t top = h > w ? start : 0;
      const std::size_t left = h > w ? 0 : start;
      const auto square = crop(resized, top, left, side, side);
      const std::size_t far = side - k, mid = (side - k) / 2;
      if (plan.crops_per_square == 1) {
        out.push_back(crop(square, mid, mid, k, k));
        continue;
      }
      out.push_back(crop(square, 0, 0, k, k));
      out.push_back(crop(square, 0, far, k, k));
      out.push_back(crop(square, far, 0, k, k));
      out.push_back(crop(square, far, far, k, k));
      out.push_back(crop(square, mid, mid, k, k));
      out.push_back(side == k ? square : resize_bilinear(square, k, k));
    }
  }
  if (plan.mirror) {
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out.push_back(mirror_h(out[i]));
  }
  return out;
}

template std::vector<Tensor> tta_crops(const Tensor&, const CropPlan&);
template std::vector<TensorD> tta_crops(const TensorD&, const CropPlan&);
template Tensor resize_shorter(const Tensor&, std::size_t);
template TensorD resize_shorter(const TensorD&, std::size_t);

}  // namespace mlctx
