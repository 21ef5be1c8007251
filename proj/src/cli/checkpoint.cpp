#include "mlctx/cli/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace mlctx {

namespace {
constexpr std::uint32_t kVersion = 1;
}

void save_checkpoint(const std::filesystem::path& file, const std::string& preset, std::uint64_t iteration,
                     const ParamSet& params) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os.write("MLCK", 4);
    binio::put_u32(os, kVersion);
    binio::put_str(os, preset);
    binio::put_u64(os, iteration);
    binio::put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& e : params.entries()) {
      binio::put_str(os, e.name);
      const auto& s = e.value.shape();
      for (auto d : {s.n, s.c, s.h, s.w}) binio::put_u32(os, static_cast<std::uint32_t>(d));
      for (float v : e.value.data()) binio::put_f32(os, v);
    }
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  binio::Reader r(is);
  char magic[4];
  r.bytes(magic, 4, "checkpoint magic");
  if (std::string(magic, 4) != "MLCK") throw binio::FormatError(file.string() + ": bad checkpoint magic", 0);
  const auto version = r.u32("checkpoint version");
  if (version != kVersion) {
    throw binio::FormatError(file.string() + ": unsupported checkpoint version " + std::to_string(version), 4);
  }
  Checkpoint c;
  c.preset = r.str("preset key");
  c.iteration = r.u64("iteration");
  const auto count = r.u32("entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = r.str("entry name");
    const auto at = r.offset();
    Shape s{r.u32("entry shape"), r.u32("entry shape"), r.u32("entry shape"), r.u32("entry shape")};
    if (!s.valid() || s.size() > (std::size_t{1} << 31)) {
      throw binio::FormatError(file.string() + ": entry '" + name + "' has invalid shape " + s.str(), at);
    }
    Tensor t(s);
    try {
      for (auto& v : t.data()) v = r.f32("entry values");
    } catch (const binio::FormatError&) {
      throw binio::FormatError(file.string() + ": entry '" + name + "' truncated", r.offset());
    }
    const bool bias = name.size() > 5 && name.ends_with(".bias");
    c.params.add(name, std::move(t), bias);
  }
  if (!r.at_end()) throw binio::FormatError(file.string() + ": trailing bytes", r.offset());
  return c;
}

std::uint64_t load_checkpoint_into(const std::filesystem::path& file, const std::string& preset,
                                   ParamSet& params) {
  auto c = load_checkpoint(file);
  if (c.preset != preset) {
    throw std::invalid_argument(file.string() + ": checkpoint is for preset '" + c.preset + "', expected '" +
                                preset + "'");
  }
  for (const auto& e : c.params.entries()) {
    if (!params.contains(e.name)) {
      throw std::invalid_argument(file.string() + ": unexpected entry '" + e.name + "'");
    }
    if (params.at(e.name).value.shape() != e.value.shape()) {
      throw std::invalid_argument(file.string() + ": entry '" + e.name + "' has shape " + e.value.shape().str() +
                                  ", expected " + params.at(e.name).value.shape().str());
    }
  }
  for (const auto& e : params.entries()) {
    if (!c.params.contains(e.name)) throw std::invalid_argument(file.string() + ": missing entry '" + e.name + "'");
  }
  for (auto& e : params.entries()) e.value = c.params.at(e.name).value;
  return c.iteration;
}

}  // namespace mlctx
