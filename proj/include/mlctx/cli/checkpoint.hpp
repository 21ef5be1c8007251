#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mlctx/data/binio.hpp"
#include "mlctx/nn/params.hpp"

namespace mlctx {

struct Checkpoint {
  std::string preset;
  std::uint64_t iteration = 0;
  ParamSet params;
};

/// Little-endian: "MLCK", u32 version, preset key, u64 iteration, u32 entry count, then per
/// entry: name, 4 x u32 shape, f32 values. Strings are u32 length + bytes. Written to a
/// temporary file and renamed, so an interrupted save leaves the previous file intact.
void save_checkpoint(const std::filesystem::path& file, const std::string& preset, std::uint64_t iteration,
                     const ParamSet& params);

Checkpoint load_checkpoint(const std::filesystem::path& file);

/// Loads into `params`, requiring the preset key and every entry name and shape to match.
/// Errors name the offending entry.
std::uint64_t load_checkpoint_into(const std::filesystem::path& file, const std::string& preset,
                                   ParamSet& params);

}  // namespace mlctx
