#pragma once

#include <filesystem>

#include "covpred/neural/param_store.hpp"

namespace covpred::neural {

/// Binary format, little-endian:
///   "CVPCKPT1" magic, u64 tensor count, then per tensor
///   u32 name length, name bytes, u64 rows, u64 cols, f64 row-major data.
/// Adam moments are not persisted. Writes go through a temp file and a
/// rename so a crash never leaves a partial checkpoint behind.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store);

ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace covpred::neural
