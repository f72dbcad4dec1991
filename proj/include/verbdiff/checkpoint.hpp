#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "verbdiff/model_adapters.hpp"

namespace verbdiff {

struct NamedTensor {
  std::string name;
  Matrix value;
};

/// Single-file container: "VDCK", u32 version, config hash, u64 step, then named
/// float64 tensors (u32 name length, name bytes, u32 rows, u32 cols, column-major data).
struct Checkpoint {
  std::string config_hash;
  std::uint64_t step = 0;
  std::vector<NamedTensor> tensors;

  const Matrix* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Cross-attention tensors only.
Checkpoint capture_trainable(const DenoiserPort& denoiser, const std::string& config_hash,
                             std::uint64_t step);

/// Writes checkpoint tensors into the matching denoiser parameters. Throws
/// DataError for unknown names, frozen targets, or shape mismatches.
void restore_trainable(DenoiserPort& denoiser, const Checkpoint& checkpoint);

}  // namespace verbdiff
