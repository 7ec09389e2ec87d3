#pragma once

// Checkpoint file layout (all integers little-endian):
//
//   "TGVM" | u32 version
//   repeated until EOF:
//     u32 name length | UTF-8 name | u32 rank | rank x u64 dims | row-major f64 payload

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tgvlm/tensor.hpp"

namespace tgvlm {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params);

// Overwrites the values of `params` in place. Every parameter must be present
// with exactly the expected shape; the first mismatch is reported by name.
void load_checkpoint(const std::filesystem::path& path, ParameterList& params);

}  // namespace tgvlm
