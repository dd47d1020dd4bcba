// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>

#include "rblock/network.hpp"

namespace rblock {

// Layout: "RBLK", u32 format version, then for each parameter buffer in
// declaration order a u64 element count followed by that many f64 values.
// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Parameters& params);
// Reads into `params`, whose layout must match the file exactly.
void load_checkpoint(const std::filesystem::path& path, Parameters& params);

}  // namespace rblock
