// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>

#include "csifb/decoder.hpp"

namespace csifb {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointInfo {
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string scenario;
};

/// `dir/manifest.json` (architecture, CR, N_I, C, seed, epoch, checksum) and `dir/params.bin`:
/// float32 LE in DecoderParams::tensors() order.
void save_checkpoint(const DecoderParams<float>& params, const CheckpointInfo& info,
                     const std::filesystem::path& dir);

struct LoadedCheckpoint {
  DecoderParams<float> params;
  CheckpointInfo info;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// FNV-1a over the float32 parameter blob; any bit change alters it.
std::uint64_t parameter_checksum(const DecoderParams<float>& params);

}  // namespace csifb
