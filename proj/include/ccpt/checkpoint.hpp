#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ccpt/config.hpp"
#include "ccpt/pipeline.hpp"

namespace ccpt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Payload precision. f64 is needed for bit-exact resume; f32 halves the file.
enum class Precision { F32, F64 };

/// Layout: "CCKPT1", u32 format_version, u32 header length, UTF-8 JSON header
/// (scalars, buffer/pool metadata, tensor names/shapes/byte offsets, RNG word
/// offsets), tensor payload (little-endian f32 or f64), RNG block (u64 words).
void save_checkpoint(const TrainState& state, const RunConfig& config, const std::filesystem::path& path,
                     Precision precision = Precision::F64);

struct LoadedCheckpoint {
  std::uint32_t format_version = 0;
  TrainState state;
  std::uint64_t config_hash = 0;
  std::string config_text;
  std::vector<ModalitySpec> stages;
};

/// Throws format errors for bad magic/version and corruption errors for
/// truncated or inconsistent payloads.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Loads a checkpoint to continue `config`. A config-hash mismatch is
/// reported on stderr but is not fatal.
TrainState load_checkpoint_for(const RunConfig& config, const std::filesystem::path& path);

}  // namespace ccpt
