#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "mire/trainer.hpp"

namespace mire {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout: magic "MIRECKPT", u32 version, then extractor config,
/// parameters (explicit shapes), memory, prototypes, iteration, rng state and
/// an FNV-1a checksum of everything before it. Integers are u64/i64 and reals
/// f64, all little-endian.
std::string encode_state(const TrainerState& state);
TrainerState decode_state(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const TrainerState& state);
TrainerState load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a(std::string_view bytes);

}  // namespace mire
