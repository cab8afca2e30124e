#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "fsv/diffcore/params.hpp"

namespace fsv::engine {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct BestRecord {
    double val_accuracy = -1.0;  // below any real accuracy until the first check
    std::uint64_t episode = 0;
    std::uint32_t stale_checks = 0;
    dc::Parameters params;  // empty until the first check
};

/// FSCK layout, little-endian: "FSCK", u32 version, u32 config length +
/// bytes, parameter group, Adam step u64 + moment groups (m then v), u64
/// episode, u32 rng length + bytes, best record (f64 accuracy, u64 episode,
/// u32 stale checks, parameter group). A parameter group is u32 count then
/// blocks of u32 name length, name, u8 ndim, u32 dims, f32 data.
struct Checkpoint {
    std::string model_config;
    dc::Parameters params;
    dc::AdamState adam;
    std::uint64_t episode = 0;
    std::string rng_state;
    BestRecord best;
};

std::string rng_to_string(const std::mt19937_64& rng);
std::mt19937_64 rng_from_string(const std::string& state);

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws DataError on a bad magic, version or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fsv::engine
