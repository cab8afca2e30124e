#pragma once

#include <filesystem>

#include "fsv/diffcore/tensor.hpp"
#include "fsv/embed/embed.hpp"

namespace fsv::embed {

// FSVF layout: "FSVF", u32 version (1), u8 ndim, u32 dims[ndim], then the
// f32 payload, all little-endian, row-major.
inline constexpr std::uint32_t kFsvfVersion = 1;

/// Writes to a temporary sibling and renames it into place.
void write_fsvf(const std::filesystem::path& path, const dc::Tensor& tensor);

/// Throws DataError on a bad magic, unsupported version, rank outside
/// {2, 4} or a payload that does not match the header.
dc::Tensor read_fsvf(const std::filesystem::path& path);

/// Reads per-frame features; a 2-d file is flat, a 4-d file spatial.
StreamFeatures load_precomputed(const std::filesystem::path& path, Stream stream);

}  // namespace fsv::embed
