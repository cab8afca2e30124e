#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fsv/cli/manifest.hpp"
#include "fsv/flow/frame.hpp"

namespace fsv::cli {

/// Binary PGM (P5) or PPM (P6) with maxval up to 65535, scaled to [0, 1].
flow::Frame read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const flow::Frame& frame);

/// Native-rate frames from an FSVF file [T x C x H x W] (C = 1 or 3) or a
/// directory of PGM/PPM files taken in lexicographic order.
std::vector<flow::Frame> load_frames(const std::filesystem::path& path);

struct PrepareOptions {
    std::vector<flow::FpsChoice> rates{flow::FpsChoice::at(1.0), flow::FpsChoice::at(2.0)};
    std::uint64_t seed = 0;  // with the ref, picks the single-frame anchor
    std::size_t workers = 0;
    std::ostream* log = nullptr;
};

struct PrepareReport {
    std::vector<std::string> prepared;                         // refs, manifest order
    std::vector<std::pair<std::string, std::string>> skipped;  // ref, reason
};

/// Writes rgb and flow feature files for every rate plus the single-frame
/// pair, then prepared.csv and skipped.csv. A video that fails is skipped
/// and the rest continue.
PrepareReport prepare_dataset(const std::vector<ManifestRecord>& records, const std::filesystem::path& frames_root,
                              const flow::PreprocConfig& config, const std::filesystem::path& out_dir,
                              const PrepareOptions& options = {});

}  // namespace fsv::cli
