#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fsv/cli/config.hpp"
#include "fsv/cli/manifest.hpp"
#include "fsv/flow/frame.hpp"

namespace fsv::cli {

/// One synthetic class: a textured square moving by (dx, dy) pixels per
/// native frame, or resting when both are zero.
struct MotionClass {
    std::string name;
    int dx = 0;
    int dy = 0;
    int texture = 0;  // 0..3; classes sharing a texture share a split
    std::string split;
};

/// Twenty classes: 16 moving (8 directions x speeds 1, 2) and 4 static.
/// Inside each split every class has the same texture, so only motion
/// separates them.
std::vector<MotionClass> synthetic_classes();

/// Native-rate frames for one clip, RGB in [0, 1].
std::vector<flow::Frame> synth_video(const SyntheticSpec& spec, const MotionClass& cls, std::uint64_t dataset_seed,
                                     std::uint64_t video_seed);

/// Writes `videos/<class>/<class>_<i>.fsvf` raw-frame files and
/// `manifest.csv` under out_dir. Output depends only on spec and seed.
std::vector<ManifestRecord> synth_generate(const SyntheticSpec& spec, std::uint64_t seed,
                                           const std::filesystem::path& out_dir, std::size_t workers = 0);

}  // namespace fsv::cli
