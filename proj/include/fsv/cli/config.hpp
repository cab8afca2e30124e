#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fsv/engine/train.hpp"
#include "fsv/flow/frame.hpp"

namespace fsv::cli {

/// Synthetic motion dataset parameters.
struct SyntheticSpec {
    std::size_t samples_per_class = 60;
    std::size_t frame_size = 32;
    double native_fps = 4.0;
    std::size_t min_seconds = 5;  // clip length, uniform in [min, max]
    std::size_t max_seconds = 10;
    std::size_t square_size = 12;
    double noise = 0.03;   // per-frame pixel noise sd
    double jitter = 0.25;  // chance a frame's square is displaced by one pixel
    void validate() const;
};

struct RunConfig {
    engine::TrainConfig train;
    flow::PreprocConfig preproc;
    SyntheticSpec synth;
    std::vector<flow::FpsChoice> prepare_rates{flow::FpsChoice::at(1.0), flow::FpsChoice::at(2.0)};
    std::string manifest = "data/manifest.csv";
    std::string frames_dir;  // empty: the manifest's directory
    std::string features_dir = "features";
    std::string run_dir = "run";
    std::string eval_split = "meta_test_general";
    std::size_t workers = 0;  // 0: FSE_WORKERS or hardware threads

    void validate() const;
};

/// Applies one `key = value` setting. Throws ConfigError for unknown keys or bad values.
void set_config_key(RunConfig& config, std::string_view key, std::string_view value);

/// Every key with its current value, one `key = value` line each, in a fixed order.
std::string dump_config(const RunConfig& config);

/// Reads `key = value` lines; `#` starts a comment. Relative paths resolve
/// against the file's directory. A missing file is a
/// DataError, a malformed line or unknown key a ConfigError naming the line.
RunConfig parse_config(const std::filesystem::path& path, RunConfig base = {});

}  // namespace fsv::cli
