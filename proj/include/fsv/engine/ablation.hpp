#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fsv/engine/train.hpp"

namespace fsv::engine {

struct AblationCell {
    std::string label;
    Streams streams = Streams::both;
    flow::FpsChoice rgb_fps = flow::FpsChoice::at(1.0);
    flow::FpsChoice flow_fps = flow::FpsChoice::at(1.0);
};

/// The seven stream and frame-rate settings: both, rgb and flow at 1 fps,
/// both on a single frame, then the three 1/2 fps mixes.
std::vector<AblationCell> stream_grid();

struct AblationRow {
    AblationCell cell;
    std::map<std::string, EvalReport> reports;  // by split name
    std::size_t embedding_dim = 0;
    std::size_t episodes_trained = 0;
    std::string error;  // non-empty when the cell failed
};

struct AblationOptions {
    std::vector<std::string> eval_splits{"meta_test_general", "meta_test_challenge"};
    TrainOptions train;
    std::ostream* progress = nullptr;
};

/// Trains and evaluates one model per cell from `base`. A failing cell is
/// recorded in its row and the grid continues. Splits that cannot supply
/// an episode are left out of that row's reports.
std::vector<AblationRow> ablation_run(const TrainConfig& base, const std::vector<AblationCell>& grid,
                                      const DatasetSplit& data, const FeatureSource& source,
                                      const AblationOptions& options = {});

std::string ablation_table(const std::vector<AblationRow>& rows, const std::vector<std::string>& splits);
std::string ablation_csv(const std::vector<AblationRow>& rows, const std::vector<std::string>& splits);

}  // namespace fsv::engine
