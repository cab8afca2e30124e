#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fsv/engine/episode.hpp"
#include "fsv/engine/model.hpp"

namespace fsv::engine {

/// FSE_WORKERS when set to a positive integer, otherwise the hardware
/// thread count (at least 1).
std::size_t default_workers();

/// Runs fn(0..count-1) on up to `workers` threads (0 = default_workers()).
/// The first exception thrown by any call is rethrown after all threads join.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct EvalReport {
    std::size_t episodes = 0;
    std::vector<double> accuracies;
    double mean = 0.0;
    double halfwidth = 0.0;  // 1.96 * sample std / sqrt(N)

    static EvalReport from_accuracies(std::vector<double> accuracies);

    /// Percent mean with one decimal and halfwidth with two, e.g. "84.2 ± 0.44".
    std::string format() const;
    /// "episode,accuracy" rows followed by summary rows.
    std::string csv() const;
};

/// Accuracy of one episode; `index` is its position in the sampled sequence.
using EpisodeScorer = std::function<double(const Episode& episode, std::size_t index)>;

/// Samples `count` episodes from one generator seeded with `seed`, scores
/// them in parallel and merges results in episode order.
EvalReport evaluate_with(const ClassMap& split, const EpisodeSpec& spec, std::size_t count, std::uint64_t seed,
                         const EpisodeScorer& scorer, std::size_t workers = 0);

/// Model evaluation. Each distinct video is embedded once, on its own, so
/// results do not depend on the worker count.
EvalReport evaluate(const Model& model, const ClassMap& split, const FeatureSource& source, const EpisodeSpec& spec,
                    std::size_t count, std::uint64_t seed, std::size_t workers = 0);

}  // namespace fsv::engine
