#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace fsv::engine {

/// Class name -> sample references (relative paths without extension).
using ClassMap = std::map<std::string, std::vector<std::string>>;

inline constexpr std::string_view kSplitNames[] = {"meta_train", "meta_val", "meta_test_general",
                                                   "meta_test_challenge"};

bool is_split_name(std::string_view name);

struct DatasetSplit {
    std::map<std::string, ClassMap> splits;

    /// Empty map for a known split with no classes; ConfigError for an unknown name.
    const ClassMap& at(std::string_view name) const;
    ClassMap& operator[](std::string_view name);

    /// Throws DataError if a class appears in two splits or has no samples.
    void validate() const;
};

struct EpisodeSpec {
    std::size_t n = 5;
    std::size_t k = 5;
    std::size_t q = 5;

    void validate() const;
};

struct LabelledSample {
    std::string ref;
    std::size_t label = 0;
};

struct Episode {
    std::vector<std::string> classes;  // label i names classes[i]
    std::vector<LabelledSample> support;
    std::vector<LabelledSample> query;
};

/// Draws n classes uniformly without replacement among those holding at
/// least k + q samples, then k + q samples per class without replacement;
/// the first k go to the support set. Throws InsufficientClassesError when
/// the split has fewer than n classes and InsufficientSamplesError when
/// fewer than n classes survive the sample-count filter.
Episode sample_episode(const ClassMap& split, const EpisodeSpec& spec, std::mt19937_64& rng);

/// `count` episodes drawn in order from one generator seeded with `seed`.
std::vector<Episode> sample_episodes(const ClassMap& split, const EpisodeSpec& spec, std::size_t count,
                                     std::uint64_t seed);

}  // namespace fsv::engine
