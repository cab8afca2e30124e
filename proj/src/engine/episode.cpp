#include "fsv/engine/episode.hpp"

#include <algorithm>
#include <set>

#include "fsv/error.hpp"

namespace fsv::engine {

bool is_split_name(std::string_view name) {
    return std::find(std::begin(kSplitNames), std::end(kSplitNames), name) != std::end(kSplitNames);
}

const ClassMap& DatasetSplit::at(std::string_view name) const {
    static const ClassMap empty;
    if (!is_split_name(name)) throw ConfigError("unknown split '" + std::string(name) + "'");
    auto it = splits.find(std::string(name));
    return it == splits.end() ? empty : it->second;
}

ClassMap& DatasetSplit::operator[](std::string_view name) {
    if (!is_split_name(name)) throw ConfigError("unknown split '" + std::string(name) + "'");
    return splits[std::string(name)];
}

void DatasetSplit::validate() const {
    std::map<std::string, std::string> owner;
    for (const auto& [split, classes] : splits) {
        if (!is_split_name(split)) throw DataError("unknown split '" + split + "'");
        for (const auto& [cls, samples] : classes) {
            if (samples.empty()) throw DataError("class '" + cls + "' in " + split + " has no samples");
            auto [it, fresh] = owner.emplace(cls, split);
            if (!fresh)
                throw DataError("class '" + cls + "' appears in both " + it->second + " and " + split);
        }
    }
}

void EpisodeSpec::validate() const {
    if (n < 2) throw ConfigError("episode way must be at least 2");
    if (k < 1) throw ConfigError("episode shot must be at least 1");
    if (q < 1) throw ConfigError("episode queries must be at least 1");
}

namespace {

// First `count` entries of a partial Fisher-Yates shuffle.
template <class V>
V draw_without_replacement(V pool, std::size_t count, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(count);
    return pool;
}

}  // namespace

Episode sample_episode(const ClassMap& split, const EpisodeSpec& spec, std::mt19937_64& rng) {
    spec.validate();
    if (split.size() < spec.n)
        throw InsufficientClassesError("split has " + std::to_string(split.size()) + " classes, episode needs " +
                                       std::to_string(spec.n));
    std::vector<const ClassMap::value_type*> eligible;
    for (const auto& entry : split)
        if (entry.second.size() >= spec.k + spec.q) eligible.push_back(&entry);
    if (eligible.size() < spec.n)
        throw InsufficientSamplesError("only " + std::to_string(eligible.size()) + " classes hold " +
                                       std::to_string(spec.k + spec.q) + " samples; episode needs " +
                                       std::to_string(spec.n));

    Episode ep;
    const auto chosen = draw_without_replacement(eligible, spec.n, rng);
    for (std::size_t label = 0; label < chosen.size(); ++label) {
        const auto& [name, samples] = *chosen[label];
        ep.classes.push_back(name);
        const auto picked = draw_without_replacement(samples, spec.k + spec.q, rng);
        for (std::size_t i = 0; i < picked.size(); ++i)
            (i < spec.k ? ep.support : ep.query).push_back({picked[i], label});
    }
    return ep;
}

std::vector<Episode> sample_episodes(const ClassMap& split, const EpisodeSpec& spec, std::size_t count,
                                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Episode> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(sample_episode(split, spec, rng));
    return out;
}

}  // namespace fsv::engine
