#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "fsv/embed/embed.hpp"
#include "fsv/engine/episode.hpp"
#include "fsv/flow/frame.hpp"
#include "fsv/heads/heads.hpp"

namespace fsv::engine {

enum class Streams { rgb, flow, both };

std::string_view to_string(Streams s);
Streams parse_streams(std::string_view s);

/// "single", "1", "2", ... (also accepts "single_frame" and a trailing "fps").
flow::FpsChoice parse_fps(std::string_view s);
std::string to_string(const flow::FpsChoice& fps);

struct ModelConfig {
    Streams streams = Streams::both;
    flow::FpsChoice rgb_fps = flow::FpsChoice::at(1.0);
    flow::FpsChoice flow_fps = flow::FpsChoice::at(1.0);
    embed::EncoderConfig encoder;
    embed::AggregatorConfig aggregator;
    heads::HeadKind head = heads::HeadKind::prototypical;

    bool uses(embed::Stream s) const;
    /// Throws ConfigError when the head cannot consume the aggregator's output.
    void validate() const;
    /// Encoder and aggregator settings with forms resolved for the head.
    embed::EncoderConfig resolved_encoder() const;
    embed::AggregatorConfig resolved_aggregator() const;
    embed::Form embedding_form() const;

    /// key = value lines, the format the config parser reads.
    std::string dump() const;
};

/// Applies one model key; returns false for keys that are not model keys.
/// Throws ConfigError on a bad value.
bool set_model_key(ModelConfig& config, std::string_view key, std::string_view value);

/// Inverse of ModelConfig::dump().
ModelConfig parse_model_dump(std::string_view text);

/// Per-frame inputs for one video and stream, [T x ...].
class FeatureSource {
   public:
    virtual ~FeatureSource() = default;
    virtual dc::Tensor load(const std::string& ref, embed::Stream stream, const flow::FpsChoice& fps) const = 0;
};

class MemoryFeatureSource : public FeatureSource {
   public:
    void put(const std::string& ref, embed::Stream stream, const flow::FpsChoice& fps, dc::Tensor frames);
    dc::Tensor load(const std::string& ref, embed::Stream stream, const flow::FpsChoice& fps) const override;

   private:
    std::map<std::tuple<std::string, int, bool, double>, dc::Tensor> store_;
};

/// `<root>/<ref>.<stream>.<tag>.fsvf`, tag "single" or "r<rate>".
std::filesystem::path feature_path(const std::filesystem::path& root, const std::string& ref, embed::Stream stream,
                                   const flow::FpsChoice& fps);

/// Reads feature files written by prepare, keeping each one after first use.
class DirectoryFeatureSource : public FeatureSource {
   public:
    explicit DirectoryFeatureSource(std::filesystem::path root) : root_(std::move(root)) {}
    dc::Tensor load(const std::string& ref, embed::Stream stream, const flow::FpsChoice& fps) const override;
    const std::filesystem::path& root() const { return root_; }

   private:
    std::filesystem::path root_;
    mutable std::mutex mutex_;
    mutable std::map<std::filesystem::path, dc::Tensor> cache_;
};

template <class T>
struct BasicModel {
    ModelConfig config;
    dc::BasicParameters<T> params;
};

using Model = BasicModel<float>;
using Model64 = BasicModel<double>;

/// Registers encoder, aggregator and head parameters. Frame shapes are the
/// per-frame input shapes of each stream (ignored for unused streams).
template <class T>
BasicModel<T> init_model(const ModelConfig& config, const dc::Shape& rgb_frame, const dc::Shape& flow_frame,
                         std::uint64_t seed);

/// Reads per-frame shapes from `probe_ref` and initialises the model.
Model init_model(const ModelConfig& config, const FeatureSource& source, const std::string& probe_ref,
                 std::uint64_t seed);

template <class T>
struct VideoInput {
    dc::BasicTensor<T> rgb;   // undefined when the stream is off
    dc::BasicTensor<T> flow;
};

template <class T>
VideoInput<T> load_video(const BasicModel<T>& model, const FeatureSource& source, const std::string& ref);

/// Embeds videos with one encoder call per stream over all their frames.
template <class T>
std::vector<embed::BasicVideoEmbedding<T>> embed_videos(const BasicModel<T>& model,
                                                        const std::vector<VideoInput<T>>& videos);

template <class T>
struct EpisodeResult {
    dc::BasicTensor<T> loss;                 // mean cross-entropy over the query set
    double accuracy = 0.0;
    std::vector<std::vector<double>> logits;  // per query
    std::vector<std::size_t> predictions;
};

/// Logits, loss and accuracy for every query given ready embeddings.
/// Support embeddings are ordered like `episode.support`, queries like `episode.query`.
template <class T>
EpisodeResult<T> score_episode(const BasicModel<T>& model, const Episode& episode,
                               const std::vector<embed::BasicVideoEmbedding<T>>& support,
                               const std::vector<embed::BasicVideoEmbedding<T>>& query);

/// Embeds support and query in one batch, then scores the queries.
template <class T>
EpisodeResult<T> episode_forward(const BasicModel<T>& model, const Episode& episode, const FeatureSource& source);

}  // namespace fsv::engine
