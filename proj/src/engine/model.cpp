#include "fsv/engine/model.hpp"

#include <charconv>
#include <cstdio>
#include <optional>
#include <sstream>

#include "fsv/embed/fsvf.hpp"
#include "fsv/error.hpp"

namespace fsv::engine {

using dc::BasicTensor;
using embed::Form;
using embed::Stream;

std::string_view to_string(Streams s) {
    switch (s) {
        case Streams::rgb: return "rgb";
        case Streams::flow: return "flow";
        case Streams::both: return "both";
    }
    return "?";
}

Streams parse_streams(std::string_view s) {
    if (s == "rgb") return Streams::rgb;
    if (s == "flow") return Streams::flow;
    if (s == "both") return Streams::both;
    throw ConfigError("unknown streams '" + std::string(s) + "' (expected rgb, flow or both)");
}

flow::FpsChoice parse_fps(std::string_view s) {
    if (s == "single" || s == "single_frame") return flow::FpsChoice::single();
    std::string_view num = s;
    if (num.size() > 3 && num.substr(num.size() - 3) == "fps") num.remove_suffix(3);
    double rate = 0.0;
    auto [end, ec] = std::from_chars(num.data(), num.data() + num.size(), rate);
    if (ec != std::errc() || end != num.data() + num.size() || !(rate > 0.0))
        throw ConfigError("bad frame rate '" + std::string(s) + "' (expected single or a positive rate)");
    return flow::FpsChoice::at(rate);
}

std::string to_string(const flow::FpsChoice& fps) {
    if (fps.single_frame) return "single";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", fps.rate);
    return buf;
}

bool ModelConfig::uses(Stream s) const {
    return streams == Streams::both || (s == Stream::rgb ? streams == Streams::rgb : streams == Streams::flow);
}

void ModelConfig::validate() const {
    if (head == heads::HeadKind::learned && aggregator.kind == embed::AggregatorKind::lstm)
        throw ConfigError("the learned head needs spatial embeddings; the lstm aggregator produces flat ones");
    if (encoder.flat_dim == 0 || encoder.spatial_channels == 0) throw ConfigError("encoder dims must be positive");
    if (aggregator.lstm_hidden == 0 || aggregator.conv3d_channels == 0)
        throw ConfigError("aggregator dims must be positive");
    for (const auto* f : {&rgb_fps, &flow_fps})
        if (!f->single_frame && !(f->rate > 0.0)) throw ConfigError("frame rates must be positive");
}

embed::EncoderConfig ModelConfig::resolved_encoder() const {
    auto e = encoder;
    e.form = embed::encoder_form_for(aggregator.kind, head == heads::HeadKind::learned ? Form::spatial : Form::flat);
    return e;
}

embed::AggregatorConfig ModelConfig::resolved_aggregator() const {
    auto a = aggregator;
    a.conv3d_target = head == heads::HeadKind::learned ? Form::spatial : Form::flat;
    return a;
}

Form ModelConfig::embedding_form() const { return embed::output_form(resolved_aggregator(), resolved_encoder().form); }

std::string ModelConfig::dump() const {
    std::ostringstream os;
    os << "streams = " << to_string(streams) << "\n"
       << "rgb_fps = " << to_string(rgb_fps) << "\n"
       << "flow_fps = " << to_string(flow_fps) << "\n"
       << "encoder = " << embed::to_string(encoder.mode) << "\n"
       << "flat_dim = " << encoder.flat_dim << "\n"
       << "spatial_channels = " << encoder.spatial_channels << "\n"
       << "aggregator = " << embed::to_string(aggregator.kind) << "\n"
       << "lstm_hidden = " << aggregator.lstm_hidden << "\n"
       << "conv3d_channels = " << aggregator.conv3d_channels << "\n"
       << "head = " << heads::to_string(head) << "\n";
    return os.str();
}

namespace {

std::size_t to_count(std::string_view key, std::string_view value) {
    std::size_t v = 0;
    auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || end != value.data() + value.size() || v == 0)
        throw ConfigError(std::string(key) + ": expected a positive integer, got '" + std::string(value) + "'");
    return v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

bool set_model_key(ModelConfig& c, std::string_view key, std::string_view value) {
    if (key == "streams") c.streams = parse_streams(value);
    else if (key == "rgb_fps") c.rgb_fps = parse_fps(value);
    else if (key == "flow_fps") c.flow_fps = parse_fps(value);
    else if (key == "encoder") c.encoder.mode = embed::parse_encoder_mode(value);
    else if (key == "flat_dim") c.encoder.flat_dim = to_count(key, value);
    else if (key == "spatial_channels") c.encoder.spatial_channels = to_count(key, value);
    else if (key == "aggregator") c.aggregator.kind = embed::parse_aggregator(value);
    else if (key == "lstm_hidden") c.aggregator.lstm_hidden = to_count(key, value);
    else if (key == "conv3d_channels") c.aggregator.conv3d_channels = to_count(key, value);
    else if (key == "head") c.head = heads::parse_head(value);
    else return false;
    return true;
}

ModelConfig parse_model_dump(std::string_view text) {
    ModelConfig c;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const auto line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw DataError("bad model config line '" + std::string(line) + "'");
        const auto key = trim(line.substr(0, eq));
        if (!set_model_key(c, key, trim(line.substr(eq + 1))))
            throw DataError("unknown model config key '" + std::string(key) + "'");
    }
    return c;
}

// ------------------------------------------------------------ feature sources

void MemoryFeatureSource::put(const std::string& ref, Stream stream, const flow::FpsChoice& fps, dc::Tensor frames) {
    store_[{ref, static_cast<int>(stream), fps.single_frame, fps.single_frame ? 0.0 : fps.rate}] = std::move(frames);
}

dc::Tensor MemoryFeatureSource::load(const std::string& ref, Stream stream, const flow::FpsChoice& fps) const {
    auto it = store_.find({ref, static_cast<int>(stream), fps.single_frame, fps.single_frame ? 0.0 : fps.rate});
    if (it == store_.end())
        throw DataError("no " + std::string(embed::to_string(stream)) + " features at " + to_string(fps) + " for " +
                        ref);
    return it->second;
}

std::filesystem::path feature_path(const std::filesystem::path& root, const std::string& ref, Stream stream,
                                   const flow::FpsChoice& fps) {
    const std::string tag = fps.single_frame ? "single" : "r" + to_string(fps);
    return root / (ref + "." + std::string(embed::to_string(stream)) + "." + tag + ".fsvf");
}

dc::Tensor DirectoryFeatureSource::load(const std::string& ref, Stream stream, const flow::FpsChoice& fps) const {
    const auto path = feature_path(root_, ref, stream, fps);
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(path); it != cache_.end()) return it->second;
    }
    auto t = embed::read_fsvf(path);
    std::lock_guard lock(mutex_);
    return cache_.emplace(path, std::move(t)).first->second;
}

// ---------------------------------------------------------------- model

template <class T>
BasicModel<T> init_model(const ModelConfig& config, const dc::Shape& rgb_frame, const dc::Shape& flow_frame,
                         std::uint64_t seed) {
    config.validate();
    BasicModel<T> m{config, {}};
    std::mt19937_64 rng(seed);
    const auto enc = config.resolved_encoder();
    const auto agg = config.resolved_aggregator();
    std::size_t channels = 0;
    for (Stream s : {Stream::rgb, Stream::flow}) {
        if (!config.uses(s)) continue;
        const auto prefix = embed::stream_prefix(s);
        auto per_frame = embed::init_encoder(m.params, prefix + "/enc", enc, s == Stream::rgb ? rgb_frame : flow_frame, rng);
        auto out = embed::init_aggregator(m.params, prefix + "/agg", agg, per_frame, rng);
        channels += out[0];
    }
    if (config.head == heads::HeadKind::learned) heads::init_learned_metric(m.params, channels, rng);
    return m;
}

Model init_model(const ModelConfig& config, const FeatureSource& source, const std::string& probe_ref,
                 std::uint64_t seed) {
    auto frame_shape = [&](Stream s) -> dc::Shape {
        if (!config.uses(s)) return {};
        auto t = source.load(probe_ref, s, s == Stream::rgb ? config.rgb_fps : config.flow_fps);
        return dc::Shape(t.shape().begin() + 1, t.shape().end());
    };
    return init_model<float>(config, frame_shape(Stream::rgb), frame_shape(Stream::flow), seed);
}

namespace {

template <class T>
BasicTensor<T> as(const dc::Tensor& t) {
    if constexpr (std::is_same_v<T, float>) return t;
    else return dc::cast<T>(t);
}

}  // namespace

template <class T>
VideoInput<T> load_video(const BasicModel<T>& model, const FeatureSource& source, const std::string& ref) {
    VideoInput<T> v;
    if (model.config.uses(Stream::rgb)) v.rgb = as<T>(source.load(ref, Stream::rgb, model.config.rgb_fps));
    if (model.config.uses(Stream::flow)) v.flow = as<T>(source.load(ref, Stream::flow, model.config.flow_fps));
    return v;
}

template <class T>
std::vector<embed::BasicVideoEmbedding<T>> embed_videos(const BasicModel<T>& model,
                                                        const std::vector<VideoInput<T>>& videos) {
    const auto enc = model.config.resolved_encoder();
    const auto agg = model.config.resolved_aggregator();
    const Form form = embed::output_form(agg, enc.form);
    std::vector<std::optional<embed::BasicVideoEmbedding<T>>> out(videos.size());
    for (Stream s : {Stream::rgb, Stream::flow}) {
        if (!model.config.uses(s)) continue;
        const auto prefix = embed::stream_prefix(s);
        std::vector<BasicTensor<T>> parts;
        parts.reserve(videos.size());
        for (const auto& v : videos) {
            const auto& t = s == Stream::rgb ? v.rgb : v.flow;
            if (!t.defined()) throw DataError("video is missing its " + prefix + " stream");
            parts.push_back(t);
        }
        const auto encoded = embed::encode_frames(parts.size() == 1 ? parts[0] : dc::concat(parts, 0), model.params,
                                                  prefix + "/enc", enc);
        std::size_t offset = 0;
        for (std::size_t i = 0; i < videos.size(); ++i) {
            const std::size_t frames = parts[i].dim(0);
            embed::BasicStreamFeatures<T> feats{enc.form, s, videos.size() == 1 ? encoded
                                                                                 : dc::slice(encoded, 0, offset, offset + frames)};
            offset += frames;
            embed::BasicVideoEmbedding<T> e{form, embed::aggregate_stream(feats, model.params, prefix + "/agg", agg)};
            out[i] = out[i] ? embed::concat_streams(*out[i], e) : e;
        }
    }
    std::vector<embed::BasicVideoEmbedding<T>> result;
    result.reserve(out.size());
    for (auto& e : out) result.push_back(std::move(*e));
    return result;
}

template <class T>
EpisodeResult<T> score_episode(const BasicModel<T>& model, const Episode& episode,
                               const std::vector<embed::BasicVideoEmbedding<T>>& support,
                               const std::vector<embed::BasicVideoEmbedding<T>>& query) {
    const std::size_t n = episode.classes.size();
    if (support.size() != episode.support.size() || query.size() != episode.query.size() || query.empty())
        throw ShapeError("episode embeddings do not match the episode");
    heads::BasicSupportSet<T> set{n, episode.support.size() / n, support, {}};
    for (const auto& s : episode.support) set.labels.push_back(s.label);
    std::vector<embed::BasicVideoEmbedding<T>> protos;
    if (model.config.head != heads::HeadKind::matching) protos = heads::compute_prototypes(set);

    EpisodeResult<T> r;
    std::vector<BasicTensor<T>> losses;
    losses.reserve(query.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < query.size(); ++i) {
        auto z = heads::head_logits(model.config.head, query[i], set, protos, model.params);
        losses.push_back(dc::softmax_cross_entropy(z, episode.query[i].label));
        auto c = heads::classify<T>(z.data());
        correct += c.label == episode.query[i].label;
        r.predictions.push_back(c.label);
        r.logits.emplace_back(z.data().begin(), z.data().end());
    }
    r.loss = dc::mean(dc::concat(losses, 0), 0);
    r.accuracy = static_cast<double>(correct) / static_cast<double>(query.size());
    return r;
}

template <class T>
EpisodeResult<T> episode_forward(const BasicModel<T>& model, const Episode& episode, const FeatureSource& source) {
    std::vector<VideoInput<T>> videos;
    videos.reserve(episode.support.size() + episode.query.size());
    for (const auto& s : episode.support) videos.push_back(load_video(model, source, s.ref));
    for (const auto& q : episode.query) videos.push_back(load_video(model, source, q.ref));
    auto all = embed_videos(model, videos);
    const auto split = all.begin() + static_cast<std::ptrdiff_t>(episode.support.size());
    return score_episode(model, episode, std::vector(all.begin(), split), std::vector(split, all.end()));
}

#define FSV_INSTANTIATE_MODEL(T)                                                                                    \
    template BasicModel<T> init_model(const ModelConfig&, const dc::Shape&, const dc::Shape&, std::uint64_t);       \
    template VideoInput<T> load_video(const BasicModel<T>&, const FeatureSource&, const std::string&);              \
    template std::vector<embed::BasicVideoEmbedding<T>> embed_videos(const BasicModel<T>&,                          \
                                                                     const std::vector<VideoInput<T>>&);            \
    template EpisodeResult<T> score_episode(const BasicModel<T>&, const Episode&,                                   \
                                            const std::vector<embed::BasicVideoEmbedding<T>>&,                      \
                                            const std::vector<embed::BasicVideoEmbedding<T>>&);                     \
    template EpisodeResult<T> episode_forward(const BasicModel<T>&, const Episode&, const FeatureSource&);

FSV_INSTANTIATE_MODEL(float)
FSV_INSTANTIATE_MODEL(double)

}  // namespace fsv::engine
