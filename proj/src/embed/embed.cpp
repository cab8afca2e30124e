#include "fsv/embed/embed.hpp"

#include <cmath>
#include <optional>

namespace fsv::embed {

using dc::BasicParameters;
using dc::BasicTensor;
using dc::Shape;

std::string_view to_string(Form f) { return f == Form::flat ? "flat" : "spatial"; }
std::string_view to_string(Stream s) { return s == Stream::rgb ? "rgb" : "flow"; }
std::string_view to_string(EncoderMode m) { return m == EncoderMode::toy ? "toy" : "precomputed"; }

std::string_view to_string(AggregatorKind k) {
    switch (k) {
        case AggregatorKind::mean: return "mean";
        case AggregatorKind::lstm: return "lstm";
        case AggregatorKind::convlstm: return "convlstm";
        case AggregatorKind::conv3d: return "conv3d";
    }
    return "?";
}

AggregatorKind parse_aggregator(std::string_view s) {
    if (s == "mean") return AggregatorKind::mean;
    if (s == "lstm") return AggregatorKind::lstm;
    if (s == "convlstm") return AggregatorKind::convlstm;
    if (s == "conv3d") return AggregatorKind::conv3d;
    throw ConfigError("unknown aggregator '" + std::string(s) + "' (expected mean, lstm, convlstm or conv3d)");
}

EncoderMode parse_encoder_mode(std::string_view s) {
    if (s == "toy") return EncoderMode::toy;
    if (s == "precomputed") return EncoderMode::precomputed;
    throw ConfigError("unknown encoder mode '" + std::string(s) + "' (expected toy or precomputed)");
}

std::string stream_prefix(Stream s) { return std::string(to_string(s)); }

Form encoder_form_for(AggregatorKind kind, Form mean_form) {
    switch (kind) {
        case AggregatorKind::lstm: return Form::flat;
        case AggregatorKind::convlstm:
        case AggregatorKind::conv3d: return Form::spatial;
        case AggregatorKind::mean: break;
    }
    return mean_form;
}

Form output_form(const AggregatorConfig& config, Form encoder_form) {
    return config.kind == AggregatorKind::conv3d ? config.conv3d_target : encoder_form;
}

template <class T>
void BasicStreamFeatures<T>::validate() const {
    if (!data.defined()) throw ShapeError("stream features are empty");
    const std::size_t want = form == Form::flat ? 2 : 4;
    if (data.ndim() != want)
        throw ShapeError(std::string(to_string(stream)) + " features: " + std::string(to_string(form)) +
                         " form needs rank " + std::to_string(want) + ", got " + dc::to_string(data.shape()));
    if (data.dim(0) == 0) throw ShapeError("stream features have no frames");
}

namespace {

template <class T>
void add_uniform(BasicParameters<T>& params, const std::string& name, Shape shape, double bound, std::mt19937_64& rng) {
    params.add(name, dc::uniform_tensor<T>(std::move(shape), bound, rng));
}

template <class T>
void add_zeros(BasicParameters<T>& params, const std::string& name, Shape shape) {
    params.add(name, BasicTensor<T>(std::move(shape)));
}

double he_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }
double recurrent_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

// Adds a leading batch axis if missing; returns whether it did.
template <class T>
bool ensure_batched(BasicTensor<T>& x, std::size_t rank) {
    if (x.ndim() == rank - 1) {
        Shape s = x.shape();
        s.insert(s.begin(), 1);
        x = dc::reshape(x, s);
        return true;
    }
    if (x.ndim() != rank) throw ShapeError("expected rank " + std::to_string(rank - 1) + " or " + std::to_string(rank) +
                                           " input, got " + dc::to_string(x.shape()));
    return false;
}

template <class T>
BasicTensor<T> unbatch(const BasicTensor<T>& x) {
    Shape s(x.shape().begin() + 1, x.shape().end());
    return dc::reshape(x, s);
}

// [N x in] * W[in x out] + b[out]
template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
    return dc::add(dc::matmul(x, w), b);
}

}  // namespace

// ---------------------------------------------------------------- layers

template <class T>
BasicTensor<T> spatial_adapter(const BasicTensor<T>& maps, const BasicParameters<T>& params, const std::string& prefix) {
    BasicTensor<T> x = maps;
    const bool added = ensure_batched(x, 4);
    if (x.dim(2) != 14 || x.dim(3) != 14)
        throw ShapeError("spatial_adapter: expected 14x14 maps, got " + dc::to_string(maps.shape()));
    auto y = dc::conv2d(x, params.at(prefix + "/adapter.w"), params.at(prefix + "/adapter.b"), {2, 2}, {1, 1});
    y = dc::avg_pool2d(y, {2, 2}, {1, 1});
    return added ? unbatch(y) : y;
}

template <class T>
BasicTensor<T> flatten_project(const BasicTensor<T>& maps, const BasicParameters<T>& params, const std::string& prefix) {
    BasicTensor<T> x = maps;
    const bool added = ensure_batched(x, 4);
    if (x.dim(2) != 6 || x.dim(3) != 6)
        throw ShapeError("flatten_project: expected 6x6 maps, got " + dc::to_string(maps.shape()));
    const auto& w = params.at(prefix + "/project.w");
    const std::size_t flat = x.dim(1) * 36;
    if (w.dim(0) != flat)
        throw ShapeError("flatten_project: " + std::to_string(flat) + " inputs, projection expects " +
                         std::to_string(w.dim(0)));
    auto y = linear(dc::reshape(x, {x.dim(0), flat}), w, params.at(prefix + "/project.b"));
    return added ? unbatch(y) : y;
}

template <class T>
BasicTensor<T> toy_encoder(const BasicTensor<T>& frames, const BasicParameters<T>& params, const std::string& prefix,
                           const EncoderConfig& config) {
    BasicTensor<T> x = frames;
    const bool added = ensure_batched(x, 4);
    if (x.dim(1) != 3 || x.dim(2) != 32 || x.dim(3) != 32)
        throw ShapeError("toy_encoder: expected 3x32x32 frames, got " + dc::to_string(frames.shape()));
    auto block = [&](const BasicTensor<T>& in, const char* name, std::size_t stride) {
        return dc::relu(dc::conv2d(in, params.at(prefix + "/" + name + ".w"), params.at(prefix + "/" + name + ".b"),
                                   {stride, stride}, {1, 1}));
    };
    auto h = block(x, "conv1", 2);
    h = block(h, "conv2", 2);
    h = block(h, "conv3", 1);
    BasicTensor<T> y;
    if (config.form == Form::spatial) {
        y = dc::adaptive_avg_pool2d(h, {6, 6});
    } else {
        const std::size_t n = h.dim(0), c = h.dim(1);
        auto pooled = dc::mean(dc::reshape(h, {n, c, h.dim(2) * h.dim(3)}), 2);
        y = linear(pooled, params.at(prefix + "/proj.w"), params.at(prefix + "/proj.b"));
    }
    return added ? unbatch(y) : y;
}

template <class T>
BasicTensor<T> encode_frames(const BasicTensor<T>& frames, const BasicParameters<T>& params, const std::string& prefix,
                             const EncoderConfig& config) {
    if (config.mode == EncoderMode::toy) return toy_encoder(frames, params, prefix, config);
    if (frames.ndim() == 2) {
        if (config.form != Form::flat) throw ConfigError("flat precomputed features cannot feed a spatial pipeline");
        if (frames.dim(1) != config.flat_dim)
            throw ShapeError("precomputed features have dim " + std::to_string(frames.dim(1)) + ", config expects " +
                             std::to_string(config.flat_dim));
        return frames;
    }
    if (frames.ndim() != 4) throw ShapeError("precomputed features must be [T x D] or [T x C x H x W]");
    BasicTensor<T> maps = frames;
    if (frames.dim(2) == 14 && frames.dim(3) == 14) maps = spatial_adapter(frames, params, prefix);
    else if (frames.dim(2) != 6 || frames.dim(3) != 6)
        throw ShapeError("precomputed maps must be 14x14 or 6x6, got " + dc::to_string(frames.shape()));
    return config.form == Form::flat ? flatten_project(maps, params, prefix) : maps;
}

template <class T>
Shape init_encoder(BasicParameters<T>& params, const std::string& prefix, const EncoderConfig& config,
                   const Shape& frame_shape, std::mt19937_64& rng) {
    if (config.flat_dim == 0 || config.spatial_channels == 0) throw ConfigError("encoder dims must be positive");
    const std::size_t C = config.spatial_channels;
    if (config.mode == EncoderMode::toy) {
        if (frame_shape != Shape{3, 32, 32})
            throw ShapeError("toy encoder needs 3x32x32 frames, got " + dc::to_string(frame_shape));
        const std::size_t chans[4] = {3, 32, 64, C};
        for (int i = 0; i < 3; ++i) {
            const std::string name = prefix + "/conv" + std::to_string(i + 1);
            add_uniform(params, name + ".w", {chans[i + 1], chans[i], 3, 3}, he_bound(chans[i] * 9), rng);
            add_zeros(params, name + ".b", {chans[i + 1]});
        }
        if (config.form == Form::spatial) return {C, 6, 6};
        add_uniform(params, prefix + "/proj.w", {C, config.flat_dim}, recurrent_bound(C), rng);
        add_zeros(params, prefix + "/proj.b", {config.flat_dim});
        return {config.flat_dim};
    }
    if (frame_shape.size() == 1) {
        if (config.form != Form::flat) throw ConfigError("flat precomputed features cannot feed a spatial pipeline");
        if (frame_shape[0] != config.flat_dim)
            throw ShapeError("precomputed features have dim " + std::to_string(frame_shape[0]) + ", config expects " +
                             std::to_string(config.flat_dim));
        return frame_shape;
    }
    if (frame_shape.size() != 3) throw ShapeError("precomputed frame shape must be [D] or [C x H x W]");
    Shape maps = frame_shape;
    if (frame_shape[1] == 14 && frame_shape[2] == 14) {
        add_uniform(params, prefix + "/adapter.w", {C, frame_shape[0], 3, 3}, recurrent_bound(frame_shape[0] * 9), rng);
        add_zeros(params, prefix + "/adapter.b", {C});
        maps = {C, 6, 6};
    } else if (frame_shape[1] != 6 || frame_shape[2] != 6) {
        throw ShapeError("precomputed maps must be 14x14 or 6x6, got " + dc::to_string(frame_shape));
    }
    if (config.form == Form::spatial) return maps;
    const std::size_t flat = maps[0] * 36;
    add_uniform(params, prefix + "/project.w", {flat, config.flat_dim}, recurrent_bound(flat), rng);
    add_zeros(params, prefix + "/project.b", {config.flat_dim});
    return {config.flat_dim};
}

// ----------------------------------------------------------- aggregators

template <class T>
BasicTensor<T> mean_pool(const BasicTensor<T>& seq) {
    return dc::mean(seq, 0);
}

template <class T>
BasicTensor<T> lstm_pool(const BasicTensor<T>& seq, const BasicParameters<T>& params, const std::string& prefix) {
    if (seq.ndim() != 2) throw ShapeError("lstm: expected [T x D] input, got " + dc::to_string(seq.shape()));
    const auto& wx = params.at(prefix + "/lstm.wx");
    const auto& wh = params.at(prefix + "/lstm.wh");
    const std::size_t H = wh.dim(0);
    // Input contributions for every step at once: [T x 4H].
    const auto gx = linear(seq, wx, params.at(prefix + "/lstm.b"));
    BasicTensor<T> h, c;
    std::vector<BasicTensor<T>> hs;
    for (std::size_t t = 0; t < seq.dim(0); ++t) {
        auto g = dc::slice(gx, 0, t, t + 1);
        if (h.defined()) g = dc::add(g, dc::matmul(h, wh));
        auto i = dc::sigmoid(dc::slice(g, 1, 0, H));
        auto f = dc::sigmoid(dc::slice(g, 1, H, 2 * H));
        auto u = dc::tanh(dc::slice(g, 1, 2 * H, 3 * H));
        auto o = dc::sigmoid(dc::slice(g, 1, 3 * H, 4 * H));
        c = c.defined() ? dc::add(dc::mul(f, c), dc::mul(i, u)) : dc::mul(i, u);
        h = dc::mul(o, dc::tanh(c));
        hs.push_back(h);
    }
    return dc::reshape(dc::mean(dc::concat(hs, 0), 0), {H});
}

template <class T>
BasicTensor<T> convlstm_pool(const BasicTensor<T>& seq, const BasicParameters<T>& params, const std::string& prefix) {
    if (seq.ndim() != 4) throw ShapeError("convlstm: expected [T x C x H x W] input, got " + dc::to_string(seq.shape()));
    const auto& wx = params.at(prefix + "/convlstm.wx");
    const auto& wh = params.at(prefix + "/convlstm.wh");
    const std::size_t C = wh.dim(1);
    const std::size_t H = seq.dim(2), W = seq.dim(3);
    const auto gx = dc::conv2d(seq, wx, params.at(prefix + "/convlstm.b"), {1, 1}, {1, 1});
    BasicTensor<T> h, c;
    std::vector<BasicTensor<T>> hs;
    for (std::size_t t = 0; t < seq.dim(0); ++t) {
        auto g = dc::reshape(dc::slice(gx, 0, t, t + 1), {4 * C, H, W});
        if (h.defined()) g = dc::add(g, dc::conv2d(h, wh, BasicTensor<T>(), {1, 1}, {1, 1}));
        auto i = dc::sigmoid(dc::slice(g, 0, 0, C));
        auto f = dc::sigmoid(dc::slice(g, 0, C, 2 * C));
        auto u = dc::tanh(dc::slice(g, 0, 2 * C, 3 * C));
        auto o = dc::sigmoid(dc::slice(g, 0, 3 * C, 4 * C));
        c = c.defined() ? dc::add(dc::mul(f, c), dc::mul(i, u)) : dc::mul(i, u);
        h = dc::mul(o, dc::tanh(c));
        hs.push_back(h);
    }
    return dc::mean(dc::stack(hs), 0);
}

template <class T>
BasicTensor<T> conv3d_pool(const BasicTensor<T>& seq, const BasicParameters<T>& params, const std::string& prefix,
                           Form target) {
    if (seq.ndim() != 4) throw ShapeError("conv3d: expected [T x C x H x W] input, got " + dc::to_string(seq.shape()));
    auto x = dc::transpose01(seq);  // [C x T x H x W]
    x = dc::relu(dc::conv3d(x, params.at(prefix + "/conv3d1.w"), params.at(prefix + "/conv3d1.b")));
    x = dc::conv3d(x, params.at(prefix + "/conv3d2.w"), params.at(prefix + "/conv3d2.b"));
    auto m = dc::mean(dc::transpose01(x), 0);  // [C3 x H x W]
    if (target == Form::spatial) return dc::adaptive_avg_pool2d(m, {6, 6});
    return dc::reshape(dc::adaptive_avg_pool2d(m, {1, 1}), {m.dim(0)});
}

template <class T>
Shape init_aggregator(BasicParameters<T>& params, const std::string& prefix, const AggregatorConfig& config,
                      const Shape& frame_shape, std::mt19937_64& rng) {
    switch (config.kind) {
        case AggregatorKind::mean: return frame_shape;
        case AggregatorKind::lstm: {
            if (frame_shape.size() != 1) throw ConfigError("lstm aggregation needs flat features");
            const std::size_t D = frame_shape[0], H = config.lstm_hidden;
            if (H == 0) throw ConfigError("lstm_hidden must be positive");
            add_uniform(params, prefix + "/lstm.wx", {D, 4 * H}, recurrent_bound(D), rng);
            add_uniform(params, prefix + "/lstm.wh", {H, 4 * H}, recurrent_bound(H), rng);
            BasicTensor<T> b({4 * H});
            for (std::size_t i = H; i < 2 * H; ++i) b.mutable_data()[i] = T(1);
            params.add(prefix + "/lstm.b", b);
            return {H};
        }
        case AggregatorKind::convlstm: {
            if (frame_shape.size() != 3) throw ConfigError("convlstm aggregation needs spatial features");
            const std::size_t C = frame_shape[0];
            add_uniform(params, prefix + "/convlstm.wx", {4 * C, C, 3, 3}, recurrent_bound(C * 9), rng);
            add_uniform(params, prefix + "/convlstm.wh", {4 * C, C, 3, 3}, recurrent_bound(C * 9), rng);
            BasicTensor<T> b({4 * C});
            for (std::size_t i = C; i < 2 * C; ++i) b.mutable_data()[i] = T(1);
            params.add(prefix + "/convlstm.b", b);
            return frame_shape;
        }
        case AggregatorKind::conv3d: {
            if (frame_shape.size() != 3) throw ConfigError("conv3d aggregation needs spatial features");
            const std::size_t C = frame_shape[0], C3 = config.conv3d_channels;
            if (C3 == 0) throw ConfigError("conv3d_channels must be positive");
            add_uniform(params, prefix + "/conv3d1.w", {C3, C, 3, 3, 3}, he_bound(C * 27), rng);
            add_zeros(params, prefix + "/conv3d1.b", {C3});
            add_uniform(params, prefix + "/conv3d2.w", {C3, C3, 3, 3, 3}, recurrent_bound(C3 * 27), rng);
            add_zeros(params, prefix + "/conv3d2.b", {C3});
            if (config.conv3d_target == Form::spatial) return {C3, 6, 6};
            return {C3};
        }
    }
    return frame_shape;
}

template <class T>
BasicTensor<T> aggregate_stream(const BasicStreamFeatures<T>& features, const BasicParameters<T>& params,
                                const std::string& prefix, const AggregatorConfig& config) {
    features.validate();
    switch (config.kind) {
        case AggregatorKind::mean: return mean_pool(features.data);
        case AggregatorKind::lstm:
            if (features.form != Form::flat) throw ShapeError("lstm aggregation needs flat features");
            return lstm_pool(features.data, params, prefix);
        case AggregatorKind::convlstm:
            if (features.form != Form::spatial) throw ShapeError("convlstm aggregation needs spatial features");
            return convlstm_pool(features.data, params, prefix);
        case AggregatorKind::conv3d:
            if (features.form != Form::spatial) throw ShapeError("conv3d aggregation needs spatial features");
            return conv3d_pool(features.data, params, prefix, config.conv3d_target);
    }
    throw ConfigError("unknown aggregator");
}

template <class T>
BasicVideoEmbedding<T> concat_streams(const BasicVideoEmbedding<T>& a, const BasicVideoEmbedding<T>& b) {
    if (a.form != b.form) throw ShapeError("cannot concatenate flat and spatial embeddings");
    return {a.form, dc::concat(std::vector<BasicTensor<T>>{a.data, b.data}, 0)};
}

template <class T>
BasicVideoEmbedding<T> aggregate(const BasicStreamFeatures<T>* rgb, const BasicStreamFeatures<T>* flow,
                                 const BasicParameters<T>& params, const AggregatorConfig& config) {
    if (!rgb && !flow) throw ConfigError("at least one stream is required");
    std::optional<BasicVideoEmbedding<T>> out;
    for (const auto* s : {rgb, flow}) {
        if (!s) continue;
        BasicVideoEmbedding<T> e{output_form(config, s->form),
                                 aggregate_stream(*s, params, stream_prefix(s->stream) + "/agg", config)};
        out = out ? concat_streams(*out, e) : e;
    }
    return *out;
}

template <class T>
BasicVideoEmbedding<T> aggregate_mean(const BasicStreamFeatures<T>* rgb, const BasicStreamFeatures<T>* flow) {
    return aggregate(rgb, flow, BasicParameters<T>(), AggregatorConfig{AggregatorKind::mean});
}

template <class T>
BasicVideoEmbedding<T> aggregate_lstm(const BasicStreamFeatures<T>* rgb, const BasicStreamFeatures<T>* flow,
                                      const BasicParameters<T>& params) {
    return aggregate(rgb, flow, params, AggregatorConfig{AggregatorKind::lstm});
}

template <class T>
BasicVideoEmbedding<T> aggregate_convlstm(const BasicStreamFeatures<T>* rgb, const BasicStreamFeatures<T>* flow,
                                          const BasicParameters<T>& params) {
    return aggregate(rgb, flow, params, AggregatorConfig{AggregatorKind::convlstm});
}

template <class T>
BasicVideoEmbedding<T> aggregate_conv3d(const BasicStreamFeatures<T>* rgb, const BasicStreamFeatures<T>* flow,
                                        const BasicParameters<T>& params, Form target) {
    AggregatorConfig cfg{AggregatorKind::conv3d};
    cfg.conv3d_target = target;
    return aggregate(rgb, flow, params, cfg);
}

#define FSV_INSTANTIATE_EMBED(T)                                                                                      \
    template struct BasicStreamFeatures<T>;                                                                           \
    template BasicTensor<T> spatial_adapter(const BasicTensor<T>&, const BasicParameters<T>&, const std::string&);    \
    template BasicTensor<T> flatten_project(const BasicTensor<T>&, const BasicParameters<T>&, const std::string&);    \
    template BasicTensor<T> toy_encoder(const BasicTensor<T>&, const BasicParameters<T>&, const std::string&,         \
                                        const EncoderConfig&);                                                        \
    template BasicTensor<T> encode_frames(const BasicTensor<T>&, const BasicParameters<T>&, const std::string&,       \
                                          const EncoderConfig&);                                                      \
    template Shape init_encoder(BasicParameters<T>&, const std::string&, const EncoderConfig&, const Shape&,          \
                                std::mt19937_64&);                                                                    \
    template BasicTensor<T> mean_pool(const BasicTensor<T>&);                                                         \
    template BasicTensor<T> lstm_pool(const BasicTensor<T>&, const BasicParameters<T>&, const std::string&);          \
    template BasicTensor<T> convlstm_pool(const BasicTensor<T>&, const BasicParameters<T>&, const std::string&);      \
    template BasicTensor<T> conv3d_pool(const BasicTensor<T>&, const BasicParameters<T>&, const std::string&, Form);  \
    template Shape init_aggregator(BasicParameters<T>&, const std::string&, const AggregatorConfig&, const Shape&,    \
                                   std::mt19937_64&);                                                                 \
    template BasicTensor<T> aggregate_stream(const BasicStreamFeatures<T>&, const BasicParameters<T>&,                \
                                             const std::string&, const AggregatorConfig&);                            \
    template BasicVideoEmbedding<T> concat_streams(const BasicVideoEmbedding<T>&, const BasicVideoEmbedding<T>&);     \
    template BasicVideoEmbedding<T> aggregate(const BasicStreamFeatures<T>*, const BasicStreamFeatures<T>*,           \
                                              const BasicParameters<T>&, const AggregatorConfig&);                    \
    template BasicVideoEmbedding<T> aggregate_mean(const BasicStreamFeatures<T>*, const BasicStreamFeatures<T>*);     \
    template BasicVideoEmbedding<T> aggregate_lstm(const BasicStreamFeatures<T>*, const BasicStreamFeatures<T>*,      \
                                                   const BasicParameters<T>&);                                        \
    template BasicVideoEmbedding<T> aggregate_convlstm(const BasicStreamFeatures<T>*, const BasicStreamFeatures<T>*,  \
                                                       const BasicParameters<T>&);                                    \
    template BasicVideoEmbedding<T> aggregate_conv3d(const BasicStreamFeatures<T>*, const BasicStreamFeatures<T>*,    \
                                                     const BasicParameters<T>&, Form);

FSV_INSTANTIATE_EMBED(float)
FSV_INSTANTIATE_EMBED(double)

}  // namespace fsv::embed
