#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>

#include "fsv/diffcore/ops.hpp"
#include "fsv/diffcore/params.hpp"

namespace fsv::embed {

enum class Form { flat, spatial };
enum class Stream { rgb, flow };
enum class EncoderMode { precomputed, toy };
enum class AggregatorKind { mean, lstm, convlstm, conv3d };

std::string_view to_string(Form f);
std::string_view to_string(Stream s);
std::string_view to_string(EncoderMode m);
std::string_view to_string(AggregatorKind k);
AggregatorKind parse_aggregator(std::string_view s);
EncoderMode parse_encoder_mode(std::string_view s);

/// Per-frame features of one stream: flat [T x D] or spatial [T x C x H x W].
template <class T>
struct BasicStreamFeatures {
    Form form = Form::flat;
    Stream stream = Stream::rgb;
    dc::BasicTensor<T> data;

    std::size_t frames() const { return data.dim(0); }
    /// Throws ShapeError if the tensor rank disagrees with the form or T == 0.
    void validate() const;
};

/// Aggregated clip representation: flat [D] or spatial [C x H x W].
template <class T>
struct BasicVideoEmbedding {
    Form form = Form::flat;
    dc::BasicTensor<T> data;
};

using StreamFeatures = BasicStreamFeatures<float>;
using VideoEmbedding = BasicVideoEmbedding<float>;

struct EncoderConfig {
    EncoderMode mode = EncoderMode::toy;
    Form form = Form::flat;
    std::size_t flat_dim = 512;
    std::size_t spatial_channels = 256;
};

struct AggregatorConfig {
    AggregatorKind kind = AggregatorKind::mean;
    std::size_t lstm_hidden = 512;
    std::size_t conv3d_channels = 512;
    /// Output form of the conv3d aggregator; the others keep their input form.
    Form conv3d_target = Form::flat;
};

/// Form the encoder must emit for an aggregator.
Form encoder_form_for(AggregatorKind kind, Form mean_form);
/// Form of the aggregated embedding.
Form output_form(const AggregatorConfig& config, Form encoder_form);

// ---------------------------------------------------------------- layers

/// conv 3x3 stride 2 pad 1 (14x14 -> 7x7) then 2x2 average pool stride 1
/// (-> 6x6). Accepts [C x 14 x 14] or [N x C x 14 x 14].
template <class T>
dc::BasicTensor<T> spatial_adapter(const dc::BasicTensor<T>& maps, const dc::BasicParameters<T>& params,
                                   const std::string& prefix);

/// Row-major flatten of [C x 6 x 6] (or [N x C x 6 x 6]) followed by an affine map.
template <class T>
dc::BasicTensor<T> flatten_project(const dc::BasicTensor<T>& maps, const dc::BasicParameters<T>& params,
                                   const std::string& prefix);

/// Three relu conv blocks (32, 64, C channels; strides 2, 2, 1) on
/// [N x 3 x 32 x 32] frames. Spatial form pools to [N x C x 6 x 6]; flat form
/// averages globally and projects to [N x D].
template <class T>
dc::BasicTensor<T> toy_encoder(const dc::BasicTensor<T>& frames, const dc::BasicParameters<T>& params,
                               const std::string& prefix, const EncoderConfig& config);

/// Per-frame encoding in either mode. `frames` is [N x ...]; precomputed
/// inputs pass through the adapter/projection their shape calls for.
template <class T>
dc::BasicTensor<T> encode_frames(const dc::BasicTensor<T>& frames, const dc::BasicParameters<T>& params,
                                 const std::string& prefix, const EncoderConfig& config);

/// Registers the encoder parameters for per-frame inputs of `frame_shape`.
/// Returns the per-frame output shape.
template <class T>
dc::Shape init_encoder(dc::BasicParameters<T>& params, const std::string& prefix, const EncoderConfig& config,
                       const dc::Shape& frame_shape, std::mt19937_64& rng);

// ----------------------------------------------------------- aggregators

template <class T>
dc::BasicTensor<T> mean_pool(const dc::BasicTensor<T>& seq);

/// Single-layer LSTM over [T x D]; returns the mean hidden state [H].
template <class T>
dc::BasicTensor<T> lstm_pool(const dc::BasicTensor<T>& seq, const dc::BasicParameters<T>& params,
                             const std::string& prefix);

/// Convolutional LSTM over [T x C x H x W] with 3x3 same-padded gates;
/// returns the mean hidden map [C x H x W].
template <class T>
dc::BasicTensor<T> convlstm_pool(const dc::BasicTensor<T>& seq, const dc::BasicParameters<T>& params,
                                 const std::string& prefix);

/// conv3d -> relu -> conv3d over [T x C x H x W], mean over time, then
/// adaptive pooling to [C3 x 6 x 6] (spatial) or [C3] (flat).
template <class T>
dc::BasicTensor<T> conv3d_pool(const dc::BasicTensor<T>& seq, const dc::BasicParameters<T>& params,
                               const std::string& prefix, Form target);

/// Registers aggregator parameters for per-frame features of `frame_shape`.
/// Returns the aggregated shape.
template <class T>
dc::Shape init_aggregator(dc::BasicParameters<T>& params, const std::string& prefix, const AggregatorConfig& config,
                          const dc::Shape& frame_shape, std::mt19937_64& rng);

template <class T>
dc::BasicTensor<T> aggregate_stream(const BasicStreamFeatures<T>& features, const dc::BasicParameters<T>& params,
                                    const std::string& prefix, const AggregatorConfig& config);

/// Flat embeddings join end to end, spatial ones along channels; `a` comes first.
template <class T>
BasicVideoEmbedding<T> concat_streams(const BasicVideoEmbedding<T>& a, const BasicVideoEmbedding<T>& b);

/// Aggregates each present stream with its own parameters ("rgb/agg",
/// "flow/agg") and concatenates rgb before flow. Either pointer may be null.
template <class T>
BasicVideoEmbedding<T> aggregate(const BasicStreamFeatures<T>* rgb, const BasicStreamFeatures<T>* flow,
                                 const dc::BasicParameters<T>& params, const AggregatorConfig& config);

template <class T>
BasicVideoEmbedding<T> aggregate_mean(const BasicStreamFeatures<T>* rgb, const BasicStreamFeatures<T>* flow);
template <class T>
BasicVideoEmbedding<T> aggregate_lstm(const BasicStreamFeatures<T>* rgb, const BasicStreamFeatures<T>* flow,
                                      const dc::BasicParameters<T>& params);
template <class T>
BasicVideoEmbedding<T> aggregate_convlstm(const BasicStreamFeatures<T>* rgb, const BasicStreamFeatures<T>* flow,
                                          const dc::BasicParameters<T>& params);
template <class T>
BasicVideoEmbedding<T> aggregate_conv3d(const BasicStreamFeatures<T>* rgb, const BasicStreamFeatures<T>* flow,
                                        const dc::BasicParameters<T>& params, Form target);

std::string stream_prefix(Stream s);

}  // namespace fsv::embed
