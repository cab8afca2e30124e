#include "fsv/flow/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fsv/flow/farneback.hpp"
#include "resample.hpp"

namespace fsv::flow {

void Frame::validate() const {
    if (channels != 1 && channels != 3) throw DataError("frame: channels must be 1 or 3, got " + std::to_string(channels));
    if (height < 16 || width < 16)
        throw DataError("frame: " + std::to_string(height) + "x" + std::to_string(width) + " is below the 16 px minimum");
    if (pixels.size() != height * width * channels) throw DataError("frame: pixel buffer size mismatch");
    for (float p : pixels)
        if (!(p >= 0.0f && p <= 1.0f)) throw DataError("frame: pixel value outside [0, 1]");
}

void PreprocConfig::validate() const {
    if (!(native_fps > 0)) throw ConfigError("native_fps must be > 0");
    if (!(target_fps > 0)) throw ConfigError("target_fps must be > 0");
    if (!rgb_fps.single_frame && !(rgb_fps.rate > 0)) throw ConfigError("rgb_fps must be > 0");
    if (!flow_fps.single_frame && !(flow_fps.rate > 0)) throw ConfigError("flow_fps must be > 0");
    if (!(flow_clamp > 0)) throw ConfigError("flow_clamp must be > 0");
    if (min_frames < 1) throw ConfigError("min_frames must be >= 1");
    if (resize_to < 16) throw ConfigError("resize_to must be >= 16");
    for (int c = 0; c < 3; ++c)
        if (rgb_std[c] == 0.0f || flow_std[c] == 0.0f) throw ConfigError("standardization std must be non-zero");
}

std::vector<std::size_t> sample_indices(std::size_t frame_count, double native_fps, double target_fps) {
    if (!(target_fps > 0) || !(native_fps > 0)) throw ConfigError("frame rates must be positive");
    if (native_fps < target_fps)
        throw ConfigError("target fps " + std::to_string(target_fps) + " exceeds native fps " + std::to_string(native_fps));
    const double duration = static_cast<double>(frame_count) / native_fps;
    const auto count = static_cast<std::size_t>(std::floor(duration * target_fps + 1e-9));
    std::vector<std::size_t> out;
    out.reserve(count);
    const double step = native_fps / target_fps;
    for (std::size_t i = 0; i < count; ++i) {
        const auto idx = static_cast<std::size_t>(std::llround(static_cast<double>(i) * step));
        if (idx >= frame_count) break;
        out.push_back(idx);
    }
    return out;
}

std::vector<Frame> sample_frames(const std::vector<Frame>& frames, double native_fps, double target_fps,
                                 std::size_t min_frames) {
    const auto idx = sample_indices(frames.size(), native_fps, target_fps);
    if (idx.size() < min_frames)
        throw TooShortError("clip yields " + std::to_string(idx.size()) + " frames at " + std::to_string(target_fps) +
                            " fps, need " + std::to_string(min_frames));
    std::vector<Frame> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(frames[i]);
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> flow_pairs(std::size_t frame_count,
                                                            std::span<const std::size_t> anchors) {
    if (frame_count < 2) throw TooShortError("flow needs at least two native frames");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(anchors.size());
    for (auto a : anchors) {
        if (a >= frame_count) throw DataError("flow anchor " + std::to_string(a) + " out of range");
        out.emplace_back(a + 1 < frame_count ? std::pair{a, a + 1} : std::pair{frame_count - 2, frame_count - 1});
    }
    return out;
}

Frame to_gray(const Frame& frame) {
    if (frame.channels == 1) return frame;
    Frame out(frame.height, frame.width, 1);
    const std::size_t plane = frame.height * frame.width;
    for (std::size_t i = 0; i < plane; ++i)
        out.pixels[i] = 0.299f * frame.pixels[i] + 0.587f * frame.pixels[plane + i] + 0.114f * frame.pixels[2 * plane + i];
    return out;
}

Frame resize_bilinear(const Frame& frame, std::size_t side) { return resize_bilinear(frame, side, side); }

Frame resize_bilinear(const Frame& frame, std::size_t out_h, std::size_t out_w) {
    if (out_h == frame.height && out_w == frame.width) return frame;
    Frame out(out_h, out_w, frame.channels);
    for (std::size_t c = 0; c < frame.channels; ++c)
        detail::resize_plane(frame.pixels.data() + c * frame.height * frame.width, frame.height, frame.width,
                             out.pixels.data() + c * out_h * out_w, out_h, out_w);
    return out;
}

namespace {

void check_std(const std::array<float, 3>& std) {
    for (float s : std)
        if (s == 0.0f) throw ConfigError("standardization std must be non-zero");
}

}  // namespace

dc::Tensor standardize_rgb(const Frame& frame, const std::array<float, 3>& mean, const std::array<float, 3>& std) {
    check_std(std);
    if (frame.channels != 3 && frame.channels != 1)
        throw ShapeError("standardize_rgb: expected 1 or 3 channels, got " + std::to_string(frame.channels));
    const std::size_t plane = frame.height * frame.width;
    dc::Tensor out({3, frame.height, frame.width});
    auto d = out.mutable_data();
    for (std::size_t c = 0; c < 3; ++c) {
        // Grayscale input is replicated across the three colour channels.
        const float* src = frame.pixels.data() + (frame.channels == 3 ? c : 0) * plane;
        for (std::size_t i = 0; i < plane; ++i) d[c * plane + i] = (src[i] - mean[c]) / std[c];
    }
    return out;
}

Frame destandardize_rgb(const dc::Tensor& t, const std::array<float, 3>& mean, const std::array<float, 3>& std) {
    if (t.ndim() != 3 || t.dim(0) != 3) throw ShapeError("destandardize_rgb: expected [3 x H x W], got " + dc::to_string(t.shape()));
    Frame out(t.dim(1), t.dim(2), 3);
    const std::size_t plane = out.height * out.width;
    auto d = t.data();
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < plane; ++i) out.pixels[c * plane + i] = d[c * plane + i] * std[c] + mean[c];
    return out;
}

dc::Tensor normalize_flow(const FlowField& flow, double clamp, const std::array<float, 3>& mean,
                          const std::array<float, 3>& std) {
    check_std(std);
    if (!(clamp > 0)) throw ConfigError("flow clamp must be > 0");
    const std::size_t plane = flow.height * flow.width;
    dc::Tensor out({3, flow.height, flow.width});
    auto d = out.mutable_data();
    for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t c = 0; c < 2; ++c) {
            const double raw = flow.data[i * 2 + c];
            if (!std::isfinite(raw)) throw NumericError("normalize_flow: non-finite flow value");
            const double unit = (std::clamp(raw, -clamp, clamp) + clamp) / (2.0 * clamp);
            d[c * plane + i] = static_cast<float>((unit - mean[c]) / std[c]);
        }
    const float zero = (0.0f - mean[2]) / std[2];
    std::fill(d.begin() + static_cast<long>(2 * plane), d.end(), zero);
    return out;
}

namespace {

std::vector<std::size_t> stream_anchors(const FpsChoice& choice, const std::vector<std::size_t>& base,
                                        std::size_t single_pick, std::size_t frame_count, const PreprocConfig& cfg) {
    if (choice.single_frame) return {base[single_pick]};
    auto idx = sample_indices(frame_count, cfg.native_fps, choice.rate);
    if (idx.size() < cfg.min_frames)
        throw TooShortError("clip yields " + std::to_string(idx.size()) + " frames at " + std::to_string(choice.rate) +
                            " fps, need " + std::to_string(cfg.min_frames));
    return idx;
}

}  // namespace

PreparedVideo prepare_video(const std::vector<Frame>& native_frames, const PreprocConfig& config, std::uint64_t seed,
                            bool want_rgb, bool want_flow) {
    config.validate();
    const std::size_t n = native_frames.size();
    const auto base = sample_indices(n, config.native_fps, config.target_fps);
    if (base.size() < config.min_frames)
        throw TooShortError("clip yields " + std::to_string(base.size()) + " frames at " +
                            std::to_string(config.target_fps) + " fps, need " + std::to_string(config.min_frames));
    std::mt19937_64 rng(seed);
    const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, base.size() - 1)(rng);
    const std::size_t S = config.resize_to;

    PreparedVideo out;
    if (want_rgb) {
        const auto idx = stream_anchors(config.rgb_fps, base, pick, n, config);
        std::vector<float> data;
        data.reserve(idx.size() * 3 * S * S);
        for (auto i : idx) {
            native_frames[i].validate();
            const auto t = standardize_rgb(resize_bilinear(native_frames[i], S), config.rgb_mean, config.rgb_std);
            data.insert(data.end(), t.data().begin(), t.data().end());
        }
        out.rgb = dc::Tensor({idx.size(), 3, S, S}, std::move(data));
    }
    if (want_flow) {
        const auto idx = stream_anchors(config.flow_fps, base, pick, n, config);
        const auto pairs = flow_pairs(n, idx);
        std::vector<float> data;
        data.reserve(pairs.size() * 3 * S * S);
        for (auto [a, b] : pairs) {
            native_frames[a].validate();
            native_frames[b].validate();
            const Frame g0 = resize_bilinear(to_gray(native_frames[a]), S);
            const Frame g1 = resize_bilinear(to_gray(native_frames[b]), S);
            const auto t = normalize_flow(farneback_flow(g0, g1, config.farneback), config.flow_clamp, config.flow_mean,
                                          config.flow_std);
            data.insert(data.end(), t.data().begin(), t.data().end());
        }
        out.flow = dc::Tensor({pairs.size(), 3, S, S}, std::move(data));
    }
    return out;
}

}  // namespace fsv::flow
