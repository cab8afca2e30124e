#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "fsv/error.hpp"

namespace fsv::flow {

/// Planar image with values in [0, 1]: pixels[(c * height + y) * width + x].
struct Frame {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<float> pixels;

    Frame() = default;
    Frame(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
        : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

    float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
    float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }

    /// Throws DataError unless channels is 1 or 3, sides are >= 16 and every
    /// value lies in [0, 1].
    void validate() const;
};

/// Dense flow stored interleaved as [H x W x 2]; (u, v) = (horizontal, vertical)
/// displacement in pixels from the first frame to the second.
struct FlowField {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> data;

    FlowField() = default;
    FlowField(std::size_t h, std::size_t w) : height(h), width(w), data(h * w * 2, 0.0f) {}

    float& u(std::size_t y, std::size_t x) { return data[(y * width + x) * 2]; }
    float& v(std::size_t y, std::size_t x) { return data[(y * width + x) * 2 + 1]; }
    float u(std::size_t y, std::size_t x) const { return data[(y * width + x) * 2]; }
    float v(std::size_t y, std::size_t x) const { return data[(y * width + x) * 2 + 1]; }
};

/// Frame-rate selection for one stream: a fixed rate, or a single frame
/// drawn at random from the base-rate anchors.
struct FpsChoice {
    bool single_frame = false;
    double rate = 1.0;

    static FpsChoice single() { return {true, 1.0}; }
    static FpsChoice at(double r) { return {false, r}; }
    bool operator==(const FpsChoice&) const = default;
};

struct FarnebackParams {
    double pyr_scale = 0.5;
    int levels = 3;
    int winsize = 15;
    int iterations = 3;
    int poly_n = 5;
    double poly_sigma = 1.1;
};

struct PreprocConfig {
    double native_fps = 30.0;
    double target_fps = 1.0;
    FpsChoice rgb_fps = FpsChoice::at(1.0);
    FpsChoice flow_fps = FpsChoice::at(1.0);
    std::size_t resize_to = 224;
    double flow_clamp = 20.0;
    std::size_t min_frames = 5;
    std::array<float, 3> rgb_mean{0.485f, 0.456f, 0.406f};
    std::array<float, 3> rgb_std{0.229f, 0.224f, 0.225f};
    std::array<float, 3> flow_mean{0.5f, 0.5f, 0.5f};
    std::array<float, 3> flow_std{0.5f, 0.5f, 0.5f};
    FarnebackParams farneback;

    /// Throws ConfigError on non-positive rates, clamp or min_frames.
    void validate() const;
};

}  // namespace fsv::flow
