#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace fsv::flow::detail {

// Bilinear resampling with half-pixel centres (align_corners = false).
inline void resize_plane(const float* src, std::size_t h, std::size_t w, float* dst, std::size_t oh, std::size_t ow) {
    const double sy = static_cast<double>(h) / static_cast<double>(oh);
    const double sx = static_cast<double>(w) / static_cast<double>(ow);
    std::vector<std::size_t> x0(ow), x1(ow);
    std::vector<float> fx(ow);
    for (std::size_t x = 0; x < ow; ++x) {
        double s = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
        x0[x] = static_cast<std::size_t>(s);
        x1[x] = std::min(x0[x] + 1, w - 1);
        fx[x] = static_cast<float>(s - static_cast<double>(x0[x]));
    }
    for (std::size_t y = 0; y < oh; ++y) {
        double s = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
        const std::size_t y0 = static_cast<std::size_t>(s);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const float fy = static_cast<float>(s - static_cast<double>(y0));
        const float* r0 = src + y0 * w;
        const float* r1 = src + y1 * w;
        float* out = dst + y * ow;
        for (std::size_t x = 0; x < ow; ++x) {
            const float top = r0[x0[x]] + (r0[x1[x]] - r0[x0[x]]) * fx[x];
            const float bot = r1[x0[x]] + (r1[x1[x]] - r1[x0[x]]) * fx[x];
            out[x] = top + (bot - top) * fy;
        }
    }
}

}  // namespace fsv::flow::detail
