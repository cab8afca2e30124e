#pragma once

#include <array>
#include <vector>

#include "fsv/flow/frame.hpp"

namespace fsv::flow {

/// Single-channel float plane used inside the flow estimator.
struct Plane {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> v;

    Plane() = default;
    Plane(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), v(h * w, fill) {}
    float& operator()(std::size_t y, std::size_t x) { return v[y * width + x]; }
    float operator()(std::size_t y, std::size_t x) const { return v[y * width + x]; }
};

/// Per-pixel quadratic model f(x, y) ~ c + bx*x + by*y + axx*x^2 + ayy*y^2 + axy*x*y
/// fitted by Gaussian-weighted least squares over a (2n+1)^2 neighbourhood.
struct PolyExpansion {
    Plane bx, by, axx, ayy, axy;
};

PolyExpansion poly_expand(const Plane& image, int n, double sigma);

/// Dense two-frame motion estimate by polynomial expansion (Farneback).
/// Both frames must be single-channel with equal dimensions.
FlowField farneback_flow(const Frame& prev, const Frame& next, const FarnebackParams& params = {});

Plane to_plane(const Frame& gray);

}  // namespace fsv::flow
