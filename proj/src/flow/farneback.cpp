#include "fsv/flow/farneback.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "resample.hpp"

namespace fsv::flow {

namespace {

std::vector<float> gaussian_kernel(int radius, double sigma) {
    std::vector<float> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double g = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
        k[i + radius] = static_cast<float>(g);
        sum += g;
    }
    for (auto& v : k) v = static_cast<float>(v / sum);
    return k;
}

inline std::size_t clamp_index(long i, std::size_t n) {
    if (i < 0) return 0;
    if (i >= static_cast<long>(n)) return n - 1;
    return static_cast<std::size_t>(i);
}

// Separable correlation with replicated borders.
Plane filter_separable(const Plane& in, const std::vector<float>& kx, const std::vector<float>& ky) {
    const long rx = static_cast<long>(kx.size() / 2);
    const long ry = static_cast<long>(ky.size() / 2);
    Plane tmp(in.height, in.width), out(in.height, in.width);
    for (std::size_t y = 0; y < in.height; ++y)
        for (std::size_t x = 0; x < in.width; ++x) {
            float acc = 0.0f;
            for (long d = -rx; d <= rx; ++d) acc += kx[d + rx] * in(y, clamp_index(static_cast<long>(x) + d, in.width));
            tmp(y, x) = acc;
        }
    for (std::size_t y = 0; y < in.height; ++y)
        for (std::size_t x = 0; x < in.width; ++x) {
            float acc = 0.0f;
            for (long d = -ry; d <= ry; ++d) acc += ky[d + ry] * tmp(clamp_index(static_cast<long>(y) + d, in.height), x);
            out(y, x) = acc;
        }
    return out;
}

Plane box_blur(const Plane& in, int window) {
    std::vector<float> k(static_cast<std::size_t>(window), 1.0f / static_cast<float>(window));
    return filter_separable(in, k, k);
}

Plane resize(const Plane& in, std::size_t h, std::size_t w) {
    Plane out(h, w);
    detail::resize_plane(in.v.data(), in.height, in.width, out.v.data(), h, w);
    return out;
}

float sample(const Plane& p, float y, float x) {
    y = std::clamp(y, 0.0f, static_cast<float>(p.height - 1));
    x = std::clamp(x, 0.0f, static_cast<float>(p.width - 1));
    const std::size_t y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
    const std::size_t y1 = std::min(y0 + 1, p.height - 1), x1 = std::min(x0 + 1, p.width - 1);
    const float fy = y - static_cast<float>(y0), fx = x - static_cast<float>(x0);
    const float top = p(y0, x0) + (p(y0, x1) - p(y0, x0)) * fx;
    const float bot = p(y1, x0) + (p(y1, x1) - p(y1, x0)) * fx;
    return top + (bot - top) * fy;
}

// Confidence falloff near the image border, where the expansion sees replicated pixels.
constexpr float kBorder[5] = {0.14f, 0.14f, 0.4472f, 0.4472f, 0.4472f};

float border_weight(std::size_t i, std::size_t n) {
    float w = 1.0f;
    if (i < 5) w *= kBorder[i];
    if (n - 1 - i < 5) w *= kBorder[n - 1 - i];
    return w;
}

struct Matrices {
    Plane g11, g12, g22, h1, h2;
};

Matrices update_matrices(const PolyExpansion& r0, const PolyExpansion& r1, const Plane& u, const Plane& v) {
    const std::size_t h = u.height, w = u.width;
    Matrices m{Plane(h, w), Plane(h, w), Plane(h, w), Plane(h, w), Plane(h, w)};
    for (std::size_t y = 0; y < h; ++y) {
        const float wy = border_weight(y, h);
        for (std::size_t x = 0; x < w; ++x) {
            const float dx = u(y, x), dy = v(y, x);
            const float sy = static_cast<float>(y) + dy, sx = static_cast<float>(x) + dx;
            float a11 = 0.5f * (r0.axx(y, x) + sample(r1.axx, sy, sx));
            float a22 = 0.5f * (r0.ayy(y, x) + sample(r1.ayy, sy, sx));
            float a12 = 0.25f * (r0.axy(y, x) + sample(r1.axy, sy, sx));
            float b1 = -0.5f * (sample(r1.bx, sy, sx) - r0.bx(y, x)) + a11 * dx + a12 * dy;
            float b2 = -0.5f * (sample(r1.by, sy, sx) - r0.by(y, x)) + a12 * dx + a22 * dy;
            const float wgt = wy * border_weight(x, w);
            a11 *= wgt, a22 *= wgt, a12 *= wgt, b1 *= wgt, b2 *= wgt;
            m.g11(y, x) = a11 * a11 + a12 * a12;
            m.g12(y, x) = a11 * a12 + a12 * a22;
            m.g22(y, x) = a12 * a12 + a22 * a22;
            m.h1(y, x) = a11 * b1 + a12 * b2;
            m.h2(y, x) = a12 * b1 + a22 * b2;
        }
    }
    return m;
}

void solve_flow(const Matrices& m, Plane& u, Plane& v) {
    for (std::size_t i = 0; i < u.v.size(); ++i) {
        const double g11 = m.g11.v[i], g12 = m.g12.v[i], g22 = m.g22.v[i];
        const double h1 = m.h1.v[i], h2 = m.h2.v[i];
        const double idet = 1.0 / (g11 * g22 - g12 * g12 + 1e-3);
        u.v[i] = static_cast<float>((g22 * h1 - g12 * h2) * idet);
        v.v[i] = static_cast<float>((g11 * h2 - g12 * h1) * idet);
    }
}

}  // namespace

Plane to_plane(const Frame& gray) {
    if (gray.channels != 1) throw ShapeError("farneback: expected a single-channel frame, got " +
                                             std::to_string(gray.channels) + " channels");
    Plane p(gray.height, gray.width);
    p.v = gray.pixels;
    return p;
}

PolyExpansion poly_expand(const Plane& image, int n, double sigma) {
    const auto g = gaussian_kernel(n, sigma);

    // Gram matrix of the basis {1, x, y, x^2, y^2, xy} under the weights g(x)g(y).
    Eigen::Matrix<double, 6, 6> gram = Eigen::Matrix<double, 6, 6>::Zero();
    for (int dy = -n; dy <= n; ++dy)
        for (int dx = -n; dx <= n; ++dx) {
            const double wgt = static_cast<double>(g[dx + n]) * g[dy + n];
            Eigen::Matrix<double, 6, 1> phi;
            phi << 1.0, dx, dy, dx * dx, dy * dy, dx * dy;
            gram += wgt * phi * phi.transpose();
        }
    const Eigen::Matrix<double, 6, 6> ginv = gram.inverse();

    const std::size_t h = image.height, w = image.width;
    // Vertical pass: moments of order 0, 1, 2 in y.
    Plane v0(h, w), v1(h, w), v2(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            float s0 = 0, s1 = 0, s2 = 0;
            for (int d = -n; d <= n; ++d) {
                const float f = g[d + n] * image(clamp_index(static_cast<long>(y) + d, h), x);
                s0 += f;
                s1 += f * d;
                s2 += f * d * d;
            }
            v0(y, x) = s0, v1(y, x) = s1, v2(y, x) = s2;
        }

    PolyExpansion out{Plane(h, w), Plane(h, w), Plane(h, w), Plane(h, w), Plane(h, w)};
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            Eigen::Matrix<double, 6, 1> m = Eigen::Matrix<double, 6, 1>::Zero();
            for (int d = -n; d <= n; ++d) {
                const std::size_t xi = clamp_index(static_cast<long>(x) + d, w);
                const double gw = g[d + n];
                const double a0 = v0(y, xi), a1 = v1(y, xi), a2 = v2(y, xi);
                m[0] += gw * a0;
                m[1] += gw * d * a0;
                m[2] += gw * a1;
                m[3] += gw * d * d * a0;
                m[4] += gw * a2;
                m[5] += gw * d * a1;
            }
            const Eigen::Matrix<double, 6, 1> c = ginv * m;
            out.bx(y, x) = static_cast<float>(c[1]);
            out.by(y, x) = static_cast<float>(c[2]);
            out.axx(y, x) = static_cast<float>(c[3]);
            out.ayy(y, x) = static_cast<float>(c[4]);
            out.axy(y, x) = static_cast<float>(c[5]);
        }
    return out;
}

FlowField farneback_flow(const Frame& prev, const Frame& next, const FarnebackParams& params) {
    if (prev.height != next.height || prev.width != next.width)
        throw ShapeError("farneback: frame dims differ (" + std::to_string(prev.height) + "x" +
                         std::to_string(prev.width) + " vs " + std::to_string(next.height) + "x" +
                         std::to_string(next.width) + ")");
    Plane p0 = to_plane(prev), p1 = to_plane(next);
    // Work on the 8-bit intensity scale so the solver regulariser has its usual weight.
    for (auto& x : p0.v) x *= 255.0f;
    for (auto& x : p1.v) x *= 255.0f;

    const std::size_t H = prev.height, W = prev.width;
    constexpr std::size_t kMinSide = 16;
    int levels = 1;
    for (double s = params.pyr_scale; levels < params.levels; s *= params.pyr_scale) {
        if (std::lround(H * s) < static_cast<long>(kMinSide) || std::lround(W * s) < static_cast<long>(kMinSide)) break;
        ++levels;
    }

    Plane u, v;
    for (int k = levels - 1; k >= 0; --k) {
        const double scale = std::pow(params.pyr_scale, k);
        const std::size_t h = k == 0 ? H : static_cast<std::size_t>(std::lround(H * scale));
        const std::size_t w = k == 0 ? W : static_cast<std::size_t>(std::lround(W * scale));

        Plane l0 = p0, l1 = p1;
        if (k > 0) {
            const double sigma = (1.0 / scale - 1.0) * 0.5;
            const int radius = std::max(1, static_cast<int>(std::lround(sigma * 2.5)));
            const auto kern = gaussian_kernel(radius, sigma);
            l0 = resize(filter_separable(p0, kern, kern), h, w);
            l1 = resize(filter_separable(p1, kern, kern), h, w);
        }

        if (u.v.empty()) {
            u = Plane(h, w);
            v = Plane(h, w);
        } else {
            const float sx = static_cast<float>(w) / static_cast<float>(u.width);
            const float sy = static_cast<float>(h) / static_cast<float>(u.height);
            u = resize(u, h, w);
            v = resize(v, h, w);
            for (auto& x : u.v) x *= sx;
            for (auto& x : v.v) x *= sy;
        }

        const PolyExpansion r0 = poly_expand(l0, params.poly_n, params.poly_sigma);
        const PolyExpansion r1 = poly_expand(l1, params.poly_n, params.poly_sigma);
        for (int it = 0; it < params.iterations; ++it) {
            Matrices m = update_matrices(r0, r1, u, v);
            m.g11 = box_blur(m.g11, params.winsize);
            m.g12 = box_blur(m.g12, params.winsize);
            m.g22 = box_blur(m.g22, params.winsize);
            m.h1 = box_blur(m.h1, params.winsize);
            m.h2 = box_blur(m.h2, params.winsize);
            solve_flow(m, u, v);
        }
    }

    FlowField out(H, W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            out.u(y, x) = u(y, x);
            out.v(y, x) = v(y, x);
        }
    return out;
}

}  // namespace fsv::flow
