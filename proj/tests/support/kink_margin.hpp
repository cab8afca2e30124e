#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "fsv/diffcore/params.hpp"

namespace fsv::fixture {

// Finite differences are only meaningful where the function is smooth across
// the whole stencil. For a relu-fed conv layer `layer` whose inputs are bounded
// by `input_bound`, biases become +0.5, +0.5, -0.5, ... per output channel and
// weights are rescaled so |w . x| <= 0.45. Every pre-activation then sits at
// least 0.05 from the kink, far outside a 1e-4 perturbation.
inline void clear_of_kinks(dc::Parameters64& p, const std::string& layer, double input_bound) {
    auto& w = p.at(layer + ".w");
    auto& b = p.at(layer + ".b");
    const std::size_t out = w.dim(0);
    const std::size_t fan_in = w.numel() / out;
    double peak = 0.0;
    for (double v : w.data()) peak = std::max(peak, std::abs(v));
    const double target = 0.45 / (static_cast<double>(fan_in) * input_bound);
    for (auto& v : w.mutable_data()) v *= target / peak;
    auto bd = b.mutable_data();
    for (std::size_t o = 0; o < out; ++o) bd[o] = (o % 3 == 2) ? -0.5 : 0.5;
}

// Toy encoder layers for frames in [-1, 1]; relu outputs stay below 0.95.
inline void clear_toy_encoder(dc::Parameters64& p, const std::string& prefix) {
    clear_of_kinks(p, prefix + "/conv1", 1.0);
    clear_of_kinks(p, prefix + "/conv2", 0.95);
    clear_of_kinks(p, prefix + "/conv3", 0.95);
}

}  // namespace fsv::fixture
