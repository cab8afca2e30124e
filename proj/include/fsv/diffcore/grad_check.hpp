#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fsv/diffcore/params.hpp"

namespace fsv::dc {

struct GradCheckOptions {
    double tolerance = 1e-4;
    double step = 1e-4;
    // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
    double floor = 1e-3;
    // Elements checked per parameter; 0 checks every element. Larger tensors
    // are subsampled with a fixed stride so runs are reproducible.
    std::size_t max_elements = 0;
};

struct ParamGradReport {
    std::string name;
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    double max_abs_grad = 0.0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<ParamGradReport> params;
    double max_rel_error = 0.0;
    bool passed = true;

    std::string summary() const;
};

using ScalarFunction = std::function<Tensor64(const Parameters64&)>;

/// Compares backward() gradients of `fn` against central finite differences,
/// both evaluated in 64-bit precision.
GradCheckReport grad_check(const ScalarFunction& fn, Parameters64& params, const GradCheckOptions& options = {});

}  // namespace fsv::dc
