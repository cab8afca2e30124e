#include "fsv/diffcore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fsv::dc {

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    for (const auto& p : params) {
        char line[192];
        std::snprintf(line, sizeof line, "%-40s %6zu checked  max |grad| %.3e  max rel err %.3e  %s\n", p.name.c_str(),
                      p.checked, p.max_abs_grad, p.max_rel_error, p.passed ? "ok" : "FAIL");
        os << line;
    }
    return os.str();
}

GradCheckReport grad_check(const ScalarFunction& fn, Parameters64& params, const GradCheckOptions& options) {
    params.zero_grad();
    {
        Tape64 tape;
        TapeScope<double> scope(tape);
        Tensor64 loss = fn(params);
        // A loss that never touched a parameter is not on the tape; its gradient is zero.
        if (tape.owns(*loss.node())) tape.backward(loss);
    }
    std::map<std::string, std::vector<double>> analytic;
    for (const auto& [name, t] : params) analytic[name].assign(t.grad().begin(), t.grad().end());

    GradCheckReport report;
    for (auto& [name, t] : params) {
        ParamGradReport pr;
        pr.name = name;
        const std::size_t n = t.numel();
        const std::size_t stride =
            (options.max_elements == 0 || n <= options.max_elements) ? 1 : (n + options.max_elements - 1) / options.max_elements;
        auto data = t.mutable_data();
        for (std::size_t i = 0; i < n; i += stride) {
            const double original = data[i];
            data[i] = original + options.step;
            const double plus = fn(params).item();
            data[i] = original - options.step;
            const double minus = fn(params).item();
            data[i] = original;
            const double numeric = (plus - minus) / (2.0 * options.step);
            const double a = analytic[name][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
            const double rel = std::abs(a - numeric) / denom;
            pr.max_rel_error = std::max(pr.max_rel_error, rel);
            pr.max_abs_grad = std::max(pr.max_abs_grad, std::abs(a));
            ++pr.checked;
        }
        pr.passed = pr.max_rel_error < options.tolerance;
        report.max_rel_error = std::max(report.max_rel_error, pr.max_rel_error);
        report.passed = report.passed && pr.passed;
        report.params.push_back(pr);
    }
    return report;
}

}  // namespace fsv::dc
