#pragma once

#include <cmath>
#include <functional>

#include "flinfer/tensor.hpp"

namespace flinfer::test {

// Central finite differences of a scalar function over a flat parameter
// vector. Independent of every analytic backward path it is used to check.
inline ParameterVector finite_difference_grad(const std::function<double(const ParameterVector&)>& f,
                                              const ParameterVector& params, double step = 1e-5) {
    ParameterVector grad(params.layout);
    ParameterVector probe = params;
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        const double saved = probe.values[i];
        probe.values[i] = saved + step;
        const double above = f(probe);
        probe.values[i] = saved - step;
        const double below = f(probe);
        probe.values[i] = saved;
        grad.values[i] = (above - below) / (2.0 * step);
    }
    return grad;
}

// max_i |a_i - b_i| / max(1e-8, |a_i| + |b_i|)
inline double max_relative_error(const ParameterVector& a, const ParameterVector& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double denom = std::max(1e-8, std::abs(a.values[i]) + std::abs(b.values[i]));
        worst = std::max(worst, std::abs(a.values[i] - b.values[i]) / denom);
    }
    return worst;
}

}  // namespace flinfer::test
