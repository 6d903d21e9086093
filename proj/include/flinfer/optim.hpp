#pragma once

#include <cmath>
#include <cstdint>

#include "flinfer/tensor.hpp"

namespace flinfer {

inline ParameterVector sgd_step(const ParameterVector& params, const ParameterVector& grad,
                                double lr) {
    check_same_layout(params, grad, "sgd_step");
    ParameterVector out = params;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= lr * grad.values[i];
    return out;
}

struct AdamState {
    ParameterVector m;
    ParameterVector v;
    std::uint64_t t = 0;

    explicit AdamState(LayoutPtr layout) : m(layout), v(layout) {}
};

// Bias-corrected Adam; returns updated params, advances the state in place.
inline ParameterVector adam_step(AdamState& state, const ParameterVector& params,
                                 const ParameterVector& grad, double lr, double beta1 = 0.9,
                                 double beta2 = 0.999, double eps = 1e-8) {
    check_same_layout(params, grad, "adam_step");
    check_same_layout(params, state.m, "adam_step");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    ParameterVector out = params;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        double g = grad.values[i];
        state.m.values[i] = beta1 * state.m.values[i] + (1.0 - beta1) * g;
        state.v.values[i] = beta2 * state.v.values[i] + (1.0 - beta2) * g * g;
        double mhat = state.m.values[i] / bc1;
        double vhat = state.v.values[i] / bc2;
        out.values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    return out;
}

}  // namespace flinfer
