#pragma once

#include <cmath>
#include <cstddef>

#include "flinfer/dataset.hpp"
#include "flinfer/errors.hpp"

namespace flinfer {

namespace detail {
inline void check_lengths(const LabelDistribution& p, const LabelDistribution& q,
                          const char* what) {
    if (p.p.size() != q.p.size()) throw ShapeError(std::string(what) + ": length mismatch");
}
}  // namespace detail

// 1-Wasserstein on the integer class line: sum of |CDF differences|.
inline double wasserstein1d(const LabelDistribution& p, const LabelDistribution& q) {
    detail::check_lengths(p, q, "wasserstein1d");
    double cdf_gap = 0.0, total = 0.0;
    for (std::size_t i = 0; i + 1 < p.p.size(); ++i) {
        cdf_gap += p.p[i] - q.p[i];
        total += std::abs(cdf_gap);
    }
    return total;
}

// KL(p || q) in nats with 0*ln(0) = 0. Requires q to dominate p.
inline double kl(const LabelDistribution& p, const LabelDistribution& q) {
    detail::check_lengths(p, q, "kl");
    double total = 0.0;
    for (std::size_t i = 0; i < p.p.size(); ++i) {
        if (p.p[i] == 0.0) continue;
        if (q.p[i] == 0.0) throw ValidationError("kl: q must dominate p (q_i = 0 while p_i > 0)");
        total += p.p[i] * std::log(p.p[i] / q.p[i]);
    }
    return total;
}

inline double js(const LabelDistribution& p, const LabelDistribution& q) {
    detail::check_lengths(p, q, "js");
    LabelDistribution m;
    m.p.resize(p.p.size());
    for (std::size_t i = 0; i < p.p.size(); ++i) m.p[i] = 0.5 * (p.p[i] + q.p[i]);
    return 0.5 * kl(p, m) + 0.5 * kl(q, m);
}

inline double l1(const LabelDistribution& p, const LabelDistribution& q) {
    detail::check_lengths(p, q, "l1");
    double total = 0.0;
    for (std::size_t i = 0; i < p.p.size(); ++i) total += std::abs(p.p[i] - q.p[i]);
    return total;
}

// Mix with uniform so kl never hits a zero denominator; predictions can
// carry exact zeros from one-hot targets.
inline LabelDistribution smooth(const LabelDistribution& p, double lambda = 1e-6) {
    LabelDistribution out = p;
    const double u = 1.0 / static_cast<double>(p.p.size());
    for (auto& v : out.p) v = (1.0 - lambda) * v + lambda * u;
    return out;
}

struct DistanceReport {
    double wasserstein = 0.0;
    double kl = 0.0;
    double js = 0.0;
    double l1 = 0.0;
};

// The four distances of the evaluation protocol; kl is computed on
// lambda-smoothed inputs.
inline DistanceReport distance_report(const LabelDistribution& truth,
                                      const LabelDistribution& predicted,
                                      double smoothing = 1e-6) {
    DistanceReport r;
    r.wasserstein = wasserstein1d(truth, predicted);
    r.kl = kl(smooth(truth, smoothing), smooth(predicted, smoothing));
    r.js = js(truth, predicted);
    r.l1 = l1(truth, predicted);
    return r;
}

}  // namespace flinfer
