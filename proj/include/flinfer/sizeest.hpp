#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flinfer/errors.hpp"
#include "flinfer/flsim.hpp"

namespace flinfer {

struct SizeSearchConfig {
    double tolerance = 0.0;  // absolute band half-width; 0 = 5% of target
    std::size_t s_init = 500;
    std::size_t s_min = 50;
    std::size_t s_max = 16384;
    std::size_t probe_rounds = 3;
    std::size_t probe_repeats = 5;
    std::size_t max_iters = 30;
    std::size_t local_epochs = 1;
    std::size_t batch_size = 32;
    double lr = 0.05;
    std::optional<LdpConfig> mirror_ldp;  // noise probes the way the victim is noised

    void validate() const {
        if (s_min == 0 || s_min > s_init || s_init > s_max)
            throw ValidationError("SizeSearchConfig: need 0 < s_min <= s_init <= s_max");
        if (tolerance < 0.0) throw ValidationError("SizeSearchConfig: tolerance must be >= 0");
    }

    double band_halfwidth(double target_norm) const {
        return tolerance > 0.0 ? tolerance : 0.05 * target_norm;
    }
};

// One probe draw: an IID virtual client of the given size trains
// probe_rounds successive rounds from the global parameters; the value is
// its mean per-round update norm.
inline double probe_norm_once(const MlpModel& global, std::size_t size, const Dataset& aux_pool,
                              const SizeSearchConfig& cfg, RngStream rng) {
    ClientState client;
    client.id = 0;
    client.local_epochs = cfg.local_epochs;
    client.batch_size = cfg.batch_size;
    client.lr = cfg.lr;
    client.dataset = partition_iid(aux_pool, size, 0.0, rng.child("draw")).first;
    client.batch_size = std::min(client.batch_size, client.dataset.size());

    MlpModel model = global;
    double norm_sum = 0.0;
    for (std::size_t r = 0; r < cfg.probe_rounds; ++r) {
        UploadRecord up = local_train(model, client, rng.child("round", r));
        if (cfg.mirror_ldp) {
            ParameterVector noised = apply_ldp(up.grad_update, *cfg.mirror_ldp,
                                               rng.child("ldp", r));
            norm_sum += grad_l2_norm(noised);
            model.params = model.params - noised;
        } else {
            norm_sum += up.grad_norm;
            model.params = up.params;
        }
    }
    return norm_sum / static_cast<double>(cfg.probe_rounds);
}

// Mean probe value over probe_repeats independent draws.
inline double probe_norm(const MlpModel& global, std::size_t size, const Dataset& aux_pool,
                         const SizeSearchConfig& cfg, RngStream rng) {
    if (cfg.probe_repeats == 0) throw ValidationError("probe_norm: probe_repeats must be >= 1");
    double total = 0.0;
    for (std::size_t rep = 0; rep < cfg.probe_repeats; ++rep)
        total += probe_norm_once(global, size, aux_pool, cfg, rng.child("rep", rep));
    return total / static_cast<double>(cfg.probe_repeats);
}

struct SearchStep {
    std::size_t iteration = 0;
    std::size_t size = 0;
    double norm = 0.0;
    std::string decision;  // accept | double | halve | clamp_low | clamp_high | oscillation
};

struct SizeEstimate {
    std::size_t size = 0;
    double norm = 0.0;
    bool oscillation_fallback = false;
    std::vector<SearchStep> trace;
};

// Doubling/halving search over a monotone probe: grow while the probe norm
// sits below the band, shrink while above, stop inside it. A 2x-cycle around
// the band resolves to the geometric mean of the oscillating pair.
inline SizeEstimate estimate_size_with_probe(double target_norm,
                                             const std::function<double(std::size_t)>& probe,
                                             const SizeSearchConfig& cfg) {
    cfg.validate();
    if (target_norm <= 0.0) throw ValidationError("estimate_size: target_norm must be positive");
    const double half = cfg.band_halfwidth(target_norm);
    const double lower = target_norm - half;  // delta_1
    const double upper = target_norm + half;  // delta_2

    SizeEstimate result;
    std::size_t size = cfg.s_init;
    std::size_t best_size = 0;
    double best_norm = 0.0, best_gap = 1e300;
    std::size_t clamp_streak = 0;
    std::set<std::size_t> visited;

    for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
        const double norm = probe(size);
        visited.insert(size);
        SearchStep step{iter, size, norm, ""};
        const double gap = std::abs(norm - target_norm);
        if (gap < best_gap) {
            best_gap = gap;
            best_size = size;
            best_norm = norm;
        }

        if (norm >= lower && norm <= upper) {
            step.decision = "accept";
            result.trace.push_back(step);
            result.size = size;
            result.norm = norm;
            return result;
        }

        std::size_t next = norm < lower ? size * 2 : size / 2;
        std::size_t clamped = std::min(std::max(next, cfg.s_min), cfg.s_max);
        if (clamped == size) {
            // Pinned against a bound and still outside the band.
            step.decision = norm < lower ? "clamp_high" : "clamp_low";
            result.trace.push_back(step);
            if (++clamp_streak >= 2)
                throw SearchError("estimate_size: target norm unreachable within [s_min, s_max]",
                                  best_size, best_norm);
            continue;
        }
        if (visited.count(clamped)) {
            // The walk would revisit a probed size: it straddles the band on
            // a 2x grid and will cycle forever. Split the difference.
            step.decision = "oscillation";
            result.trace.push_back(step);
            result.size = static_cast<std::size_t>(std::llround(
                std::sqrt(static_cast<double>(size) * static_cast<double>(clamped))));
            result.norm = best_norm;
            result.oscillation_fallback = true;
            return result;
        }
        clamp_streak = 0;
        step.decision = norm < lower ? "double" : "halve";
        result.trace.push_back(step);
        size = clamped;
    }
    throw SearchError("estimate_size: no band entry after max_iters", best_size, best_norm);
}

inline SizeEstimate estimate_size(double target_norm, const Dataset& aux_pool,
                                  const MlpModel& global, const SizeSearchConfig& cfg,
                                  RngStream rng) {
    return estimate_size_with_probe(
        target_norm,
        [&](std::size_t size) { return probe_norm(global, size, aux_pool, cfg, rng.child("size", size)); },
        cfg);
}

}  // namespace flinfer
