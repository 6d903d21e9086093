#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "flinfer/errors.hpp"
#include "flinfer/rng.hpp"
#include "flinfer/tensor.hpp"

namespace flinfer {

// Length-C simplex vector.
struct LabelDistribution {
    std::vector<double> p;

    std::size_t classes() const { return p.size(); }

    void validate() const {
        double sum = 0.0;
        for (double v : p) {
            if (v < 0.0) throw ValidationError("LabelDistribution: negative mass");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("LabelDistribution: mass must sum to 1");
    }

    static LabelDistribution uniform(std::size_t C) {
        return {std::vector<double>(C, 1.0 / static_cast<double>(C))};
    }

    static LabelDistribution from_counts(const std::vector<std::size_t>& counts) {
        std::size_t total = 0;
        for (std::size_t c : counts) total += c;
        if (total == 0) throw ValidationError("LabelDistribution: empty counts");
        LabelDistribution d;
        d.p.resize(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i)
            d.p[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
        return d;
    }

    std::size_t argmax() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < p.size(); ++i)
            if (p[i] > p[best]) best = i;
        return best;
    }
};

struct Dataset {
    Tensor2 features;  // n x d, values in [0, 1]
    std::vector<std::size_t> labels;
    std::size_t class_count = 0;

    std::size_t size() const { return labels.size(); }

    std::vector<std::size_t> label_counts() const {
        std::vector<std::size_t> counts(class_count, 0);
        for (std::size_t y : labels) counts[y]++;
        return counts;
    }

    LabelDistribution empirical_distribution() const {
        return LabelDistribution::from_counts(label_counts());
    }

    Dataset subset(const std::vector<std::size_t>& indices) const {
        Dataset out;
        out.class_count = class_count;
        out.features = Tensor2(indices.size(), features.cols);
        out.labels.resize(indices.size());
        for (std::size_t i = 0; i < indices.size(); ++i) {
            auto src = features.row(indices[i]);
            std::copy(src.begin(), src.end(), out.features.row(i).begin());
            out.labels[i] = labels[indices[i]];
        }
        return out;
    }

    void validate() const {
        if (features.rows != labels.size()) throw ShapeError("Dataset: labels length must equal rows");
        for (std::size_t y : labels)
            if (y >= class_count) throw ValidationError("Dataset: label out of range");
    }
};

// Client partition regimes.
struct IidFluctRegime {
    double delta = 0.1;  // per-label count band half-width, fraction of size/C
};
struct QuantityRegime {
    std::size_t c_f = 3;  // number of classes with nonzero mass
};
struct DirichletRegime {
    double alpha = 1.0;
};

using Regime = std::variant<IidFluctRegime, QuantityRegime, DirichletRegime>;

inline std::string regime_name(const Regime& r) {
    if (std::holds_alternative<IidFluctRegime>(r)) return "iid_fluct";
    if (std::holds_alternative<QuantityRegime>(r)) return "quantity";
    return "dirichlet";
}

struct PartitionSpec {
    Regime regime;
    std::size_t client_count = 0;
    std::vector<std::size_t> sizes;

    void validate(std::size_t C) const {
        if (const auto* iid = std::get_if<IidFluctRegime>(&regime)) {
            if (iid->delta < 0.0 || iid->delta >= 1.0)
                throw ValidationError("PartitionSpec: delta must be in [0, 1)");
        } else if (const auto* q = std::get_if<QuantityRegime>(&regime)) {
            if (q->c_f < 1 || q->c_f > C)
                throw ValidationError("PartitionSpec: c_f must be in [1, C]");
        } else if (const auto* d = std::get_if<DirichletRegime>(&regime)) {
            if (d->alpha <= 0.0) throw ValidationError("PartitionSpec: alpha must be positive");
        }
    }
};

// Synthetic benchmark pool: one Gaussian cluster per class, means at pairwise
// distance >= sep (unit noise std), affinely mapped into [0, 1].
inline Dataset gen_synthetic(std::size_t C, std::size_t d, std::size_t per_class_pool, double sep,
                             RngStream rng) {
    if (C < 2) throw ValidationError("gen_synthetic: need at least two classes");
    if (sep <= 0.0) throw ValidationError("gen_synthetic: sep must be positive");

    // Means scattered so typical pairwise distance sits just above sep.
    const double mean_std = 1.15 * sep / std::sqrt(2.0 * static_cast<double>(d));
    std::vector<std::vector<double>> means;
    double scale = 1.0;
    auto means_rng = rng.child("means");
    for (int attempt = 0;; ++attempt) {
        means.assign(C, std::vector<double>(d));
        for (auto& m : means)
            for (auto& v : m) v = means_rng.normal(0.0, mean_std * scale);
        double min_dist = 1e300;
        for (std::size_t i = 0; i < C; ++i)
            for (std::size_t j = i + 1; j < C; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    double diff = means[i][k] - means[j][k];
                    s += diff * diff;
                }
                min_dist = std::min(min_dist, std::sqrt(s));
            }
        if (min_dist >= sep) break;
        if (attempt > 0 && attempt % 64 == 0) scale *= 1.1;
    }

    double lo = 1e300, hi = -1e300;
    for (const auto& m : means)
        for (double v : m) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    lo -= 3.5;
    hi += 3.5;
    const double inv_range = 1.0 / (hi - lo);

    Dataset ds;
    ds.class_count = C;
    ds.features = Tensor2(C * per_class_pool, d);
    ds.labels.resize(C * per_class_pool);
    auto sample_rng = rng.child("samples");
    std::size_t row = 0;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < per_class_pool; ++i, ++row) {
            auto r = ds.features.row(row);
            for (std::size_t k = 0; k < d; ++k) {
                double v = (means[c][k] + sample_rng.normal() - lo) * inv_range;
                r[k] = std::clamp(v, 0.0, 1.0);
            }
            ds.labels[row] = c;
        }
    }
    return ds;
}

namespace detail {

// Largest-remainder rounding of proportions to integer counts summing to size.
inline std::vector<std::size_t> counts_from_proportions(const std::vector<double>& props,
                                                        std::size_t size) {
    const std::size_t C = props.size();
    std::vector<std::size_t> counts(C);
    std::vector<std::pair<double, std::size_t>> remainders(C);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < C; ++i) {
        double exact = props[i] * static_cast<double>(size);
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        remainders[i] = {exact - std::floor(exact), i};
        assigned += counts[i];
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t k = 0; assigned < size; ++k, ++assigned) counts[remainders[k % C].second]++;
    return counts;
}

// Draw `count` distinct pool rows of class c.
inline void draw_class(const Dataset& pool, const std::vector<std::vector<std::size_t>>& by_class,
                       std::size_t c, std::size_t count, RngStream& rng,
                       std::vector<std::size_t>& out) {
    const auto& candidates = by_class[c];
    if (count > candidates.size())
        throw CapacityError("partition: class " + std::to_string(c) + " needs " +
                            std::to_string(count) + " samples, pool has " +
                            std::to_string(candidates.size()));
    auto picks = rng.sample_without_replacement(candidates.size(), count);
    for (std::size_t p : picks) out.push_back(candidates[p]);
}

inline std::vector<std::vector<std::size_t>> index_by_class(const Dataset& pool) {
    std::vector<std::vector<std::size_t>> by_class(pool.class_count);
    for (std::size_t i = 0; i < pool.size(); ++i) by_class[pool.labels[i]].push_back(i);
    return by_class;
}

inline std::pair<Dataset, LabelDistribution> materialize(const Dataset& pool,
                                                         const std::vector<std::size_t>& counts,
                                                         RngStream& rng) {
    auto by_class = index_by_class(pool);
    std::vector<std::size_t> indices;
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] > 0) draw_class(pool, by_class, c, counts[c], rng, indices);
    Dataset ds = pool.subset(indices);
    return {std::move(ds), LabelDistribution::from_counts(counts)};
}

}  // namespace detail

// Per-label counts held inside [size/C*(1-delta), size/C*(1+delta)].
inline std::pair<Dataset, LabelDistribution> partition_iid(const Dataset& pool, std::size_t size,
                                                           double delta, RngStream rng) {
    if (delta < 0.0 || delta >= 1.0) throw ValidationError("partition_iid: delta must be in [0, 1)");
    const std::size_t C = pool.class_count;
    const double base = static_cast<double>(size) / static_cast<double>(C);
    std::vector<double> props(C);
    for (auto& v : props) v = base * (1.0 + rng.uniform(-delta, delta));
    double total = std::accumulate(props.begin(), props.end(), 0.0);
    for (auto& v : props) v /= total;
    auto counts = detail::counts_from_proportions(props, size);
    // Clamp back into the band; largest-remainder can step one outside it.
    const double lo_f = base * (1.0 - delta), hi_f = base * (1.0 + delta);
    const std::size_t lo = static_cast<std::size_t>(std::ceil(lo_f - 1e-9));
    const std::size_t hi = static_cast<std::size_t>(std::floor(hi_f + 1e-9));
    for (std::size_t rounds = 0; lo <= hi && rounds < C; ++rounds) {
        std::ptrdiff_t spill = 0;
        for (auto& c : counts) {
            if (c > hi) {
                spill += static_cast<std::ptrdiff_t>(c - hi);
                c = hi;
            } else if (c < lo) {
                spill -= static_cast<std::ptrdiff_t>(lo - c);
                c = lo;
            }
        }
        if (spill == 0) break;
        for (std::size_t i = 0; i < C && spill != 0; ++i) {
            if (spill > 0 && counts[i] < hi) {
                counts[i]++;
                spill--;
            } else if (spill < 0 && counts[i] > lo) {
                counts[i]--;
                spill++;
            }
        }
    }
    return detail::materialize(pool, counts, rng);
}

// Exactly c_f classes carry mass; within the support the split is a
// symmetric Dirichlet(1) draw.
inline std::pair<Dataset, LabelDistribution> partition_quantity(const Dataset& pool,
                                                                std::size_t size, std::size_t c_f,
                                                                RngStream rng) {
    const std::size_t C = pool.class_count;
    if (c_f < 1 || c_f > C) throw ValidationError("partition_quantity: c_f must be in [1, C]");
    if (size < c_f) throw ValidationError("partition_quantity: size smaller than c_f");
    auto support = rng.sample_without_replacement(C, c_f);
    auto split = rng.dirichlet(1.0, c_f);
    auto support_counts = detail::counts_from_proportions(split, size);
    // Every selected class must keep nonzero mass.
    for (std::size_t i = 0; i < c_f; ++i) {
        while (support_counts[i] == 0) {
            std::size_t donor = 0;
            for (std::size_t j = 1; j < c_f; ++j)
                if (support_counts[j] > support_counts[donor]) donor = j;
            support_counts[donor]--;
            support_counts[i]++;
        }
    }
    std::vector<std::size_t> counts(C, 0);
    for (std::size_t i = 0; i < c_f; ++i) counts[support[i]] = support_counts[i];
    return detail::materialize(pool, counts, rng);
}

// Target proportions drawn from Dir(alpha * 1_C), rounded by largest
// remainder. Throws CapacityError when the draw demands more of a class
// than the pool holds; callers retry with the advanced stream.
inline std::pair<Dataset, LabelDistribution> partition_dirichlet(const Dataset& pool,
                                                                 std::size_t size, double alpha,
                                                                 RngStream rng) {
    if (alpha <= 0.0) throw ValidationError("partition_dirichlet: alpha must be positive");
    auto props = rng.dirichlet(alpha, pool.class_count);
    auto counts = detail::counts_from_proportions(props, size);
    return detail::materialize(pool, counts, rng);
}

// One virtual client: where it samples from and how.
struct VirtualClientSpec {
    std::size_t id = 0;
    std::size_t size = 0;
    Regime regime;
    LabelDistribution true_distribution;
    std::uint64_t seed = 0;
};

// Draw a client dataset from the shared pool per the spec's regime and
// size. Within a client samples never repeat; across clients the pool is
// shared. Dirichlet draws that exceed per-class capacity are redrawn.
inline Dataset sample_auxiliary(const Dataset& pool, const VirtualClientSpec& spec) {
    if (spec.size < pool.class_count)
        throw ValidationError("sample_auxiliary: size must be at least the class count");
    RngStream rng(spec.seed, 0);
    if (const auto* iid = std::get_if<IidFluctRegime>(&spec.regime))
        return partition_iid(pool, spec.size, iid->delta, rng).first;
    if (const auto* q = std::get_if<QuantityRegime>(&spec.regime)) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            try {
                return partition_quantity(pool, spec.size, q->c_f, rng.child(attempt)).first;
            } catch (const CapacityError&) {
            }
        }
        throw CapacityError("sample_auxiliary: quantity draw never fit the pool");
    }
    const auto& d = std::get<DirichletRegime>(spec.regime);
    for (int attempt = 0; attempt < 100; ++attempt) {
        try {
            return partition_dirichlet(pool, spec.size, d.alpha, rng.child(attempt)).first;
        } catch (const CapacityError&) {
        }
    }
    throw CapacityError("sample_auxiliary: dirichlet draw never fit the pool");
}

}  // namespace flinfer
