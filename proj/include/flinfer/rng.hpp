#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "flinfer/errors.hpp"

namespace flinfer {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer; full-avalanche bijection on 64 bits.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Counter-based random stream. A draw is a pure function of
// (seed, stream_id, counter), so streams derived from the same seed are
// reproducible independent of evaluation order or thread schedule.
class RngStream {
  public:
    RngStream() : RngStream(0, 0) {}
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed),
          stream_id_(stream_id),
          base_(detail::mix64(seed) ^ detail::mix64(detail::mix64(stream_id))),
          counter_(0) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    // Derive an independent child stream; the child starts at counter 0.
    RngStream child(std::uint64_t label) const {
        return RngStream(seed_, detail::mix64(stream_id_ ^ detail::mix64(label)));
    }
    RngStream child(std::string_view label) const { return child(detail::fnv1a(label)); }
    RngStream child(std::string_view label, std::uint64_t index) const {
        return child(label).child(index);
    }

    std::uint64_t next_u64() { return detail::mix64(base_ + detail::kGolden * ++counter_); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection keeps it unbiased.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw ValidationError("uniform_int: n must be positive");
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller (pairs cached).
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Marsaglia-Tsang; the alpha < 1 case goes through the boost identity.
    double gamma(double alpha) {
        if (alpha <= 0.0) throw ValidationError("gamma: alpha must be positive");
        if (alpha < 1.0) {
            double u = uniform();
            while (u <= 0.0) u = uniform();
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // Symmetric Dirichlet draw, normalized gamma variates.
    std::vector<double> dirichlet(double alpha, std::size_t dim) {
        std::vector<double> g(dim);
        double total = 0.0;
        for (auto& v : g) {
            v = gamma(alpha);
            total += v;
        }
        if (total <= 0.0) {
            // All-underflow draw; fall back to uniform.
            for (auto& v : g) v = 1.0 / static_cast<double>(dim);
            return g;
        }
        for (auto& v : g) v /= total;
        return g;
    }

    // In-place Fisher-Yates. Own implementation so sequences are
    // identical across standard libraries.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // k distinct indices drawn from [0, n) in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        if (k > n) throw CapacityError("sample_without_replacement: k exceeds population");
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + static_cast<std::size_t>(uniform_int(n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

  private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t base_;
    std::uint64_t counter_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace flinfer
