#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "flinfer/sizeest.hpp"

using namespace flinfer;

namespace {

SizeSearchConfig oracle_cfg(std::size_t s_init, double tolerance) {
    SizeSearchConfig cfg;
    cfg.s_init = s_init;
    cfg.s_min = 50;
    cfg.s_max = 100000;
    cfg.tolerance = tolerance;
    return cfg;
}

}  // namespace

TEST_CASE("target already in band returns s_init in one iteration", "[sizeest]") {
    auto probe = [](std::size_t s) { return std::log2(static_cast<double>(s)); };
    auto cfg = oracle_cfg(1024, 0.4);
    auto est = estimate_size_with_probe(std::log2(1024.0), probe, cfg);
    REQUIRE(est.size == 1024);
    REQUIRE(est.trace.size() == 1);
    REQUIRE(est.trace[0].decision == "accept");
}

TEST_CASE("log2 oracle search lands in the hand-traced window", "[sizeest]") {
    auto probe = [](std::size_t s) { return std::log2(static_cast<double>(s)); };
    const double target = std::log2(1024.0);
    for (std::size_t s_init : {100, 333, 1000, 3000, 77000}) {
        auto est = estimate_size_with_probe(target, probe, oracle_cfg(s_init, 0.4));
        REQUIRE(est.size >= 800);
        REQUIRE(est.size <= 1300);
    }
}

TEST_CASE("oscillating walks resolve to the geometric mean of the pair", "[sizeest]") {
    // norm jumps across the band between 750 and 1500
    auto probe = [](std::size_t s) { return std::log2(static_cast<double>(s)); };
    auto est = estimate_size_with_probe(std::log2(1024.0), probe, oracle_cfg(3000, 0.4));
    REQUIRE(est.oscillation_fallback);
    REQUIRE(est.size == 1061);  // round(sqrt(750 * 1500))
}

TEST_CASE("unreachable target raises a search error with the best candidate", "[sizeest]") {
    auto probe = [](std::size_t s) { return 10.0 + std::log2(static_cast<double>(s)); };
    auto cfg = oracle_cfg(100, 0.1);
    cfg.s_min = 64;
    cfg.s_max = 4096;
    // target far below probe(s_min): the walk pins at s_min and fails
    try {
        estimate_size_with_probe(1.0, probe, cfg);
        FAIL("expected SearchError");
    } catch (const SearchError& e) {
        REQUIRE(e.best_size == 64);
    }
}

TEST_CASE("monotone probes terminate within the doubling bound", "[sizeest]") {
    RngStream rng(5, 0);
    for (int trial = 0; trial < 200; ++trial) {
        auto stream = rng.child(trial);
        const double scale = stream.uniform(0.2, 3.0);
        const double power = stream.uniform(0.3, 1.2);
        auto probe = [&](std::size_t s) {
            return scale * std::pow(static_cast<double>(s), power);
        };
        SizeSearchConfig cfg;
        cfg.s_min = 32;
        cfg.s_max = 32768;
        cfg.s_init = 32ull << stream.uniform_int(11);
        const std::size_t true_size = 32 + stream.uniform_int(32000);
        const double target = probe(true_size);
        cfg.tolerance = 0.05 * target;
        const std::size_t bound =
            static_cast<std::size_t>(std::ceil(std::log2(32768.0 / 32.0))) + 2;
        auto est = estimate_size_with_probe(target, probe, cfg);
        REQUIRE(est.trace.size() <= bound);
    }
}

TEST_CASE("doubling the tolerance never increases the iteration count", "[sizeest]") {
    RngStream rng(6, 0);
    for (int trial = 0; trial < 100; ++trial) {
        auto stream = rng.child(trial);
        const double scale = stream.uniform(0.5, 2.0);
        auto probe = [&](std::size_t s) { return scale * std::log2(static_cast<double>(s)); };
        SizeSearchConfig cfg;
        cfg.s_min = 32;
        cfg.s_max = 65536;
        cfg.s_init = 32ull << stream.uniform_int(12);
        const double target = probe(64 + stream.uniform_int(60000));
        cfg.tolerance = 0.02 * target * stream.uniform(0.5, 2.0);

        auto narrow = estimate_size_with_probe(target, probe, cfg);
        SizeSearchConfig wide = cfg;
        wide.tolerance = 2.0 * cfg.tolerance;
        auto relaxed = estimate_size_with_probe(target, probe, wide);
        REQUIRE(relaxed.trace.size() <= narrow.trace.size());
    }
}

TEST_CASE("probe_norm averages its single-draw repeats exactly", "[sizeest]") {
    auto pool = gen_synthetic(4, 3, 200, 3.0, RngStream(7, 0));
    auto global = make_mlp({3, 5, 4}, RngStream(8, 0));
    SizeSearchConfig cfg;
    cfg.probe_rounds = 2;
    cfg.probe_repeats = 3;
    RngStream rng(9, 0);
    double mean3 = probe_norm(global, 64, pool, cfg, rng);
    double manual = 0.0;
    for (std::size_t rep = 0; rep < 3; ++rep)
        manual += probe_norm_once(global, 64, pool, cfg, rng.child("rep", rep));
    manual /= 3.0;
    REQUIRE(mean3 == manual);
}

TEST_CASE("probes are deterministic per seed", "[sizeest]") {
    auto pool = gen_synthetic(4, 3, 200, 3.0, RngStream(7, 0));
    auto global = make_mlp({3, 5, 4}, RngStream(8, 0));
    SizeSearchConfig cfg;
    cfg.probe_rounds = 1;
    cfg.probe_repeats = 2;
    REQUIRE(probe_norm(global, 96, pool, cfg, RngStream(10, 0)) ==
            probe_norm(global, 96, pool, cfg, RngStream(10, 0)));
}

TEST_CASE("larger datasets push the early update norm up", "[sizeest][slow]") {
    auto pool = gen_synthetic(4, 8, 600, 3.0, RngStream(11, 0));
    SizeSearchConfig cfg;
    cfg.probe_rounds = 2;
    cfg.probe_repeats = 2;
    std::size_t wins = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto global = make_mlp({8, 8, 4}, RngStream(seed, 1));
        double small = probe_norm(global, 128, pool, cfg, RngStream(seed, 2));
        double large = probe_norm(global, 1280, pool, cfg, RngStream(seed, 3));
        if (large > small) wins++;
    }
    REQUIRE(wins >= 8);
}
