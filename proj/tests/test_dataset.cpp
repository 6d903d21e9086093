#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <set>

#include "flinfer/dataset.hpp"

using namespace flinfer;

TEST_CASE("synthetic pool is balanced and reproducible", "[dataset]") {
    auto ds = gen_synthetic(2, 3, 10, 4.0, RngStream(1, 0));
    REQUIRE(ds.size() == 20);
    auto counts = ds.label_counts();
    REQUIRE(counts == std::vector<std::size_t>{10, 10});
    for (double v : ds.features.data) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
    auto again = gen_synthetic(2, 3, 10, 4.0, RngStream(1, 0));
    REQUIRE(again.features.data == ds.features.data);
    REQUIRE(again.labels == ds.labels);
}

TEST_CASE("well-separated clusters are 1-NN learnable", "[dataset]") {
    auto ds = gen_synthetic(2, 2, 400, 10.0, RngStream(7, 0));
    // split: even rows train, odd rows test
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < ds.size(); ++i) (i % 2 == 0 ? train : test).push_back(i);
    std::size_t hits = 0;
    for (std::size_t t : test) {
        double best = 1e300;
        std::size_t best_idx = 0;
        for (std::size_t tr : train) {
            double dist = 0.0;
            for (std::size_t k = 0; k < ds.features.cols; ++k) {
                double diff = ds.features.at(t, k) - ds.features.at(tr, k);
                dist += diff * diff;
            }
            if (dist < best) {
                best = dist;
                best_idx = tr;
            }
        }
        if (ds.labels[best_idx] == ds.labels[t]) hits++;
    }
    REQUIRE(static_cast<double>(hits) / test.size() >= 0.99);
}

TEST_CASE("iid partition with zero fluctuation is exactly balanced", "[dataset]") {
    auto pool = gen_synthetic(10, 4, 50, 3.0, RngStream(2, 0));
    auto [ds, dist] = partition_iid(pool, 100, 0.0, RngStream(3, 0));
    auto counts = ds.label_counts();
    for (std::size_t c : counts) REQUIRE(c == 10);
    double sum = 0.0;
    for (double v : dist.p) sum += v;
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("iid partition respects the fluctuation band", "[dataset]") {
    auto pool = gen_synthetic(10, 4, 50, 3.0, RngStream(2, 0));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto [ds, dist] = partition_iid(pool, 100, 0.1, RngStream(seed, 5));
        for (std::size_t c : ds.label_counts()) {
            REQUIRE(c >= 9);
            REQUIRE(c <= 11);
        }
    }
}

TEST_CASE("partition distribution equals realized frequencies exactly", "[dataset]") {
    auto pool = gen_synthetic(6, 3, 80, 3.0, RngStream(4, 0));
    auto [ds, dist] = partition_dirichlet(pool, 120, 1.0, RngStream(9, 0));
    auto counts = ds.label_counts();
    for (std::size_t c = 0; c < counts.size(); ++c)
        REQUIRE(dist.p[c] == static_cast<double>(counts[c]) / 120.0);
}

TEST_CASE("partitions never duplicate a pool row within one client", "[dataset]") {
    auto pool = gen_synthetic(4, 2, 60, 3.0, RngStream(5, 0));
    auto [ds, dist] = partition_quantity(pool, 50, 2, RngStream(6, 0));
    // identical feature rows in the synthetic pool are unique with prob 1
    std::set<std::vector<double>> rows;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::vector<double> row(ds.features.row(i).begin(), ds.features.row(i).end());
        REQUIRE(rows.insert(row).second);
    }
}

TEST_CASE("quantity partition has exactly c_f supported labels", "[dataset]") {
    auto pool = gen_synthetic(10, 4, 60, 3.0, RngStream(2, 0));
    auto one_hot = partition_quantity(pool, 40, 1, RngStream(10, 0)).second;
    REQUIRE(std::count(one_hot.p.begin(), one_hot.p.end(), 0.0) == 9);
    REQUIRE(*std::max_element(one_hot.p.begin(), one_hot.p.end()) == 1.0);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto dist = partition_quantity(pool, 60, 3, RngStream(seed, 77)).second;
        REQUIRE(std::count(dist.p.begin(), dist.p.end(), 0.0) == 7);
    }

    auto full = partition_quantity(pool, 60, 10, RngStream(11, 0)).second;
    REQUIRE(full.p.size() == 10);
    REQUIRE_THROWS_AS(partition_quantity(pool, 60, 11, RngStream(12, 0)), ValidationError);
}

TEST_CASE("dirichlet coordinate means approach 1/C", "[dataset][slow]") {
    RngStream rng(13, 0);
    const std::size_t C = 10, draws = 10000;
    std::vector<double> mean(C, 0.0);
    for (std::size_t i = 0; i < draws; ++i) {
        auto p = rng.dirichlet(1.0, C);
        for (std::size_t c = 0; c < C; ++c) mean[c] += p[c];
    }
    for (std::size_t c = 0; c < C; ++c) REQUIRE(mean[c] / draws == Catch::Approx(0.1).margin(0.01));
}

TEST_CASE("large alpha concentrates near uniform", "[dataset]") {
    RngStream rng(14, 0);
    for (int i = 0; i < 100; ++i) {
        auto p = rng.dirichlet(1000.0, 10);
        for (double v : p) REQUIRE(std::abs(v - 0.1) < 0.05);
    }
}

TEST_CASE("dirichlet partitions accept the image-benchmark alphas", "[dataset]") {
    auto pool = gen_synthetic(10, 4, 80, 3.0, RngStream(2, 0));
    for (double alpha : {0.5, 1.0, 2.0}) {
        auto [ds, dist] = partition_dirichlet(pool, 100, alpha, RngStream(15, 0));
        REQUIRE(ds.size() == 100);
        dist.validate();
    }
    REQUIRE_THROWS_AS(partition_dirichlet(pool, 100, -1.0, RngStream(16, 0)), ValidationError);
}

TEST_CASE("dirichlet coordinates are exchangeable (KS over marginals)", "[dataset][slow]") {
    // For alpha=1, C=3 every coordinate has the same Beta(1,2) marginal.
    RngStream rng(17, 0);
    const std::size_t draws = 5000;
    std::vector<std::vector<double>> coords(3);
    for (std::size_t i = 0; i < draws; ++i) {
        auto p = rng.dirichlet(1.0, 3);
        for (int c = 0; c < 3; ++c) coords[c].push_back(p[c]);
    }
    for (auto& v : coords) std::sort(v.begin(), v.end());
    auto ks = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double stat = 0.0;
        std::size_t ia = 0, ib = 0;
        while (ia < a.size() && ib < b.size()) {
            if (a[ia] <= b[ib])
                ia++;
            else
                ib++;
            stat = std::max(stat, std::abs(static_cast<double>(ia) / a.size() -
                                           static_cast<double>(ib) / b.size()));
        }
        return stat;
    };
    REQUIRE(ks(coords[0], coords[1]) < 0.05);
    REQUIRE(ks(coords[1], coords[2]) < 0.05);
    REQUIRE(ks(coords[0], coords[2]) < 0.05);
}

TEST_CASE("sample_auxiliary is deterministic per spec and validates size", "[dataset]") {
    auto pool = gen_synthetic(5, 3, 120, 3.0, RngStream(18, 0));
    VirtualClientSpec spec;
    spec.size = 60;
    spec.regime = DirichletRegime{1.0};
    spec.seed = 4242;
    auto a = sample_auxiliary(pool, spec);
    auto b = sample_auxiliary(pool, spec);
    REQUIRE(a.features.data == b.features.data);
    REQUIRE(a.labels == b.labels);
    REQUIRE(a.size() == 60);

    spec.size = 0;
    REQUIRE_THROWS_AS(sample_auxiliary(pool, spec), ValidationError);
    spec.size = 3;  // below class count
    REQUIRE_THROWS_AS(sample_auxiliary(pool, spec), ValidationError);
}

TEST_CASE("per-class counts of a sampled client sum to its size", "[dataset]") {
    auto pool = gen_synthetic(5, 3, 120, 3.0, RngStream(19, 0));
    VirtualClientSpec spec;
    spec.size = 77;
    spec.regime = IidFluctRegime{0.2};
    spec.seed = 99;
    auto ds = sample_auxiliary(pool, spec);
    std::size_t total = 0;
    for (std::size_t c : ds.label_counts()) total += c;
    REQUIRE(total == 77);
}

TEST_CASE("insufficient pool raises a capacity error", "[dataset]") {
    auto pool = gen_synthetic(3, 2, 10, 3.0, RngStream(20, 0));
    REQUIRE_THROWS_AS(partition_iid(pool, 60, 0.0, RngStream(21, 0)), CapacityError);
}
