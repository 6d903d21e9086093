#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "flinfer/dataset.hpp"
#include "flinfer/flsim.hpp"

using namespace flinfer;

namespace {

ClientState make_client(std::size_t id, const Dataset& pool, std::size_t size, std::uint64_t seed,
                        double lr = 0.05) {
    ClientState c;
    c.id = id;
    c.lr = lr;
    c.batch_size = 16;
    auto [ds, dist] = partition_iid(pool, size, 0.0, RngStream(seed, 0));
    c.dataset = std::move(ds);
    return c;
}

ParameterVector vec(std::initializer_list<double> values) {
    auto layout = ParamLayout::create({{"w", {values.size()}}});
    return ParameterVector(layout, values);
}

UploadRecord upload_of(ParameterVector params) {
    UploadRecord u;
    u.params = std::move(params);
    return u;
}

}  // namespace

TEST_CASE("zero local epochs leave the upload at the broadcast", "[flsim]") {
    auto pool = gen_synthetic(4, 3, 40, 3.0, RngStream(1, 0));
    auto client = make_client(0, pool, 40, 2);
    client.local_epochs = 0;
    auto global = make_mlp({3, 5, 4}, RngStream(3, 0));
    auto up = local_train(global, client, RngStream(4, 0));
    REQUIRE(up.grad_norm == 0.0);
    for (double v : up.grad_update.values) REQUIRE(v == 0.0);
    REQUIRE(up.params.values == global.params.values);
}

TEST_CASE("zero learning rate leaves params unchanged", "[flsim]") {
    auto pool = gen_synthetic(4, 3, 40, 3.0, RngStream(1, 0));
    auto client = make_client(0, pool, 40, 2, 0.0);
    auto global = make_mlp({3, 5, 4}, RngStream(3, 0));
    auto up = local_train(global, client, RngStream(4, 0));
    REQUIRE(up.params.values == global.params.values);
}

TEST_CASE("one sgd step on a single sample descends", "[flsim]") {
    auto pool = gen_synthetic(4, 3, 40, 3.0, RngStream(5, 0));
    ClientState client;
    client.id = 0;
    client.dataset = pool.subset({0});
    client.batch_size = 1;
    client.lr = 1e-2;
    auto global = make_mlp({3, 5, 4}, RngStream(6, 0));
    Tensor2 sample(1, 3);
    auto src = client.dataset.features.row(0);
    std::copy(src.begin(), src.end(), sample.row(0).begin());
    std::vector<std::size_t> label = {client.dataset.labels[0]};

    double before = loss_and_grad(global, sample, label).first;
    auto up = local_train(global, client, RngStream(7, 0));
    MlpModel after_model = global;
    after_model.params = up.params;
    double after = loss_and_grad(after_model, sample, label).first;
    REQUIRE(after < before);
}

TEST_CASE("fedavg weighted-mean identities", "[flsim]") {
    auto uploads = std::vector<UploadRecord>{upload_of(vec({0.0})), upload_of(vec({4.0}))};
    auto out = fedavg(uploads, {1, 3});
    REQUIRE(out.values == std::vector<double>{3.0});

    auto pair = std::vector<UploadRecord>{upload_of(vec({1.0, 3.0})), upload_of(vec({3.0, 5.0}))};
    REQUIRE(fedavg(pair, {10, 10}).values == std::vector<double>{2.0, 4.0});

    auto same = std::vector<UploadRecord>{upload_of(vec({0.5, -2.0})), upload_of(vec({0.5, -2.0})),
                                          upload_of(vec({0.5, -2.0}))};
    REQUIRE(fedavg(same, {7, 1, 4}).values == std::vector<double>{0.5, -2.0});

    REQUIRE_THROWS_AS(fedavg({}, {}), ValidationError);
    REQUIRE_THROWS_AS(fedavg(pair, {0, 0}), ValidationError);
}

TEST_CASE("fedavg output is a per-coordinate convex combination", "[flsim]") {
    RngStream rng(8, 0);
    auto layout = ParamLayout::create({{"w", {6}}});
    std::vector<UploadRecord> uploads;
    std::vector<std::size_t> sizes;
    for (int k = 0; k < 5; ++k) {
        ParameterVector pv(layout);
        for (auto& v : pv.values) v = rng.normal();
        uploads.push_back(upload_of(pv));
        sizes.push_back(1 + rng.uniform_int(9));
    }
    auto out = fedavg(uploads, sizes);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        double lo = 1e300, hi = -1e300;
        for (const auto& u : uploads) {
            lo = std::min(lo, u.params.values[i]);
            hi = std::max(hi, u.params.values[i]);
        }
        REQUIRE(out.values[i] >= lo - 1e-12);
        REQUIRE(out.values[i] <= hi + 1e-12);
    }
}

TEST_CASE("ldp sigma and clipping behave as specified", "[flsim]") {
    LdpConfig cfg{1.0, 1e-5, 1.0};
    REQUIRE(ldp_noise_sigma(cfg) == Catch::Approx(4.845).margin(0.005));

    // clipping projects exactly onto the ball
    auto update = vec({6.0, 8.0});  // norm 10
    LdpConfig no_noise{1e12, 1e-5, 1.0};
    auto clipped = apply_ldp(update, no_noise, RngStream(9, 0));
    REQUIRE(grad_l2_norm(clipped) == Catch::Approx(1.0).margin(1e-9));
    // epsilon -> infinity degenerates to the projection
    REQUIRE(clipped.values[0] == Catch::Approx(0.6).margin(1e-9));
    REQUIRE(clipped.values[1] == Catch::Approx(0.8).margin(1e-9));

    // the input vector is left untouched
    REQUIRE(update.values == std::vector<double>{6.0, 8.0});
}

TEST_CASE("one client federation equals centralized training", "[flsim]") {
    auto pool = gen_synthetic(4, 3, 60, 3.0, RngStream(10, 0));
    FederationConfig cfg;
    cfg.initial_model = make_mlp({3, 6, 4}, RngStream(11, 0));
    cfg.clients = {make_client(0, pool, 48, 12)};
    cfg.rounds = 4;
    cfg.rng = RngStream(13, 0);
    auto history = run_federation(cfg);

    MlpModel model = cfg.initial_model;
    for (std::size_t round = 1; round <= 4; ++round) {
        auto stream = cfg.rng.child("client", std::size_t(0)).child("round", round);
        auto up = local_train(model, cfg.clients[0], stream.child("train"));
        model.params = up.params;
        REQUIRE(history.rounds[round - 1].global_after.values == model.params.values);
    }
}

TEST_CASE("identical clients average to the single-client trajectory", "[flsim]") {
    auto pool = gen_synthetic(4, 3, 60, 3.0, RngStream(10, 0));
    FederationConfig one;
    one.initial_model = make_mlp({3, 6, 4}, RngStream(11, 0));
    one.clients = {make_client(0, pool, 48, 12)};
    one.rounds = 3;
    one.rng = RngStream(13, 0);
    auto solo = run_federation(one);

    FederationConfig two = one;
    auto clone = one.clients[0];
    clone.id = 0;  // same id -> same rng stream -> identical local training
    two.clients = {one.clients[0], clone};
    auto duo = run_federation(two);

    for (std::size_t t = 0; t < 3; ++t)
        REQUIRE(duo.rounds[t].global_after.values == solo.rounds[t].global_after.values);
}

TEST_CASE("federation runs are bit-identical", "[flsim]") {
    auto pool = gen_synthetic(3, 2, 80, 3.0, RngStream(14, 0));
    FederationConfig cfg;
    cfg.initial_model = make_mlp({2, 5, 3}, RngStream(15, 0));
    cfg.clients = {make_client(0, pool, 30, 16), make_client(1, pool, 45, 17)};
    cfg.rounds = 3;
    cfg.ldp = LdpConfig{5.0, 1e-5, 1.0};
    cfg.rng = RngStream(18, 0);
    auto a = run_federation(cfg);
    auto b = run_federation(cfg);
    for (std::size_t t = 0; t < 3; ++t) {
        REQUIRE(a.rounds[t].global_after.values == b.rounds[t].global_after.values);
        for (std::size_t k = 0; k < a.rounds[t].uploads.size(); ++k)
            REQUIRE(a.rounds[t].uploads[k].grad_norm == b.rounds[t].uploads[k].grad_norm);
    }
}

TEST_CASE("observers receive copies; mutating them changes nothing", "[flsim]") {
    auto pool = gen_synthetic(3, 2, 80, 3.0, RngStream(14, 0));
    FederationConfig cfg;
    cfg.initial_model = make_mlp({2, 5, 3}, RngStream(15, 0));
    cfg.clients = {make_client(0, pool, 30, 16), make_client(1, pool, 45, 17)};
    cfg.rounds = 3;
    cfg.rng = RngStream(18, 0);

    auto clean = run_federation(cfg);
    FederationObserver vandal = [](std::size_t, std::vector<UploadRecord> uploads,
                                   ParameterVector global) {
        for (auto& u : uploads)
            for (auto& v : u.params.values) v = 1e9;
        for (auto& v : global.values) v = -1e9;
    };
    auto vandalized = run_federation(cfg, {vandal});
    for (std::size_t t = 0; t < 3; ++t)
        REQUIRE(clean.rounds[t].global_after.values == vandalized.rounds[t].global_after.values);
}

TEST_CASE("ldp noises the upload, not the client's local training", "[flsim]") {
    auto pool = gen_synthetic(3, 2, 80, 3.0, RngStream(19, 0));
    auto client = make_client(0, pool, 30, 20);
    auto global = make_mlp({2, 4, 3}, RngStream(21, 0));

    // The raw local_train result is independent of any LDP wrapping done by
    // the federation loop.
    auto raw_a = local_train(global, client, RngStream(22, 0));
    FederationConfig cfg;
    cfg.initial_model = global;
    cfg.clients = {client};
    cfg.rounds = 1;
    cfg.ldp = LdpConfig{1.0, 1e-5, 1.0};
    cfg.rng = RngStream(23, 0);
    auto history = run_federation(cfg);
    auto raw_b = local_train(global, client, RngStream(22, 0));
    REQUIRE(raw_a.params.values == raw_b.params.values);
    // and the noised upload differs from the raw one
    REQUIRE(history.rounds[0].uploads[0].params.values != raw_a.params.values);
}
