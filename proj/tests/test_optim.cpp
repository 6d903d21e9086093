#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "flinfer/optim.hpp"

using namespace flinfer;

namespace {
ParameterVector vec(std::initializer_list<double> values) {
    auto layout = ParamLayout::create({{"w", {values.size()}}});
    return ParameterVector(layout, values);
}
}  // namespace

TEST_CASE("sgd with lr 0 is the identity", "[optim]") {
    auto p = vec({1.0, -2.0, 3.0});
    auto g = vec({5.0, 5.0, 5.0});
    REQUIRE(sgd_step(p, g, 0.0).values == p.values);
}

TEST_CASE("sgd arithmetic example", "[optim]") {
    auto out = sgd_step(vec({1.0, 1.0}), vec({1.0, -1.0}), 0.5);
    REQUIRE(out.values == std::vector<double>{0.5, 1.5});
}

TEST_CASE("two sgd steps with one gradient equal one step at doubled lr", "[optim]") {
    auto p = vec({0.3, -0.7, 2.0});
    auto g = vec({1.5, 0.25, -4.0});
    auto twice = sgd_step(sgd_step(p, g, 0.1), g, 0.1);
    auto once = sgd_step(p, g, 0.2);
    for (std::size_t i = 0; i < p.values.size(); ++i)
        REQUIRE(twice.values[i] == Catch::Approx(once.values[i]).margin(1e-15));
}

TEST_CASE("sgd rejects layout mismatch", "[optim]") {
    auto p = vec({1.0, 2.0});
    auto layout = ParamLayout::create({{"q", {2}}});
    REQUIRE_THROWS_AS(sgd_step(p, ParameterVector(layout), 0.1), ShapeError);
}

TEST_CASE("adam leaves params unchanged on zero gradient at t=1", "[optim]") {
    auto p = vec({1.0, -1.0});
    AdamState state(p.layout);
    auto out = adam_step(state, p, vec({0.0, 0.0}), 0.1);
    REQUIRE(out.values == p.values);
}

TEST_CASE("first adam step is approximately -lr * sign(g)", "[optim]") {
    auto p = vec({0.0, 0.0, 0.0});
    auto g = vec({3.0, -0.02, 800.0});
    AdamState state(p.layout);
    const double lr = 0.05;
    auto out = adam_step(state, p, g, lr);
    // bias correction makes mhat/sqrt(vhat) = sign(g) up to eps
    REQUIRE(out.values[0] == Catch::Approx(-lr).epsilon(1e-6));
    REQUIRE(out.values[1] == Catch::Approx(lr).epsilon(1e-4));
    REQUIRE(out.values[2] == Catch::Approx(-lr).epsilon(1e-6));
}

TEST_CASE("adam is deterministic given state and gradient", "[optim]") {
    auto p = vec({0.5, 0.25});
    auto g = vec({0.1, -0.4});
    AdamState s1(p.layout), s2(p.layout);
    auto a = adam_step(s1, p, g, 0.01);
    auto b = adam_step(s2, p, g, 0.01);
    REQUIRE(a.values == b.values);
    a = adam_step(s1, a, g, 0.01);
    b = adam_step(s2, b, g, 0.01);
    REQUIRE(a.values == b.values);
}
