#include <catch2/catch_amalgamated.hpp>

#include "flinfer/rng.hpp"
#include "flinfer/tensor.hpp"

using namespace flinfer;

TEST_CASE("grad_l2_norm on hand values", "[tensor]") {
    auto layout = ParamLayout::create({{"w", {2}}});
    REQUIRE(grad_l2_norm(ParameterVector(layout, {3.0, 4.0})) == 5.0);
    REQUIRE(grad_l2_norm(ParameterVector(layout, {0.0, 0.0})) == 0.0);
    auto layout4 = ParamLayout::create({{"w", {4}}});
    REQUIRE(grad_l2_norm(ParameterVector(layout4, {1.0, 1.0, 1.0, 1.0})) == 2.0);
}

TEST_CASE("flatten round-trips unflatten exactly", "[tensor]") {
    auto layout = ParamLayout::create({{"W0", {3, 4}}, {"b0", {4}}, {"W1", {4, 2}}});
    RngStream rng(11, 0);
    ParameterVector pv(layout);
    for (auto& v : pv.values) v = rng.normal();
    auto parts = pv.unflatten();
    ParameterVector back = ParameterVector::flatten(layout, parts);
    REQUIRE(back.values == pv.values);
}

TEST_CASE("mismatched layouts are rejected", "[tensor]") {
    auto a = ParameterVector(ParamLayout::create({{"w", {2}}}));
    auto b = ParameterVector(ParamLayout::create({{"w", {3}}}));
    REQUIRE_THROWS_AS(a - b, ShapeError);
}

TEST_CASE("layout hash tracks names and shapes", "[tensor]") {
    auto a = ParamLayout::create({{"w", {2, 3}}, {"b", {3}}});
    auto b = ParamLayout::create({{"w", {2, 3}}, {"b", {3}}});
    auto c = ParamLayout::create({{"w", {3, 2}}, {"b", {3}}});
    REQUIRE(a->hash() == b->hash());
    REQUIRE(a->hash() != c->hash());
}

TEST_CASE("tensor shape constructor validates length", "[tensor]") {
    REQUIRE_THROWS_AS(Tensor2(2, 2, {1.0, 2.0, 3.0}), ShapeError);
}
