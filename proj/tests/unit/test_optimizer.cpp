#include <doctest.h>

#include <random>

#include "matsim/errors.hpp"
#include "matsim/optimizer.hpp"

using namespace matsim;

TEST_CASE("zero gradient leaves parameters unchanged") {
    auto state = OptimizerState::for_size(3);
    Vector p(3);
    p << 1, -2, 3;
    const Vector before = p;
    for (int i = 0; i < 5; ++i) optimizer_step(state, p, Vector::Zero(3), 0.1);
    CHECK(p == before);
    CHECK(state.step == 5);
}

TEST_CASE("scalar quadratic converges to the oracle trajectory") {
    auto state = OptimizerState::for_size(1);
    Vector x = Vector::Constant(1, 1.0);
    for (int i = 0; i < 200; ++i) optimizer_step(state, x, 2.0 * x, 0.1);
    CHECK(std::abs(x(0)) < 0.05);
    CHECK(x(0) == doctest::Approx(-2.2115680801914173e-05).epsilon(1e-9));
}

TEST_CASE("max second moment never decreases") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 1.0);
    auto state = OptimizerState::for_size(8);
    Vector p = Vector::Zero(8);
    Vector previous = state.max_second_moment;
    for (int i = 0; i < 100; ++i) {
        Vector grad(8);
        // Shrinking gradients make the raw second moment decay.
        for (auto& v : grad) v = g(rng) * std::pow(0.9, i);
        optimizer_step(state, p, grad, 0.01);
        CHECK((state.max_second_moment.array() >= previous.array()).all());
        CHECK((state.max_second_moment.array() >= state.second_moment.array()).all());
        previous = state.max_second_moment;
    }
}

TEST_CASE("optimizer errors") {
    auto state = OptimizerState::for_size(2);
    Vector p = Vector::Zero(2);
    CHECK_THROWS_AS(optimizer_step(state, p, Vector::Zero(3), 0.1), ValidationError);
    Vector bad = Vector::Zero(2);
    bad(1) = INFINITY;
    CHECK_THROWS_AS(optimizer_step(state, p, bad, 0.1), ComputeError);
}
