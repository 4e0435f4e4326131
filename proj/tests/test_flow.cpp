#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "lipembed/flow.hpp"

using namespace lipembed;
using namespace lipembed::flow;
using Catch::Approx;

TEST_CASE("rotation flow advances and wraps the angle") {
    auto sys = make_rotation_flow();
    CHECK(evolve(sys, {0.0}, std::numbers::pi / 2)[0] == Approx(std::numbers::pi / 2));
    CHECK(evolve(sys, {6.0}, 1.0)[0] == Approx(7.0 - 2.0 * std::numbers::pi));
    CHECK(evolve(sys, {1.0}, -3.0)[0] == Approx(2.0 * std::numbers::pi - 2.0));
}

TEST_CASE("logistic closed form hits the sigmoid value and RK4 reproduces it") {
    auto closed = make_logistic_flow(true);
    double expected = 1.0 / (1.0 + std::exp(-1.0));  // 0.7310585786300049
    CHECK(evolve(closed, {0.5}, 1.0)[0] == Approx(expected).margin(1e-14));

    auto rk4 = make_logistic_flow(false);
    CHECK(std::abs(evolve(rk4, {0.5}, 1.0)[0] - expected) <= 1e-8);

    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 25; ++rep) {
        double x = uniform_in(rng, 0.05, 0.95);
        double t = uniform_in(rng, -4.0, 4.0);
        CHECK(std::abs(evolve(rk4, {x}, t)[0] - evolve(closed, {x}, t)[0]) <= 1e-7);
    }
}

TEST_CASE("logistic endpoints are exactly stationary") {
    auto sys = make_logistic_flow(true);
    CHECK(evolve(sys, {0.0}, 5.0)[0] == 0.0);
    CHECK(evolve(sys, {1.0}, -5.0)[0] == 1.0);
}

TEST_CASE("group law holds within ten times the integrator tolerance") {
    std::mt19937_64 rng(31);
    auto check_system = [&](const FlowSystem& sys, auto random_state, double bound) {
        for (int rep = 0; rep < 100; ++rep) {
            State x = random_state(rng);
            double s = uniform_in(rng, -4.0, 4.0);
            double t = uniform_in(rng, -4.0, 4.0);
            State lhs = evolve(sys, x, s + t);
            State rhs = evolve(sys, evolve(sys, x, t), s);
            CHECK(sys.metric(lhs, rhs) <= bound);
        }
    };
    check_system(make_rotation_flow(), [](std::mt19937_64& r) {
        return State{uniform_in(r, 0.0, 6.28)};
    }, 1e-12);
    check_system(make_torus_flow(), [](std::mt19937_64& r) {
        return State{uniform_in(r, 0.0, 6.28), uniform_in(r, 0.0, 6.28)};
    }, 1e-12);
    check_system(make_northsouth_flow(), [](std::mt19937_64& r) {
        double a = uniform_in(r, -3.1, 3.1);
        return State{std::cos(a), std::sin(a)};
    }, 1e-12);
    auto rk4 = make_logistic_flow(false);
    check_system(rk4, [](std::mt19937_64& r) {
        return State{uniform_in(r, 0.05, 0.95)};
    }, 10.0 * rk4.integrator_tol);
}

TEST_CASE("evolve rejects times beyond the horizon") {
    auto sys = make_rotation_flow();
    CHECK_THROWS_AS(evolve(sys, {0.0}, sys.horizon + 1.0), lipembed::domain_error);
}

TEST_CASE("sample_orbit marches consistently with direct evolution") {
    auto sys = make_logistic_flow(true);
    auto orb = sample_orbit(sys, {0.3}, -2.0, 0.25, 16);
    REQUIRE(orb.states.size() == 17);
    for (std::size_t k = 0; k < orb.states.size(); ++k) {
        double t = orb.time_at(k);
        CHECK(orb.states[k][0] == Approx(evolve(sys, {0.3}, t)[0]).margin(1e-12));
    }
}

TEST_CASE("detect_fixed flags exactly the logistic endpoints") {
    auto sys = make_logistic_flow(true);
    auto net = net_interval(0.0, 1.0, 0.05);
    REQUIRE(net.points.size() == 21);
    auto fs = detect_fixed(sys, net, 1e-6);
    REQUIRE(fs.indices.size() == 2);
    CHECK(fs.indices[0] == 0);
    CHECK(fs.indices[1] == 20);
    CHECK(max_displacement(sys, {0.01}) > 1e-6);
}

TEST_CASE("detect_fixed on rotation finds nothing and on the planar gradient both poles") {
    auto rot = make_rotation_flow();
    CHECK(detect_fixed(rot, net_circle(0.3)).indices.empty());

    auto ns = make_northsouth_flow();
    auto net = net_circle_planar(std::numbers::pi / 8);  // 16 points, includes both poles
    auto fs = detect_fixed(ns, net, 1e-6);
    REQUIRE(fs.points.size() == 2);
    CHECK(fs.points[0][0] == Approx(1.0));
    CHECK(fs.points[1][0] == Approx(-1.0));
}

TEST_CASE("mcshane_extend interpolates the logistic endpoint values") {
    auto sys = make_logistic_flow(true);
    FixedPointEmbedding h;
    h.values = {{{0.0}, 0.0}, {{1.0}, 1.0}};
    CHECK(h.injective(sys));
    CHECK(mcshane_extend(h, sys, {0.5}) == Approx(0.5));
    CHECK(mcshane_extend(h, sys, {0.3}) == Approx(0.3));
    CHECK(mcshane_extend(h, sys, {0.0}) == 0.0);
    CHECK(mcshane_extend(h, sys, {1.0}) == 1.0);

    FixedPointEmbedding clash;
    clash.values = {{{0.0}, 0.4}, {{1.0}, 0.4}};
    CHECK(!clash.injective(sys));
}

TEST_CASE("mcshane_extend with an empty fixed set normalizes the first coordinate") {
    auto sys = make_rotation_flow();
    FixedPointEmbedding h;
    CHECK(mcshane_extend(h, sys, {std::numbers::pi}) == Approx(0.5));
    CHECK(mcshane_extend(h, sys, {0.0}) == 0.0);
}

TEST_CASE("fixed-set distance helper") {
    auto sys = make_logistic_flow(true);
    std::vector<State> fixed{{0.0}, {1.0}};
    CHECK(dist_to_set(sys, fixed, {0.3}) == Approx(0.3));
    CHECK(dist_to_set(sys, {}, {0.3}) == std::numeric_limits<double>::infinity());
}
