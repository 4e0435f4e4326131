#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "lipembed/funcspace.hpp"

using namespace lipembed;
using namespace lipembed::funcspace;
using Catch::Approx;

namespace {

// Random one-Lipschitz line function: cumulative increments within one step,
// clipped into [0,1].  Clipping preserves the Lipschitz bound.
LineFn random_line(std::mt19937_64& rng, double half_width, std::size_t half_intervals) {
    std::vector<double> v(2 * half_intervals + 1);
    double step = half_width / static_cast<double>(half_intervals);
    v[0] = uniform01(rng);
    for (std::size_t i = 1; i < v.size(); ++i)
        v[i] = std::clamp(v[i - 1] + uniform_in(rng, -step, step), 0.0, 1.0);
    return LineFn(half_width, std::move(v));
}

WindowFn random_window(std::mt19937_64& rng, double a, std::size_t intervals) {
    std::vector<double> v(intervals + 1);
    double step = a / static_cast<double>(intervals);
    v[0] = uniform01(rng);
    for (std::size_t i = 1; i < v.size(); ++i)
        v[i] = std::clamp(v[i - 1] + uniform_in(rng, -step, step), 0.0, 1.0);
    return WindowFn(a, std::move(v));
}

}  // namespace

TEST_CASE("cr_dist of the constant 0 and constant 1 sums the geometric series") {
    auto zero = ConstFn(0.0).as_line(32.0, 640);
    auto one = ConstFn(1.0).as_line(32.0, 640);
    double d = cr_dist(zero, one, 30);
    CHECK(std::abs(d - 1.0) <= std::pow(2.0, -30));
    CHECK(d <= 1.0);
}

TEST_CASE("cr_dist of constants at levels 0 and 0.5") {
    auto zero = ConstFn(0.0).as_line(32.0, 640);
    auto half = ConstFn(0.5).as_line(32.0, 640);
    CHECK(std::abs(cr_dist(zero, half, 30) - 0.5) <= std::pow(2.0, -30));
}

TEST_CASE("cr_dist truncation error is bounded by the dropped tail") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 100; ++rep) {
        auto f = random_line(rng, 42.0, 840);
        auto g = random_line(rng, 42.0, 840);
        double d20 = cr_dist(f, g, 20);
        double d40 = cr_dist(f, g, 40);
        CHECK(d40 >= d20 - 1e-15);
        CHECK(d40 - d20 <= std::pow(2.0, -20));
    }
}

TEST_CASE("cr_dist is a metric on sampled functions") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        auto f = random_line(rng, 12.0, 240);
        auto g = random_line(rng, 12.0, 240);
        auto h = random_line(rng, 12.0, 240);
        double fg = cr_dist(f, g, 10);
        double gf = cr_dist(g, f, 10);
        CHECK(fg == Approx(gf).margin(1e-15));
        CHECK(cr_dist(f, f, 10) == 0.0);
        CHECK(fg <= cr_dist(f, h, 10) + cr_dist(h, g, 10) + 1e-12);
    }
}

TEST_CASE("cr_dist rejects mismatched grids and exhausted windows") {
    auto f = ConstFn(0.2).as_line(8.0, 160);
    auto g = ConstFn(0.2).as_line(8.0, 80);
    CHECK_THROWS_AS(cr_dist(f, g, 4), config_error);
    CHECK_THROWS_AS(cr_dist(f, f, 9), lipembed::domain_error);
    auto shifted = translate(f, 1.5);  // valid half width now 6.5
    CHECK_THROWS_AS(cr_dist(shifted, shifted, 7), lipembed::domain_error);
}

TEST_CASE("translate matches the closed form on a sawtooth") {
    auto saw = LineFn::from_samples(2.0, 200, [](double t) { return std::min(std::abs(t), 1.0); });
    double s = 0.25;
    auto moved = translate(saw, s);
    CHECK(moved.valid_half_width() == Approx(1.75));
    for (std::size_t i = 0; i < moved.size(); ++i) {
        double t = moved.node_time(i);
        if (std::abs(t) > moved.valid_half_width()) continue;
        CHECK(moved.values()[i] == Approx(std::min(std::abs(t + s), 1.0)).margin(1e-9));
    }
}

TEST_CASE("translate composes exactly on grid multiples and within one step otherwise") {
    std::mt19937_64 rng(3);
    auto f = random_line(rng, 8.0, 160);  // step 0.05
    auto ab = translate(translate(f, 0.25), 0.60);
    auto once = translate(f, 0.85);
    CHECK(dist_sup(ab, once) <= 1e-12);

    auto ab2 = translate(translate(f, 0.13), 0.29);
    auto once2 = translate(f, 0.42);
    CHECK(dist_sup(ab2, once2) <= f.step());
}

TEST_CASE("translate keeps the Lipschitz certificate") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        auto f = random_line(rng, 6.0, 120);
        auto g = translate(f, uniform_in(rng, -2.0, 2.0));
        CHECK(lip_constant(g) <= 1.0 + 1e-9);
    }
}

TEST_CASE("translate exhausting the window fails loudly") {
    auto f = ConstFn(0.7).as_line(4.0, 80);
    CHECK_THROWS_AS(translate(f, 4.5), lipembed::domain_error);
}

TEST_CASE("lip_constant on flat and sawtooth profiles") {
    CHECK(lip_constant(ConstFn(0.4).as_window(1.0, 100)) == 0.0);
    auto saw = LineFn::from_samples(2.0, 100, [](double t) { return std::min(std::abs(t), 1.0); });
    CHECK(lip_constant(saw) == Approx(1.0));
}

TEST_CASE("oscillation and sup distance basics") {
    auto flat = ConstFn(0.3).as_window(1.0, 50);
    CHECK(oscillation(flat) == 0.0);
    auto ramp = WindowFn::from_samples(1.0, 50, [](double t) { return 0.2 + 0.5 * t; });
    CHECK(oscillation(ramp) == Approx(0.5));
    CHECK(dist_sup(flat, ramp) == Approx(0.4));
    auto other_grid = ConstFn(0.3).as_window(1.0, 60);
    CHECK_THROWS_AS(dist_sup(flat, other_grid), config_error);
}

TEST_CASE("convex_mix interpolates values and Lipschitz constants") {
    std::mt19937_64 rng(9);
    auto f = random_window(rng, 1.0, 100);
    auto g = random_window(rng, 1.0, 100);
    double lambda = 0.3;
    auto mix = convex_mix(f, g, lambda);
    CHECK(dist_sup(mix, f) == Approx(lambda * dist_sup(f, g)).margin(1e-12));
    CHECK(lip_constant(mix) <=
          (1.0 - lambda) * lip_constant(f) + lambda * lip_constant(g) + 1e-12);
    CHECK_THROWS_AS(convex_mix(f, g, 1.5), config_error);
}

TEST_CASE("window validation rejects range and slope violations") {
    CHECK_THROWS_AS(WindowFn(1.0, {0.0, 1.2, 0.5, 0.5, 0.5}), integrity_error);
    CHECK_THROWS_AS(WindowFn(1.0, {0.0, 0.9, 0.5, 0.5, 0.5}), integrity_error);
    CHECK_NOTHROW(WindowFn(1.0, {0.0, 0.25, 0.5, 0.5, 0.5}));
    CHECK_THROWS_AS(LineFn(1.0, {0.0, 0.5, 0.5, 0.5}), config_error);  // even count
}

TEST_CASE("quantized net covers random Lipschitz samples within eta") {
    double a = 1.0, eta = 0.5;
    auto net = quantized_net(a, eta);
    REQUIRE(!net.empty());

    std::mt19937_64 rng(42);
    std::size_t steps = net.front().size() - 1;
    for (int rep = 0; rep < 1000; ++rep) {
        auto sample = random_window(rng, a, steps);
        auto member = quantize_to_net(sample, eta);
        CHECK(dist_sup(sample, member) <= eta);
        bool found = false;
        for (const auto& cand : net) {
            if (dist_sup(cand, member) <= 1e-12) {
                found = true;
                break;
            }
        }
        CHECK(found);
    }
}
