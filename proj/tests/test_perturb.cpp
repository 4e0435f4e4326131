#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "lipembed/flow.hpp"
#include "lipembed/perturb.hpp"

using namespace lipembed;
using flow::State;

namespace {

std::vector<State> interval_points(double mesh) {
    std::vector<State> pts;
    for (double x = 0.0; x <= 1.0 + 1e-12; x += mesh) pts.push_back(State{std::min(x, 1.0)});
    return pts;
}

}  // namespace

TEST_CASE("cover halves its radius until the image caps hold") {
    auto sys = flow::make_logistic_flow();
    auto pts = interval_points(0.05);
    // window value is the state itself, so image diameter equals ball diameter
    perturb::FEval f = [&](std::size_t i, double) { return pts[i][0]; };

    auto cov = perturb::build_cover(sys, pts, f, 0.25, 0.05, 0.0, 1e-6);
    REQUIRE(cov.radius <= 0.0625 + 1e-12);
    for (std::size_t m = 0; m < cov.size(); ++m)
        for (std::size_t l = m + 1; l < cov.size(); ++l)
            for (std::size_t i = 0; i < pts.size(); ++i)
                for (std::size_t j = 0; j < pts.size(); ++j) {
                    if (sys.metric(pts[i], cov.center_states[m]) > cov.radius) continue;
                    if (sys.metric(pts[j], cov.center_states[m]) > cov.radius) continue;
                    CHECK(std::abs(pts[i][0] - pts[j][0]) <= 0.05 + 1e-12);
                }

    auto w = perturb::cover_weights(sys, cov, State{0.513});
    double total = 0.0;
    for (double v : w) total += v;
    CHECK(std::abs(total - 1.0) < 1e-12);
    CHECK_THROWS_AS(perturb::cover_weights(sys, cov, State{5.0}), lipembed::integrity_error);
}

TEST_CASE("avoidance plan on a constant input meets every claim") {
    auto sys = flow::make_logistic_flow();
    auto pts = interval_points(0.05);
    perturb::FEval f = [](std::size_t, double) { return 0.5; };

    auto plan = perturb::make_avoid_plan(sys, pts, f, 0.25, 0.1, 0.5, 2024);
    CHECK(plan.b < 0.1 / 4.0);
    CHECK(plan.Delta < 0.1 / 4.0);
    CHECK(plan.N > plan.cover.size());
    CHECK(plan.nodes.front() == plan.b);
    CHECK(plan.nodes.back() == plan.c);
    CHECK(std::abs((plan.a - plan.c) - plan.b) < 1e-15);

    auto rep = perturb::check_claims(sys, plan, pts, f);
    INFO(rep.why);
    CHECK(rep.pass);
    CHECK(rep.endpoints_exact);
    CHECK(rep.max_sup_diff < 0.1);
    CHECK(rep.max_node_diff < 0.05);
    CHECK(rep.max_slope <= 1.0 + 1e-9);
    CHECK(rep.min_node_osc > 0.0);
}

TEST_CASE("avoidance plan tolerates a sloped input within tau") {
    auto sys = flow::make_logistic_flow();
    auto pts = interval_points(0.1);
    perturb::FEval f = [&](std::size_t i, double t) { return 0.2 + 0.3 * pts[i][0] + 0.4 * t; };

    auto plan = perturb::make_avoid_plan(sys, pts, f, 0.25, 0.15, 0.5, 7);
    auto rep = perturb::check_claims(sys, plan, pts, f);
    INFO(rep.why);
    CHECK(rep.pass);
    CHECK(rep.min_node_osc > 0.0);
}

TEST_CASE("window slope above tau is rejected") {
    auto sys = flow::make_logistic_flow();
    auto pts = interval_points(0.1);
    perturb::FEval steep = [](std::size_t, double t) { return 0.99 * t; };
    CHECK_THROWS_AS(perturb::make_avoid_plan(sys, pts, steep, 0.25, 0.1, 0.5, 1),
                    lipembed::precondition_error);
    CHECK_THROWS_AS(perturb::make_separating_plan(sys, pts, steep, 0.25, 0.1, 0.5, 1),
                    lipembed::precondition_error);
}

TEST_CASE("separating plan satisfies the grid constraints and the scan") {
    auto sys = flow::make_logistic_flow();
    auto pts = interval_points(0.05);
    perturb::FEval f = [&](std::size_t i, double t) { return 0.3 + 0.2 * pts[i][0] + 0.3 * t; };

    auto plan = perturb::make_separating_plan(sys, pts, f, 0.25, 0.2, 0.5, 99);
    CHECK(plan.separating);
    CHECK(plan.b < std::min(0.2 / 4.0, 0.25 / 4.0));
    CHECK(plan.L >= 2 * plan.cover.size());
    CHECK(plan.N > plan.L);
    CHECK(plan.Delta < 0.05);

    auto rep = perturb::check_claims(sys, plan, pts, f);
    INFO(rep.why);
    CHECK(rep.pass);

    auto scan = perturb::scan_shift_matches(sys, plan, pts, f);
    CHECK(scan.pass);
    for (const auto& m : scan.matches) {
        CHECK(m.eps <= plan.Delta + 1e-12);
        CHECK(m.dist < 0.2);
    }
}

TEST_CASE("duplicated state yields only the trivial match") {
    auto sys = flow::make_logistic_flow();
    auto pts = interval_points(0.1);
    pts.push_back(pts[4]);  // exact duplicate
    perturb::FEval f = [&](std::size_t i, double t) { return 0.3 + 0.2 * pts[i][0] + 0.3 * t; };

    auto plan = perturb::make_separating_plan(sys, pts, f, 0.25, 0.2, 0.5, 5);
    auto scan = perturb::scan_shift_matches(sys, plan, pts, f);
    CHECK(scan.pass);
    REQUIRE_FALSE(scan.matches.empty());
    for (const auto& m : scan.matches) {
        CHECK(m.eps == 0.0);
        CHECK(m.dist == 0.0);
    }
}

TEST_CASE("a flattened family is caught by the scan") {
    auto sys = flow::make_logistic_flow();
    auto pts = interval_points(0.1);
    perturb::FEval f = [](std::size_t, double) { return 0.5; };

    auto plan = perturb::make_separating_plan(sys, pts, f, 0.25, 0.2, 0.5, 11);
    for (auto& u : plan.family.vectors) std::fill(u.begin(), u.end(), 0.5);
    auto scan = perturb::scan_shift_matches(sys, plan, pts, f);
    CHECK_FALSE(scan.pass);
}

TEST_CASE("slope integrity guard fires on a tampered family") {
    auto sys = flow::make_logistic_flow();
    auto pts = interval_points(0.1);
    perturb::FEval f = [](std::size_t, double) { return 0.5; };

    auto plan = perturb::make_avoid_plan(sys, pts, f, 0.25, 0.1, 0.5, 3);
    for (auto& u : plan.family.vectors)
        for (std::size_t n = 0; n < u.size(); ++n) u[n] = (n % 2 == 0) ? 0.0 : 1.0;
    CHECK_THROWS_AS(perturb::assemble_g(sys, plan, pts[0], 0.5, 0.5), lipembed::integrity_error);
}

TEST_CASE("plans are deterministic in the seed") {
    auto sys = flow::make_logistic_flow();
    auto pts = interval_points(0.1);
    perturb::FEval f = [](std::size_t, double) { return 0.5; };

    auto p1 = perturb::make_avoid_plan(sys, pts, f, 0.25, 0.1, 0.5, 42);
    auto p2 = perturb::make_avoid_plan(sys, pts, f, 0.25, 0.1, 0.5, 42);
    auto p3 = perturb::make_avoid_plan(sys, pts, f, 0.25, 0.1, 0.5, 43);
    REQUIRE(p1.family.vectors == p2.family.vectors);
    CHECK(p1.family.vectors != p3.family.vectors);
}
