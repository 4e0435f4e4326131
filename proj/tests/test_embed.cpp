#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "lipembed/embed.hpp"
#include "lipembed/flow.hpp"
#include "lipembed/funcspace.hpp"

using namespace lipembed;
using flow::State;

static constexpr double kPi = 3.14159265358979323846;

static embed::EquivariantMap rotation_base() {
    auto sys = flow::make_rotation_flow();
    return embed::make_bebutov(
        sys, [](const State& x) { return 0.5 * (1.0 + std::cos(x[0])); }, 0.5);
}

static embed::EquivariantMap logistic_const_base() {
    auto sys = flow::make_logistic_flow();
    return embed::make_bebutov(sys, [](const State&) { return 0.5; }, 0.5);
}

TEST_CASE("base map slope stays under the kernel bound") {
    auto map = rotation_base();
    REQUIRE(map.kernel_width == 8.0);
    std::vector<State> states{State{0.0}, State{1.1}, State{2.9}, State{4.4}};
    double lip = embed::map_lipschitz(map, states, 4.0);
    CHECK(lip <= 0.5 + 1e-3);
    CHECK(lip > 0.0);
}

TEST_CASE("base map commutes with the flow at grid shifts") {
    auto map = rotation_base();
    std::vector<State> states{State{0.4}, State{2.2}, State{5.0}};
    double res = embed::equivariance_residual(map, states, 20, 7);
    CHECK(res <= 1e-9);
}

TEST_CASE("fixed states keep their assigned values") {
    auto sys = flow::make_logistic_flow();
    flow::FixedPointEmbedding h;
    h.values = {{State{0.0}, 0.0}, {State{1.0}, 1.0}};
    auto map = embed::make_bebutov(sys, h, 0.5);

    CHECK(embed::fixed_residual(map, h) <= 1e-8);

    // interior states land strictly between the fixed values and drift up
    double lo = map.eval(State{0.3}, 0.0);
    double hi = map.eval(State{0.3}, 3.0);
    CHECK(lo > 0.0);
    CHECK(hi < 1.0);
    CHECK(hi > lo);
}

TEST_CASE("line sampling matches pointwise evaluation at the nodes") {
    auto map = rotation_base();
    auto line = map.eval_line(State{0.7}, 2.0);
    for (double t : {-2.0, -1.37, -0.5, 0.0, 0.61, 1.9})
        CHECK(std::abs(line(t) - map.eval(State{0.7}, t)) <= 1e-12);
}

TEST_CASE("degenerate base maps force a perturbing stage") {
    auto map = logistic_const_base();
    auto net = flow::make_net(map.sys, 0.05);

    embed::StageOpts sopts;
    sopts.seed = 11;
    auto [rec, cert] = embed::densify_avoid_fixed(map, net, State{0.5}, 0.1, 0, sopts);

    REQUIRE(!rec.skipped);
    REQUIRE(rec.delta_used == 0.1);
    REQUIRE(rec.margin_before == 0.0);
    REQUIRE(rec.margin_after > 0.0);
    REQUIRE(map.layers.size() == 1);
    CHECK(cert.kind == "avoid");
    CHECK(cert.margin == rec.margin_after);
    CHECK(!cert.measured_only);

    // the patch leaves the window-start value alone and bends the interior
    const auto& core = map.layers[0].secs[0].S[0];
    CHECK(std::abs(map.eval(core, 0.0) - 0.5) <= 1e-9);
    double mid = map.eval(core, 0.5 * map.layers[0].a);
    CHECK(mid != 0.5);

    // patched map is still one-Lipschitz and equivariant
    std::vector<State> states{core, State{0.35}, State{0.62}};
    CHECK(embed::map_lipschitz(map, states, 4.0) <= 1.0 + 1e-6);
    CHECK(embed::equivariance_residual(map, states, 12, 3) <= 1e-6);

    // line samples agree with pointwise evaluation at the grid nodes (off
    // the nodes the line interpolates across the patch breakpoints)
    auto line = map.eval_line(core, 1.0);
    REQUIRE(map.layers[0].a > 0.02);
    for (double t : {0.0, 0.01, 0.02, -0.4, 0.7})
        CHECK(std::abs(line(t) - map.eval(core, t)) <= 1e-9);
}

TEST_CASE("healthy maps skip their stages with a measured margin") {
    auto map = rotation_base();
    auto net = flow::make_net(map.sys, 0.25);

    embed::Schedule sch;
    sch.anchors = {State{0.7}, State{2.9}};
    sch.pairs = {{State{0.7}, State{2.9}}};

    embed::PipelineOpts opts;
    opts.seed = 5;
    auto rep = embed::run_pipeline(map, net, sch, opts);

    CHECK(rep.perturbed == 0);
    CHECK(rep.skipped == 3);
    CHECK(map.layers.empty());
    CHECK(rep.min_final_margin > 0.0);
    REQUIRE(rep.certs.size() == 3);
    for (const auto& c : rep.certs) {
        CHECK(c.measured_only);
        CHECK(c.delta_used == 0.0);
        CHECK(c.margin > 0.0);
    }
}

TEST_CASE("pipeline perturbs a degenerate map and certifies the result") {
    auto map = logistic_const_base();
    auto net = flow::make_net(map.sys, 0.05);

    embed::Schedule sch;
    sch.anchors = {State{0.5}};

    embed::PipelineOpts opts;
    opts.seed = 19;
    auto rep = embed::run_pipeline(map, net, sch, opts);

    CHECK(rep.perturbed == 1);
    CHECK(rep.skipped == 0);
    REQUIRE(rep.stages.size() == 1);
    CHECK(rep.stages[0].delta_used == 0.1);
    CHECK(rep.min_final_margin > 0.0);
    CHECK(rep.certs[0].margin == rep.min_final_margin);
}

TEST_CASE("identical seeds reproduce the perturbed map bitwise") {
    auto net = flow::make_net(flow::make_logistic_flow(), 0.05);
    embed::Schedule sch;
    sch.anchors = {State{0.5}};
    embed::PipelineOpts opts;
    opts.seed = 23;

    auto m1 = logistic_const_base();
    auto m2 = logistic_const_base();
    embed::run_pipeline(m1, net, sch, opts);
    embed::run_pipeline(m2, net, sch, opts);

    REQUIRE(m1.layers.size() == 1);
    REQUIRE(m2.layers.size() == 1);
    REQUIRE(m1.layers[0].plan.family.vectors == m2.layers[0].plan.family.vectors);
    for (double t : {-0.3, 0.0, 0.01, 0.5})
        CHECK(m1.eval(State{0.45}, t) == m2.eval(State{0.45}, t));

    auto m3 = logistic_const_base();
    opts.seed = 24;
    embed::run_pipeline(m3, net, sch, opts);
    CHECK(m1.layers[0].plan.family.vectors != m3.layers[0].plan.family.vectors);
}

TEST_CASE("default schedule avoids the fixed set and spaces its anchors") {
    auto sys = flow::make_logistic_flow();
    auto net = flow::make_net(sys, 0.05);
    auto fixed = flow::detect_fixed(sys, net);
    REQUIRE(fixed.points.size() == 2);

    auto sch = embed::default_schedule(sys, net, fixed);
    REQUIRE(!sch.anchors.empty());
    for (const auto& p : sch.anchors)
        CHECK(flow::dist_to_set(sys, fixed.points, p) > 2.0 * net.mesh);
    for (std::size_t i = 0; i < sch.anchors.size(); ++i)
        for (std::size_t j = i + 1; j < sch.anchors.size(); ++j)
            CHECK(sys.metric(sch.anchors[i], sch.anchors[j]) >= 2.0 * net.mesh);
    for (const auto& [p, q] : sch.pairs) CHECK(sys.metric(p, q) > 4.0 * net.mesh);
}

TEST_CASE("distinct states keep distinct lines") {
    auto map = rotation_base();
    std::vector<State> states{State{0.2}, State{1.7}, State{4.0}};
    auto rep = embed::injectivity_margin(map, states, 10);
    CHECK(rep.min_dist > 0.0);
    CHECK(rep.arg_i < rep.arg_j);
    CHECK(rep.arg_j < states.size());
}

TEST_CASE("construction rejects bad inputs") {
    auto sys = flow::make_logistic_flow();
    CHECK_THROWS_AS(embed::make_bebutov(sys, [](const State&) { return 0.5; }, 0.0),
                    precondition_error);

    flow::FixedPointEmbedding flat;
    flat.values = {{State{0.0}, 0.3}, {State{1.0}, 0.3}};
    CHECK_THROWS_AS(embed::make_bebutov(sys, flat, 0.5), precondition_error);

    auto map = rotation_base();
    CHECK_THROWS_AS(embed::injectivity_margin(map, {State{0.0}}), precondition_error);
    CHECK_THROWS_AS(embed::equivariance_residual(map, {}, 4, 1), precondition_error);
}
