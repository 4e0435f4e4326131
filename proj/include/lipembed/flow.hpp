#pragma once

// Continuous-time flows on compact metric spaces: evolution (closed form
// when available, fixed-step RK4 otherwise), sample nets, fixed-point
// detection, and the Lipschitz extension that turns values on the fixed set
// into a state function.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "lipembed/common.hpp"

namespace lipembed::flow {

using State = std::vector<double>;

struct FlowSystem {
    std::string name;
    int dim = 1;
    double integrator_step = 1e-3;
    double integrator_tol = 1e-8;  // expected group-law / closed-form accuracy
    double horizon = 64.0;         // largest |t| evolve accepts
    std::array<double, 2> coord0_range{0.0, 1.0};

    // At least one of closed_form / vector_field must be set.
    std::function<State(const State&, double)> closed_form;
    std::function<State(const State&)> vector_field;
    std::function<double(const State&, const State&)> metric;
    std::function<bool(const State&)> in_domain;
};

namespace detail {

inline State rk4_step(const FlowSystem& sys, const State& y, double h) {
    auto add_scaled = [](const State& a, const State& b, double s) {
        State r(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + s * b[i];
        return r;
    };
    // classic fourth-order stages
    State k1 = sys.vector_field(y);
    State k2 = sys.vector_field(add_scaled(y, k1, 0.5 * h));
    State k3 = sys.vector_field(add_scaled(y, k2, 0.5 * h));
    State k4 = sys.vector_field(add_scaled(y, k3, h));
    State r(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        r[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return r;
}

}  // namespace detail

/// Flow the state by time t (either sign).  Closed-form systems evaluate
/// directly; otherwise fixed-step RK4 with a trimmed final step.
inline State evolve(const FlowSystem& sys, const State& x, double t) {
    if (static_cast<int>(x.size()) != sys.dim)
        throw precondition_error("evolve: state dimension mismatch");
    if (std::abs(t) > sys.horizon + 1e-12)
        throw domain_error("evolve: |t| exceeds the flow horizon");
    State y;
    if (sys.closed_form) {
        y = sys.closed_form(x, t);
    } else if (sys.vector_field) {
        y = x;
        double remaining = std::abs(t);
        double dir = t >= 0.0 ? 1.0 : -1.0;
        while (remaining > 1e-15) {
            double h = std::min(remaining, sys.integrator_step);
            y = detail::rk4_step(sys, y, dir * h);
            remaining -= h;
        }
    } else {
        throw config_error("evolve: flow has neither closed form nor vector field");
    }
    if (sys.in_domain && !sys.in_domain(y))
        throw integrity_error("evolve: trajectory left the declared domain");
    return y;
}

/// Orbit samples at t0 + k*dt for k = 0..count, marched incrementally so a
/// whole profile costs one evolve per node.
struct OrbitSamples {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<State> states;

    double time_at(std::size_t k) const { return t0 + dt * static_cast<double>(k); }
};

inline OrbitSamples sample_orbit(const FlowSystem& sys, const State& x, double t0, double dt,
                                 std::size_t count) {
    if (!(dt > 0.0)) throw precondition_error("sample_orbit: dt must be positive");
    OrbitSamples orb;
    orb.t0 = t0;
    orb.dt = dt;
    orb.states.reserve(count + 1);
    orb.states.push_back(evolve(sys, x, t0));
    for (std::size_t k = 1; k <= count; ++k)
        orb.states.push_back(evolve(sys, orb.states.back(), dt));
    return orb;
}

/// Finite sample net with its mesh (covering radius at which it was built).
struct SampleNet {
    std::vector<State> points;
    double mesh = 0.0;
};

struct FixedSet {
    std::vector<std::size_t> indices;  // into the net it was detected on
    std::vector<State> points;
    double tol_fix = 1e-6;
};

/// Displacement max over the probe grid (32 times spread over [-8, 8]).
inline double max_displacement(const FlowSystem& sys, const State& x) {
    double worst = 0.0;
    for (int k = 0; k < 32; ++k) {
        double t = -8.0 + 16.0 * static_cast<double>(k) / 31.0;
        worst = std::max(worst, sys.metric(evolve(sys, x, t), x));
    }
    return worst;
}

/// Net points whose probe-grid displacement stays at or below tol_fix.
inline FixedSet detect_fixed(const FlowSystem& sys, const SampleNet& net, double tol_fix = 1e-6) {
    if (!(tol_fix > 0.0)) throw config_error("detect_fixed: tol_fix must be positive");
    FixedSet fs;
    fs.tol_fix = tol_fix;
    for (std::size_t i = 0; i < net.points.size(); ++i) {
        if (max_displacement(sys, net.points[i]) <= tol_fix) {
            fs.indices.push_back(i);
            fs.points.push_back(net.points[i]);
        }
    }
    return fs;
}

inline double dist_to_set(const FlowSystem& sys, const std::vector<State>& set, const State& x) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : set) best = std::min(best, sys.metric(x, p));
    return best;
}

/// Values assigned on the fixed set (the embedding target restricted to it).
struct FixedPointEmbedding {
    std::vector<std::pair<State, double>> values;

    bool injective(const FlowSystem& sys) const {
        for (std::size_t i = 0; i < values.size(); ++i)
            for (std::size_t j = i + 1; j < values.size(); ++j)
                if (sys.metric(values[i].first, values[j].first) > 1e-12 &&
                    std::abs(values[i].second - values[j].second) <= 1e-12)
                    return false;
        return true;
    }
};

/// McShane extension of the fixed-set values to the whole space, clamped to
/// [0,1]: the minimal-slope extension h0(x) = min_y (h(y) + K d(x, y)) with
/// K the Lipschitz constant of h on the fixed set.  With no fixed points the
/// default profile is the normalized first coordinate.
inline double mcshane_extend(const FixedPointEmbedding& h, const FlowSystem& sys, const State& x) {
    if (h.values.empty()) {
        double lo = sys.coord0_range[0], hi = sys.coord0_range[1];
        return std::clamp((x[0] - lo) / (hi - lo), 0.0, 1.0);
    }
    double K = 0.0;
    for (std::size_t i = 0; i < h.values.size(); ++i)
        for (std::size_t j = i + 1; j < h.values.size(); ++j) {
            double d = sys.metric(h.values[i].first, h.values[j].first);
            if (d > 1e-12)
                K = std::max(K, std::abs(h.values[i].second - h.values[j].second) / d);
        }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [y, hy] : h.values) best = std::min(best, hy + K * sys.metric(x, y));
    return std::clamp(best, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Built-in systems
// ---------------------------------------------------------------------------

namespace detail {

inline double wrap_angle(double a) {
    double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(a, two_pi);
    if (w < 0.0) w += two_pi;
    return w;
}

inline double arc_dist(double a, double b) {
    double two_pi = 2.0 * std::numbers::pi;
    double d = std::abs(wrap_angle(a) - wrap_angle(b));
    return std::min(d, two_pi - d);
}

}  // namespace detail

/// Rigid rotation of the circle, angle coordinate, arc-length metric.
inline FlowSystem make_rotation_flow(double omega = 1.0) {
    FlowSystem sys;
    sys.name = "rotation";
    sys.dim = 1;
    sys.coord0_range = {0.0, 2.0 * std::numbers::pi};
    sys.closed_form = [omega](const State& x, double t) {
        return State{detail::wrap_angle(x[0] + omega * t)};
    };
    sys.vector_field = [omega](const State&) { return State{omega}; };
    sys.metric = [](const State& a, const State& b) { return detail::arc_dist(a[0], b[0]); };
    sys.in_domain = [](const State&) { return true; };
    return sys;
}

/// Logistic flow x' = x(1-x) on [0,1].  The closed form is evaluated in
/// logit coordinates, which is stable for all |t| within the horizon.
inline FlowSystem make_logistic_flow(bool use_closed_form = true) {
    FlowSystem sys;
    sys.name = "logistic";
    sys.dim = 1;
    sys.coord0_range = {0.0, 1.0};
    if (use_closed_form) {
        sys.closed_form = [](const State& x, double t) {
            double v = x[0];
            if (v <= 0.0) return State{0.0};
            if (v >= 1.0) return State{1.0};
            double p = std::log(v / (1.0 - v)) + t;
            return State{1.0 / (1.0 + std::exp(-p))};
        };
    }
    sys.vector_field = [](const State& x) { return State{x[0] * (1.0 - x[0])}; };
    sys.metric = [](const State& a, const State& b) { return std::abs(a[0] - b[0]); };
    sys.in_domain = [](const State& x) { return x[0] > -1e-9 && x[0] < 1.0 + 1e-9; };
    return sys;
}

/// Linear flow on the two-torus with frequency vector (w1, w2).
inline FlowSystem make_torus_flow(double w1 = 1.0, double w2 = std::numbers::sqrt2) {
    FlowSystem sys;
    sys.name = "torus";
    sys.dim = 2;
    sys.coord0_range = {0.0, 2.0 * std::numbers::pi};
    sys.closed_form = [w1, w2](const State& x, double t) {
        return State{detail::wrap_angle(x[0] + w1 * t), detail::wrap_angle(x[1] + w2 * t)};
    };
    sys.vector_field = [w1, w2](const State&) { return State{w1, w2}; };
    sys.metric = [](const State& a, const State& b) {
        double d0 = detail::arc_dist(a[0], b[0]);
        double d1 = detail::arc_dist(a[1], b[1]);
        return std::sqrt(d0 * d0 + d1 * d1);
    };
    sys.in_domain = [](const State&) { return true; };
    return sys;
}

/// Gradient flow of the height V(x,y) = -x restricted to the unit circle:
/// two fixed points, a sink at (1,0) and a source at (-1,0).  States are
/// planar, the metric is Euclidean.  In the angle the flow is a' = -sin a,
/// solved by tan(a/2) decaying exponentially.
inline FlowSystem make_northsouth_flow() {
    FlowSystem sys;
    sys.name = "northsouth";
    sys.dim = 2;
    sys.coord0_range = {-1.0, 1.0};
    sys.closed_form = [](const State& x, double t) {
        double a = std::atan2(x[1], x[0]);
        double half = 2.0 * std::atan2(std::sin(0.5 * a) * std::exp(-t), std::cos(0.5 * a));
        return State{std::cos(half), std::sin(half)};
    };
    sys.vector_field = [](const State& x) {
        double a = std::atan2(x[1], x[0]);
        double adot = -std::sin(a);
        return State{-std::sin(a) * adot, std::cos(a) * adot};
    };
    sys.metric = [](const State& a, const State& b) {
        return std::hypot(a[0] - b[0], a[1] - b[1]);
    };
    sys.in_domain = [](const State& x) {
        return std::abs(x[0] * x[0] + x[1] * x[1] - 1.0) < 1e-6;
    };
    return sys;
}

// ---------------------------------------------------------------------------
// Net builders
// ---------------------------------------------------------------------------

inline SampleNet net_interval(double lo, double hi, double mesh) {
    if (!(mesh > 0.0) || !(hi > lo)) throw config_error("net_interval: bad parameters");
    auto n = static_cast<std::size_t>(std::round((hi - lo) / mesh));
    SampleNet net;
    net.mesh = (hi - lo) / static_cast<double>(n);
    for (std::size_t i = 0; i <= n; ++i)
        net.points.push_back({lo + net.mesh * static_cast<double>(i)});
    return net;
}

inline SampleNet net_circle(double mesh) {
    if (!(mesh > 0.0)) throw config_error("net_circle: bad mesh");
    double two_pi = 2.0 * std::numbers::pi;
    auto n = static_cast<std::size_t>(std::ceil(two_pi / mesh));
    SampleNet net;
    net.mesh = two_pi / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        net.points.push_back({net.mesh * static_cast<double>(i)});
    return net;
}

inline SampleNet net_torus(double mesh) {
    SampleNet ring = net_circle(mesh);
    SampleNet net;
    net.mesh = ring.mesh * std::numbers::sqrt2;
    for (const auto& a : ring.points)
        for (const auto& b : ring.points) net.points.push_back({a[0], b[0]});
    return net;
}

inline SampleNet net_circle_planar(double mesh) {
    SampleNet ring = net_circle(mesh);
    SampleNet net;
    net.mesh = 2.0 * std::sin(ring.mesh / 2.0);  // chordal spacing
    for (const auto& a : ring.points) net.points.push_back({std::cos(a[0]), std::sin(a[0])});
    return net;
}

/// Net matched to a built-in system by name.
inline SampleNet make_net(const FlowSystem& sys, double mesh) {
    if (sys.name == "logistic") return net_interval(0.0, 1.0, mesh);
    if (sys.name == "rotation") return net_circle(mesh);
    if (sys.name == "torus") return net_torus(mesh);
    if (sys.name == "northsouth") return net_circle_planar(mesh);
    throw config_error("make_net: no net builder for flow '" + sys.name + "'");
}

}  // namespace lipembed::flow
