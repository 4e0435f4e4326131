#pragma once

// Equivariant maps from a flow into one-Lipschitz lines, built in layers.
// The base layer smooths a state function along orbits with a unit-mass
// kernel whose total variation caps the slope.  Each later layer either
// certifies that its separation target already holds (recording a measured
// margin, touching nothing) or mixes the map toward the low-slope base and
// patches blended window functions at the returns to a local section.
//
// Margins are stored as metric lower bounds that degrade by at most three
// deltas per perturbing stage, so keeping every stage delta at a quarter of
// the smallest live margin keeps all certificates positive.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "lipembed/common.hpp"
#include "lipembed/flow.hpp"
#include "lipembed/funcspace.hpp"
#include "lipembed/perturb.hpp"
#include "lipembed/section.hpp"

namespace lipembed::embed {

using flow::FlowSystem;
using flow::State;

struct Layer {
    bool separating = false;
    double delta = 0.0;
    double a = 0.0;  // patch window length, common to both sections when two
    std::vector<section::LocalSection> secs;
    perturb::PerturbPlan plan;
};

namespace detail {

/// Raised-cosine kernel: unit mass on [-w/2, w/2], total variation 4/w, and
/// C1 at the support ends so grid sums track the integrals closely.
inline double kernel(double u, double w) {
    if (std::abs(u) >= 0.5 * w) return 0.0;
    return (1.0 + std::cos(2.0 * std::numbers::pi * u / w)) / w;
}

}  // namespace detail

struct EquivariantMap {
    FlowSystem sys;
    std::function<double(const State&)> h0;
    double kernel_width = 8.0;
    double quad_step = 0.01;
    std::vector<Layer> layers;

    /// Kernel average of h0 along the orbit.  The sample grid is anchored to
    /// the state, not to t, so shifting t by a grid multiple reproduces the
    /// same terms exactly and time equivariance holds to roundoff on the
    /// grid; normalizing by the kernel sum pins constant orbits exactly.
    double base_eval(const State& x, double t) const {
        double half = 0.5 * kernel_width;
        auto j0 = static_cast<long>(std::floor((t - half) / quad_step)) - 1;
        auto j1 = static_cast<long>(std::ceil((t + half) / quad_step)) + 1;
        double num = 0.0, den = 0.0;
        for (long j = j0; j <= j1; ++j) {
            double v = quad_step * static_cast<double>(j);
            double k = detail::kernel(t - v, kernel_width);
            if (k == 0.0) continue;
            num += k * h0(flow::evolve(sys, x, v));
            den += k;
        }
        if (den <= 0.0) throw integrity_error("base_eval: empty kernel support");
        return num / den;
    }

    double eval(const State& x, double t) const { return eval_upto(layers.size(), x, t); }

    double eval_upto(std::size_t k, const State& x, double t) const {
        if (k == 0) return base_eval(x, t);
        const Layer& L = layers[k - 1];
        double f1 = mix_eval(k, x, t);
        auto hits = layer_hits(L, x, t - L.a, t);
        const section::Hit* use = nullptr;
        const section::LocalSection* use_sec = nullptr;
        for (const auto& [hit, sec] : hits)
            if (t - hit.t >= -1e-12 && t - hit.t <= L.a + 1e-12) {
                if (use) throw integrity_error("eval: patch windows overlap");
                use = &hit;
                use_sec = sec;
            }
        if (!use) return f1;
        double r = std::clamp(t - use->t, 0.0, L.a);
        return f1 + patch_term(k, L, *use_sec, use->y, r, f1);
    }

    /// Sample the full stack on a uniform grid over [-W, W].  The base pass
    /// carries the kernel quadrature; each layer pass reuses the previous
    /// array for the mixed part, so the patch only pays two point
    /// evaluations per section return.
    funcspace::LineFn eval_line(const State& x, double half_width) const {
        auto half_n = static_cast<std::size_t>(std::llround(half_width / quad_step));
        if (half_n == 0) throw precondition_error("eval_line: window too small");
        double W = quad_step * static_cast<double>(half_n);
        std::size_t n = 2 * half_n + 1;
        std::vector<double> cur(n), base(n);
        parallel_for(n, [&](std::size_t i) {
            base[i] = base_eval(x, -W + quad_step * static_cast<double>(i));
        });
        cur = base;
        for (std::size_t k = 1; k <= layers.size(); ++k) {
            const Layer& L = layers[k - 1];
            std::vector<double> next(n);
            for (std::size_t i = 0; i < n; ++i)
                next[i] = (1.0 - L.delta) * cur[i] + L.delta * base[i];
            auto hits = layer_hits(L, x, -W - L.a, W);
            for (const auto& [hit, sec] : hits) {
                double q = section::patch_weight(sys, *sec, hit.y);
                if (q <= 0.0) continue;
                auto weights = perturb::cover_weights(sys, L.plan.cover, hit.y);
                double e0 = mix_eval(k, hit.y, 0.0);
                double ea = mix_eval(k, hit.y, L.a);
                auto g = perturb::assemble_g(L.plan, weights, e0, ea);
                auto lo = static_cast<long>(std::ceil((hit.t + W) / quad_step - 1e-9));
                auto hi = static_cast<long>(std::floor((hit.t + L.a + W) / quad_step + 1e-9));
                for (long i = std::max<long>(lo, 0);
                     i <= std::min<long>(hi, static_cast<long>(n) - 1); ++i) {
                    double t = -W + quad_step * static_cast<double>(i);
                    double r = std::clamp(t - hit.t, 0.0, L.a);
                    double f1y = next[static_cast<std::size_t>(i)];
                    next[static_cast<std::size_t>(i)] = (1.0 - q) * f1y + q * g(r);
                }
            }
            cur = std::move(next);
        }
        return funcspace::LineFn(W, std::move(cur));
    }

private:
    double mix_eval(std::size_t k, const State& x, double t) const {
        const Layer& L = layers[k - 1];
        return (1.0 - L.delta) * eval_upto(k - 1, x, t) + L.delta * base_eval(x, t);
    }

    /// Hits of every section of the layer with return time in [lo, hi],
    /// merged and gap-checked across sections.
    std::vector<std::pair<section::Hit, const section::LocalSection*>> layer_hits(
        const Layer& L, const State& x, double lo, double hi) const {
        double pad = std::min(0.1 * L.a, 0.01);
        std::vector<std::pair<section::Hit, const section::LocalSection*>> out;
        for (const auto& sec : L.secs) {
            auto hl = section::hitting_times(sys, sec, x, lo - pad, hi + pad);
            for (auto& h : hl.hits) out.emplace_back(std::move(h), &sec);
        }
        std::sort(out.begin(), out.end(),
                  [](const auto& a, const auto& b) { return a.first.t < b.first.t; });
        for (std::size_t i = 1; i < out.size(); ++i)
            if (out[i].first.t - out[i - 1].first.t <= L.a)
                throw integrity_error("layer_hits: section returns closer than the window");
        return out;
    }

    /// q(y) * (g(y)(r) - f1(y)(r)) with f1(y)(r) taken from the already
    /// computed f1(x)(t): the hit point lies on the orbit of x, so the two
    /// agree identically.
    double patch_term(std::size_t k, const Layer& L, const section::LocalSection& sec,
                      const State& y, double r, double f1_here) const {
        double q = section::patch_weight(sys, sec, y);
        if (q <= 0.0) return 0.0;
        auto weights = perturb::cover_weights(sys, L.plan.cover, y);
        double e0 = mix_eval(k, y, 0.0);
        double ea = mix_eval(k, y, L.a);
        auto g = perturb::assemble_g(L.plan, weights, e0, ea);
        return q * (g(r) - f1_here);
    }
};

/// Base map: kernel-smoothed extension of the fixed-set values.  The kernel
/// width is 4 / lip_target, giving slope at most lip_target.
inline EquivariantMap make_bebutov(const FlowSystem& sys, std::function<double(const State&)> h0,
                                   double lip_target = 0.5) {
    if (!(lip_target > 0.0)) throw precondition_error("make_bebutov: lip target must be positive");
    EquivariantMap m;
    m.sys = sys;
    m.h0 = std::move(h0);
    m.kernel_width = 4.0 / std::min(1.0, lip_target);
    return m;
}

inline EquivariantMap make_bebutov(const FlowSystem& sys, const flow::FixedPointEmbedding& h,
                                   double lip_target = 0.5) {
    if (!h.injective(sys))
        throw precondition_error("make_bebutov: fixed-set values are not injective");
    FlowSystem sys_copy = sys;
    return make_bebutov(
        sys, [h, sys_copy](const State& x) { return flow::mcshane_extend(h, sys_copy, x); },
        lip_target);
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

struct DensityCert {
    std::string kind;  // "avoid" or "pair"
    std::string anchor;
    std::vector<State> probes;             // avoid: states kept away from constants
    std::vector<State> probes_b, probes_c; // pair: states kept apart
    double margin = 0.0;
    double delta_used = 0.0;
    std::size_t stage = 0;
    bool measured_only = false;
};

/// Lower bound for the metric distance from the probe lines to every
/// constant: a quarter of the oscillation over |t| <= 1 (half the sup
/// distance to the best constant, at series weight 1/2).
inline double avoid_margin(const EquivariantMap& map, const std::vector<State>& probes) {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& z : probes)
        worst = std::min(worst, funcspace::oscillation(map.eval_line(z, 1.0)) / 4.0);
    return worst;
}

/// Half the smallest metric distance between the two probe families.  Half,
/// so that one perturbing stage moving both sides by up to three deltas
/// still leaves the stored value a valid lower bound after the quarter rule.
inline double pair_margin(const EquivariantMap& map, const std::vector<State>& bs,
                          const std::vector<State>& cs, int n_max = 20) {
    double W = static_cast<double>(n_max) + 1.0;
    std::vector<funcspace::LineFn> lb, lc;
    lb.reserve(bs.size());
    lc.reserve(cs.size());
    for (const auto& z : bs) lb.push_back(map.eval_line(z, W));
    for (const auto& z : cs) lc.push_back(map.eval_line(z, W));
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& fb : lb)
        for (const auto& fc : lc)
            worst = std::min(worst, funcspace::cr_dist(fb, fc, n_max));
    return worst / 2.0;
}

inline double map_lipschitz(const EquivariantMap& map, const std::vector<State>& states,
                            double half_width = 8.0) {
    double worst = 0.0;
    for (const auto& x : states)
        worst = std::max(worst, funcspace::lip_constant(map.eval_line(x, half_width)));
    return worst;
}

/// Largest |F(x)(t+s) - F(T_s x)(t)| over sampled states, grid-multiple
/// shifts s, and a fixed probe grid of times.
inline double equivariance_residual(const EquivariantMap& map, const std::vector<State>& states,
                                    std::size_t n_samples, std::uint64_t seed) {
    if (states.empty()) throw precondition_error("equivariance_residual: no states");
    std::mt19937_64 rng(seed);
    const double probe_t[] = {-1.73, -0.41, 0.0, 0.57, 1.93};
    double worst = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        const State& x = states[static_cast<std::size_t>(uniform01(rng) * 0.999999 *
                                                         static_cast<double>(states.size()))];
        long k = static_cast<long>(std::floor(uniform01(rng) * 3000.0)) - 1500;
        if (k == 0) k = 7;
        double s = map.quad_step * static_cast<double>(k);
        State xs = flow::evolve(map.sys, x, s);
        for (double t : probe_t)
            worst = std::max(worst, std::abs(map.eval(x, t + s) - map.eval(xs, t)));
    }
    return worst;
}

inline double fixed_residual(const EquivariantMap& map, const flow::FixedPointEmbedding& h) {
    const double probe_t[] = {-3.0, -1.0, 0.0, 1.5, 4.0};
    double worst = 0.0;
    for (const auto& [z, target] : h.values)
        for (double t : probe_t) worst = std::max(worst, std::abs(map.eval(z, t) - target));
    return worst;
}

struct InjectivityReport {
    double min_dist = 0.0;
    std::size_t arg_i = 0, arg_j = 0;
};

inline InjectivityReport injectivity_margin(const EquivariantMap& map,
                                            const std::vector<State>& states, int n_max = 20) {
    if (states.size() < 2) throw precondition_error("injectivity_margin: need two states");
    double W = static_cast<double>(n_max) + 1.0;
    std::vector<funcspace::LineFn> lines;
    lines.reserve(states.size());
    for (const auto& x : states) lines.push_back(map.eval_line(x, W));
    InjectivityReport rep;
    rep.min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lines.size(); ++i)
        for (std::size_t j = i + 1; j < lines.size(); ++j) {
            double d = funcspace::cr_dist(lines[i], lines[j], n_max);
            if (d < rep.min_dist) {
                rep.min_dist = d;
                rep.arg_i = i;
                rep.arg_j = j;
            }
        }
    return rep;
}

// ---------------------------------------------------------------------------
// Density stages
// ---------------------------------------------------------------------------

struct StageRecord {
    std::string kind;
    std::string anchor;
    double delta = 0.0;        // requested stage delta
    double delta_used = 0.0;   // zero when the stage was measured and skipped
    double margin_before = 0.0;
    double margin_after = 0.0;
    bool skipped = false;
};

struct StageOpts {
    double skip_floor = 1e-7;  // measured margin at/above this skips the stage
    std::uint64_t seed = 1;
    int crdist_nmax = 20;
    double match_tol = 1e-9;   // shift-scan equality tolerance
};

namespace detail {

inline std::string state_label(const State& x) {
    std::string s = "(";
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (i) s += ",";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", x[i]);
        s += buf;
    }
    return s + ")";
}

inline std::vector<State> ball_states(const FlowSystem& sys, const flow::SampleNet& net,
                                      const State& p, double radius) {
    std::vector<State> out{p};
    for (const auto& z : net.points)
        if (sys.metric(z, p) <= radius) out.push_back(z);
    return out;
}

inline std::vector<State> flow_out(const FlowSystem& sys, const std::vector<State>& base,
                                   double radius, int half_grid) {
    std::vector<State> out;
    for (const auto& z : base)
        for (int k = -half_grid; k <= half_grid; ++k)
            out.push_back(flow::evolve(sys, z, radius * static_cast<double>(k) /
                                                    static_cast<double>(half_grid)));
    return out;
}

inline perturb::FEval mixed_window(const EquivariantMap& map, const std::vector<State>& pts,
                                   double delta) {
    return [&map, &pts, delta](std::size_t i, double t) {
        return (1.0 - delta) * map.eval(pts[i], t) + delta * map.base_eval(pts[i], t);
    };
}

}  // namespace detail

/// Stage keeping a neighborhood of the anchor away from the constants.
/// Measures first; if the margin is already positive it only records it.
/// Otherwise builds a local section at the anchor, blends a
/// constant-avoidance plan on the section window, and patches it in.
inline std::pair<StageRecord, DensityCert> densify_avoid_fixed(EquivariantMap& map,
                                                               const flow::SampleNet& net,
                                                               const State& p, double delta,
                                                               std::size_t stage_idx,
                                                               StageOpts opts = {}) {
    StageRecord rec;
    rec.kind = "avoid";
    rec.anchor = detail::state_label(p);
    rec.delta = delta;
    DensityCert cert;
    cert.kind = "avoid";
    cert.anchor = rec.anchor;
    cert.stage = stage_idx;

    cert.probes = detail::flow_out(map.sys, detail::ball_states(map.sys, net, p, 2.0 * net.mesh),
                                   0.2, 2);
    rec.margin_before = avoid_margin(map, cert.probes);
    if (rec.margin_before >= opts.skip_floor) {
        rec.skipped = true;
        rec.margin_after = rec.margin_before;
        cert.margin = rec.margin_before;
        cert.measured_only = true;
        return {rec, cert};
    }

    if (!(delta > 0.0 && delta < 1.0))
        throw precondition_error("densify_avoid_fixed: need 0 < delta < 1 to perturb");
    auto sec = section::build_local_section(map.sys, net, p);
    std::vector<State> core;
    for (const auto& s : sec.S)
        if (section::patch_weight(map.sys, sec, s) == 1.0) core.push_back(s);
    if (core.empty()) core.push_back(sec.S[0]);
    cert.probes = detail::flow_out(map.sys, core, sec.a, 2);
    rec.margin_before = avoid_margin(map, cert.probes);

    double tau = 1.0 - delta / 2.0 + 1e-9;
    auto f1 = detail::mixed_window(map, net.points, delta);
    auto plan = perturb::make_avoid_plan(map.sys, net.points, f1, sec.a, delta, tau, opts.seed,
                                         2.0 * net.mesh);
    auto claims = perturb::check_claims(map.sys, plan, net.points, f1);
    if (!claims.pass)
        throw integrity_error("densify_avoid_fixed: blend claims failed: " + claims.why);

    Layer layer;
    layer.separating = false;
    layer.delta = delta;
    layer.a = sec.a;
    layer.secs.push_back(std::move(sec));
    layer.plan = std::move(plan);
    map.layers.push_back(std::move(layer));

    rec.delta_used = delta;
    rec.margin_after = avoid_margin(map, cert.probes);
    if (!(rec.margin_after > 0.0))
        throw integrity_error("densify_avoid_fixed: patched map still meets the constants");
    cert.margin = rec.margin_after;
    cert.delta_used = delta;
    return {rec, cert};
}

/// Stage keeping the images of two anchor neighborhoods apart.  Measures
/// first; on failure builds sections at both anchors with a common window,
/// requires the stage delta below the section-core distance, blends a
/// shift-separating plan, and patches it at the returns of either section.
inline std::pair<StageRecord, DensityCert> densify_separate(EquivariantMap& map,
                                                            const flow::SampleNet& net,
                                                            const State& p, const State& q,
                                                            double delta, std::size_t stage_idx,
                                                            StageOpts opts = {}) {
    StageRecord rec;
    rec.kind = "pair";
    rec.anchor = detail::state_label(p) + "|" + detail::state_label(q);
    rec.delta = delta;
    DensityCert cert;
    cert.kind = "pair";
    cert.anchor = rec.anchor;
    cert.stage = stage_idx;

    cert.probes_b = detail::flow_out(map.sys, detail::ball_states(map.sys, net, p, 2.0 * net.mesh),
                                     0.05, 1);
    cert.probes_c = detail::flow_out(map.sys, detail::ball_states(map.sys, net, q, 2.0 * net.mesh),
                                     0.05, 1);
    rec.margin_before = pair_margin(map, cert.probes_b, cert.probes_c, opts.crdist_nmax);
    if (rec.margin_before >= opts.skip_floor) {
        rec.skipped = true;
        rec.margin_after = rec.margin_before;
        cert.margin = rec.margin_before;
        cert.measured_only = true;
        return {rec, cert};
    }

    if (!(delta > 0.0 && delta < 1.0))
        throw precondition_error("densify_separate: need 0 < delta < 1 to perturb");
    auto sec1 = section::build_local_section(map.sys, net, p);
    auto sec2 = section::build_local_section(map.sys, net, q);
    double a = std::min(sec1.a, sec2.a);
    sec1.a = a;
    sec2.a = a;

    // flow boxes must be disjoint for the returns of the union to stay apart
    for (const auto& s1 : sec1.S)
        for (const auto& s2 : sec2.S)
            for (int ki = -4; ki <= 4; ++ki)
                for (int kj = -4; kj <= 4; ++kj) {
                    State z1 = flow::evolve(map.sys, s1, a * static_cast<double>(ki) / 4.0);
                    State z2 = flow::evolve(map.sys, s2, a * static_cast<double>(kj) / 4.0);
                    if (map.sys.metric(z1, z2) <= 1e-9)
                        throw precondition_error("densify_separate: flow boxes overlap");
                }

    std::vector<State> b0, c0;
    for (const auto& s : sec1.S)
        if (section::patch_weight(map.sys, sec1, s) == 1.0) b0.push_back(s);
    for (const auto& s : sec2.S)
        if (section::patch_weight(map.sys, sec2, s) == 1.0) c0.push_back(s);
    if (b0.empty()) b0.push_back(sec1.S[0]);
    if (c0.empty()) c0.push_back(sec2.S[0]);
    double d0 = std::numeric_limits<double>::infinity();
    for (const auto& s1 : b0)
        for (const auto& s2 : c0) d0 = std::min(d0, map.sys.metric(s1, s2));
    double delta_used = std::min(delta, 0.45 * d0);
    if (!(delta_used > 0.0))
        throw precondition_error("densify_separate: section cores touch");

    cert.probes_b = detail::flow_out(map.sys, b0, a / 4.0, 2);
    cert.probes_c = detail::flow_out(map.sys, c0, a / 4.0, 2);
    rec.margin_before = pair_margin(map, cert.probes_b, cert.probes_c, opts.crdist_nmax);

    double tau = 1.0 - delta_used / 2.0 + 1e-9;
    auto f1 = detail::mixed_window(map, net.points, delta_used);
    auto plan = perturb::make_separating_plan(map.sys, net.points, f1, a, delta_used, tau,
                                              opts.seed, 2.0 * net.mesh);
    auto claims = perturb::check_claims(map.sys, plan, net.points, f1);
    if (!claims.pass)
        throw integrity_error("densify_separate: blend claims failed: " + claims.why);
    auto scan = perturb::scan_shift_matches(map.sys, plan, net.points, f1, opts.match_tol);
    if (!scan.pass)
        throw integrity_error("densify_separate: blended outputs admit a nontrivial shift match");

    Layer layer;
    layer.separating = true;
    layer.delta = delta_used;
    layer.a = a;
    layer.secs.push_back(std::move(sec1));
    layer.secs.push_back(std::move(sec2));
    layer.plan = std::move(plan);
    map.layers.push_back(std::move(layer));

    rec.delta_used = delta_used;
    rec.margin_after = pair_margin(map, cert.probes_b, cert.probes_c, opts.crdist_nmax);
    if (!(rec.margin_after > 0.0))
        throw integrity_error("densify_separate: patched images still meet");
    cert.margin = rec.margin_after;
    cert.delta_used = delta_used;
    return {rec, cert};
}

// ---------------------------------------------------------------------------
// Staged pipeline
// ---------------------------------------------------------------------------

struct Schedule {
    std::vector<State> anchors;                   // avoidance stages
    std::vector<std::pair<State, State>> pairs;   // separation stages
};

/// Anchors away from the fixed set thinned to twice the mesh; pairs of
/// anchors at least four meshes apart.
inline Schedule default_schedule(const FlowSystem& sys, const flow::SampleNet& net,
                                 const flow::FixedSet& fixed) {
    Schedule sch;
    for (const auto& z : net.points) {
        if (!fixed.points.empty() && flow::dist_to_set(sys, fixed.points, z) <= 2.0 * net.mesh)
            continue;
        bool close = false;
        for (const auto& kept : sch.anchors)
            if (sys.metric(kept, z) < 2.0 * net.mesh) {
                close = true;
                break;
            }
        if (!close) sch.anchors.push_back(z);
    }
    for (std::size_t i = 0; i < sch.anchors.size(); ++i)
        for (std::size_t j = i + 1; j < sch.anchors.size(); ++j)
            if (sys.metric(sch.anchors[i], sch.anchors[j]) > 4.0 * net.mesh)
                sch.pairs.emplace_back(sch.anchors[i], sch.anchors[j]);
    return sch;
}

struct PipelineOpts {
    double delta0 = 0.1;
    double skip_floor = 1e-7;
    double delta_floor = 1e-9;
    std::uint64_t seed = 1;
    int crdist_nmax = 20;
    double match_tol = 1e-9;
};

struct PipelineReport {
    std::vector<StageRecord> stages;
    std::vector<DensityCert> certs;
    double delta0 = 0.0;
    std::size_t perturbed = 0, skipped = 0;
    double min_final_margin = 0.0;
};

namespace detail {

inline double remeasure(const EquivariantMap& map, const DensityCert& c, int n_max) {
    if (c.kind == "avoid") return avoid_margin(map, c.probes);
    return pair_margin(map, c.probes_b, c.probes_c, n_max);
}

}  // namespace detail

/// Run every scheduled stage with the shrinking-delta rule: the stage delta
/// is the smaller of delta0 / 2^k and a quarter of the smallest live margin.
/// Perturbing stages damage other certificates by at most three deltas; a
/// probe re-measures the earliest certificates to verify that bound, and all
/// stored margins are conservatively decremented.  Every certificate is
/// re-measured against the final map.
inline PipelineReport run_pipeline(EquivariantMap& map, const flow::SampleNet& net,
                                   const Schedule& sch, PipelineOpts opts = {}) {
    PipelineReport rep;
    rep.delta0 = opts.delta0;
    std::vector<double> live;  // conservative current margins, cert-aligned

    auto run_stage = [&](bool pair_stage, const State& p, const State& q, std::size_t k) {
        double min_live = std::numeric_limits<double>::infinity();
        for (double m : live) min_live = std::min(min_live, m);
        double delta_k = std::min(opts.delta0 * std::pow(2.0, -static_cast<double>(k)),
                                  min_live / 4.0);
        StageOpts sopts;
        sopts.skip_floor = opts.skip_floor;
        sopts.seed = derive_seed(opts.seed, k + 1);
        sopts.crdist_nmax = opts.crdist_nmax;
        sopts.match_tol = opts.match_tol;

        std::pair<StageRecord, DensityCert> out =
            pair_stage ? densify_separate(map, net, p, q, delta_k, k, sopts)
                       : densify_avoid_fixed(map, net, p, delta_k, k, sopts);
        auto& [rec, cert] = out;

        if (!rec.skipped) {
            if (delta_k < opts.delta_floor)
                throw integrity_error("run_pipeline: margins collapsed before stage " +
                                      std::to_string(k));
            ++rep.perturbed;
            // probe the earliest certificates for the damage bound, then
            // decrement every live margin by the worst case
            double bound = 3.0 * rec.delta_used + 1e-9;
            for (std::size_t c = 0; c < std::min<std::size_t>(3, rep.certs.size()); ++c) {
                double now = detail::remeasure(map, rep.certs[c], opts.crdist_nmax);
                if (now < live[c] - bound)
                    throw integrity_error("run_pipeline: stage " + std::to_string(k) +
                                          " damaged an earlier certificate beyond its bound");
                live[c] = now;
            }
            for (auto& m : live) m = std::max(m - bound, 0.0);
        } else {
            ++rep.skipped;
        }
        rep.stages.push_back(rec);
        rep.certs.push_back(cert);
        live.push_back(cert.margin);
    };

    std::size_t k = 0;
    for (const auto& p : sch.anchors) run_stage(false, p, p, k++);
    for (const auto& [p, q] : sch.pairs) run_stage(true, p, q, k++);

    rep.min_final_margin = std::numeric_limits<double>::infinity();
    for (auto& cert : rep.certs) {
        double final_margin = detail::remeasure(map, cert, opts.crdist_nmax);
        if (!(final_margin > 0.0))
            throw integrity_error("run_pipeline: certificate for " + cert.anchor +
                                  " died by the final map");
        rep.min_final_margin = std::min(rep.min_final_margin, final_margin);
        cert.margin = final_margin;
    }
    if (rep.certs.empty()) rep.min_final_margin = 0.0;
    return rep;
}

}  // namespace lipembed::embed
