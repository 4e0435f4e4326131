#pragma once

// Finite perturbation step on a window [0, a]: cover the state samples by
// metric balls, blend a generic vector family through a partition of unity at
// interior grid nodes, and keep the window endpoints bitwise.  Two plan
// flavors: one whose output is never constant on the grid, one whose output
// admits no nontrivial time-shift matches between states.
//
// Both need the input map to be tau-Lipschitz on the window for some tau < 1;
// the slack (1 - tau) funds the slope budget of the bridge segments next to
// the copied endpoints.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lipembed/common.hpp"
#include "lipembed/flow.hpp"
#include "lipembed/genvec.hpp"

namespace lipembed::perturb {

using flow::FlowSystem;
using flow::State;

/// Map values on the window: (sample index, t in [0, a]) -> value.
using FEval = std::function<double(std::size_t, double)>;

/// Piecewise linear function on sorted breakpoints.
struct PLFn {
    std::vector<double> ts;
    std::vector<double> vs;

    double operator()(double t) const {
        if (t <= ts.front()) return vs.front();
        if (t >= ts.back()) return vs.back();
        auto it = std::upper_bound(ts.begin(), ts.end(), t);
        std::size_t hi = static_cast<std::size_t>(it - ts.begin());
        std::size_t lo = hi - 1;
        double lam = (t - ts[lo]) / (ts[hi] - ts[lo]);
        return (1.0 - lam) * vs[lo] + lam * vs[hi];
    }

    double max_slope() const {
        double worst = 0.0;
        for (std::size_t i = 0; i + 1 < ts.size(); ++i)
            worst = std::max(worst, std::abs(vs[i + 1] - vs[i]) / (ts[i + 1] - ts[i]));
        return worst;
    }
};

/// Largest window slope over the samples, measured on a uniform grid.
inline double measure_tau(const FEval& f, std::size_t n_points, double a, std::size_t grid_n = 256) {
    double worst = 0.0;
    double step = a / static_cast<double>(grid_n);
    for (std::size_t i = 0; i < n_points; ++i) {
        double prev = f(i, 0.0);
        for (std::size_t k = 1; k <= grid_n; ++k) {
            double cur = f(i, step * static_cast<double>(k));
            worst = std::max(worst, std::abs(cur - prev) / step);
            prev = cur;
        }
    }
    return worst;
}

struct Cover {
    double radius = 0.0;
    std::vector<std::size_t> centers;  // indices into the sample states
    std::vector<State> center_states;

    std::size_t size() const { return centers.size(); }
};

/// Normalized hat weights of x against the cover balls.  Supported inside the
/// balls, summing to one wherever at least one ball reaches.
inline std::vector<double> cover_weights(const FlowSystem& sys, const Cover& cov, const State& x) {
    std::vector<double> w(cov.size(), 0.0);
    double total = 0.0;
    for (std::size_t m = 0; m < cov.size(); ++m) {
        double d = sys.metric(x, cov.center_states[m]);
        w[m] = std::max(0.0, 1.0 - d / cov.radius);
        total += w[m];
    }
    if (total <= 0.0) throw integrity_error("cover_weights: state escapes the cover");
    for (auto& v : w) v /= total;
    return w;
}

/// Greedy ball cover of the samples, halving the radius until every ball has
/// small enough state diameter (when capped) and window-image diameter.
inline Cover build_cover(const FlowSystem& sys, const std::vector<State>& pts, const FEval& f,
                         double a, double f_diam_cap, double state_diam_cap, double min_radius,
                         std::size_t t_grid_n = 64) {
    if (pts.empty()) throw precondition_error("build_cover: no sample points");
    double radius = state_diam_cap > 0.0 ? 0.45 * state_diam_cap : 0.25;
    for (int round = 0; round < 24; ++round) {
        Cover cov;
        cov.radius = radius;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            bool covered = false;
            for (std::size_t c : cov.centers)
                if (sys.metric(pts[i], pts[c]) <= radius) {
                    covered = true;
                    break;
                }
            if (!covered) {
                cov.centers.push_back(i);
                cov.center_states.push_back(pts[i]);
            }
        }

        bool ok = true;
        for (std::size_t m = 0; m < cov.size() && ok; ++m) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < pts.size(); ++i)
                if (sys.metric(pts[i], cov.center_states[m]) <= radius) members.push_back(i);
            for (std::size_t u = 0; u < members.size() && ok; ++u)
                for (std::size_t v = u + 1; v < members.size() && ok; ++v) {
                    if (state_diam_cap > 0.0 &&
                        sys.metric(pts[members[u]], pts[members[v]]) > state_diam_cap)
                        ok = false;
                    double gap = 0.0;
                    for (std::size_t k = 0; k <= t_grid_n; ++k) {
                        double t = a * static_cast<double>(k) / static_cast<double>(t_grid_n);
                        gap = std::max(gap,
                                       std::abs(f(members[u], t) - f(members[v], t)));
                        if (gap > f_diam_cap) break;
                    }
                    if (gap > f_diam_cap) ok = false;
                }
        }
        if (ok) return cov;
        radius *= 0.5;
        if (radius < min_radius)
            throw precondition_error("build_cover: caps unreachable above the sample mesh");
    }
    throw precondition_error("build_cover: halving budget exhausted");
}

struct PerturbPlan {
    double a = 0.0, delta = 0.0, tau = 0.0;
    double b = 0.0, c = 0.0, Delta = 0.0;
    double box = 0.0, incr = 0.0;
    std::size_t N = 0, L = 0;  // L = 0 marks a constant-avoidance plan
    std::vector<double> nodes;
    Cover cover;
    genvec::Matrix f_rows;  // blended window values of the cover centers at the nodes
    genvec::VecFamily family;
    bool separating = false;
};

namespace detail {

inline void common_preconditions(double a, double delta, double tau) {
    if (!(a > 0.0)) throw precondition_error("perturb plan: window length must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw precondition_error("perturb plan: need 0 < delta < 1");
    if (!(tau > 0.0 && tau < 1.0)) throw precondition_error("perturb plan: need 0 < tau < 1");
}

inline genvec::Matrix center_rows(const Cover& cov, const FEval& f,
                                  const std::vector<double>& nodes) {
    genvec::Matrix rows;
    for (std::size_t c : cov.centers) {
        std::vector<double> row;
        row.reserve(nodes.size());
        for (double t : nodes) row.push_back(f(c, t));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace detail

/// Plan whose blended output is never constant on the interior grid.
inline PerturbPlan make_avoid_plan(const FlowSystem& sys, const std::vector<State>& pts,
                                   const FEval& f, double a, double delta, double tau,
                                   std::uint64_t seed, double min_cover_radius = 1e-6) {
    detail::common_preconditions(a, delta, tau);
    double measured = measure_tau(f, pts.size(), a);
    if (measured > tau + 1e-9)
        throw precondition_error("make_avoid_plan: window slope " + std::to_string(measured) +
                                 " exceeds tau " + std::to_string(tau));

    PerturbPlan plan;
    plan.a = a;
    plan.delta = delta;
    plan.tau = tau;
    plan.separating = false;
    plan.b = 0.5 * std::min(delta / 4.0, a / 2.0);
    plan.c = a - plan.b;
    double cap = 0.9 * std::min(delta / 4.0, (1.0 - tau) * plan.b / 2.0);
    plan.cover = build_cover(sys, pts, f, a, cap, 0.0, min_cover_radius);
    std::size_t M = plan.cover.size();

    plan.N = std::max<std::size_t>(M + 2,
                                   2 + static_cast<std::size_t>(
                                           std::ceil((plan.c - plan.b) / (0.225 * delta))));
    plan.Delta = (plan.c - plan.b) / static_cast<double>(plan.N - 1);
    for (std::size_t n = 0; n < plan.N; ++n)
        plan.nodes.push_back(plan.b + plan.Delta * static_cast<double>(n));
    plan.nodes.back() = plan.c;

    plan.box = cap;
    plan.incr = 0.95 * plan.Delta;
    plan.f_rows = detail::center_rows(plan.cover, f, plan.nodes);
    plan.family = genvec::sample_avoid_family(plan.f_rows, plan.box, plan.incr, seed);
    auto check = genvec::check_family_avoid(plan.f_rows, plan.family, plan.box, plan.incr);
    if (!check.ok) throw integrity_error("make_avoid_plan: family re-check failed: " + check.detail);
    return plan;
}

/// Plan whose blended outputs admit no nontrivial shift matches.
inline PerturbPlan make_separating_plan(const FlowSystem& sys, const std::vector<State>& pts,
                                        const FEval& f, double a, double delta, double tau,
                                        std::uint64_t seed, double min_cover_radius = 1e-6) {
    detail::common_preconditions(a, delta, tau);
    double measured = measure_tau(f, pts.size(), a);
    if (measured > tau + 1e-9)
        throw precondition_error("make_separating_plan: window slope " + std::to_string(measured) +
                                 " exceeds tau " + std::to_string(tau));

    PerturbPlan plan;
    plan.a = a;
    plan.delta = delta;
    plan.tau = tau;
    plan.separating = true;
    plan.b = 0.5 * std::min(delta / 4.0, a / 4.0);
    plan.c = a - plan.b;
    double cap = 0.9 * std::min(delta / 4.0, (1.0 - tau) * plan.b / 2.0);
    plan.cover = build_cover(sys, pts, f, a, cap, 0.9 * delta, min_cover_radius);
    std::size_t M = plan.cover.size();

    // The grid must put at least 2M nodes into [b, a/4] and stay finer than
    // delta/4; grow N until both hold.  Demand slack past 2M: with exactly 2M
    // the shifted restriction matrices are square and their smallest singular
    // value sits at the random-matrix floor, so the rank margins the sampler
    // must certify become a coin flip.  A quarter extra columns keeps the
    // candidates rectangular and the margins an order above the floor.
    std::size_t L_need = 2 * M + std::max<std::size_t>(2, M / 2);
    plan.N = std::max<std::size_t>(L_need + 2,
                                   2 + static_cast<std::size_t>(
                                           std::ceil((plan.c - plan.b) / (0.225 * delta))));
    for (int tries = 0; tries < 48; ++tries) {
        plan.Delta = (plan.c - plan.b) / static_cast<double>(plan.N - 1);
        plan.L = static_cast<std::size_t>(std::floor((a / 4.0 - plan.b) / plan.Delta + 1e-12)) + 1;
        if (plan.L > plan.N - 1) plan.L = plan.N - 1;
        if (plan.L >= L_need) break;
        plan.N *= 2;
    }
    if (plan.L < L_need)
        throw precondition_error("make_separating_plan: grid cannot fit the cover");

    plan.nodes.clear();
    for (std::size_t n = 0; n < plan.N; ++n)
        plan.nodes.push_back(plan.b + plan.Delta * static_cast<double>(n));
    plan.nodes.back() = plan.c;

    plan.box = cap;
    plan.incr = 0.95 * plan.Delta;
    auto rows = detail::center_rows(plan.cover, f, plan.nodes);
    plan.f_rows = rows;
    plan.family = genvec::sample_generic_u(rows, plan.box, plan.incr, plan.L, seed);
    auto check = genvec::check_family_separating(rows, plan.family, plan.box, plan.incr, plan.L);
    if (!check.ok)
        throw integrity_error("make_separating_plan: family re-check failed: " + check.detail);

    // The zero-shift conclusion also needs the leading restrictions of the
    // family itself to be independent.
    genvec::Matrix lead;
    for (const auto& u : plan.family.vectors)
        lead.emplace_back(u.begin(), u.begin() + static_cast<long>(plan.L));
    auto [lr, lm] = genvec::singular_rank(lead);
    if (lr != static_cast<int>(M) || lm < genvec::kSampledMarginMin)
        throw integrity_error("make_separating_plan: leading restrictions are degenerate");
    return plan;
}

/// The blended window function for given cover weights: endpoints copied
/// bitwise from the input, interior grid nodes from the family blend, linear
/// in between.
inline PLFn assemble_g(const PerturbPlan& plan, const std::vector<double>& weights, double f_at_0,
                       double f_at_a) {
    if (weights.size() != plan.cover.size())
        throw precondition_error("assemble_g: weight count mismatch");
    PLFn g;
    g.ts.reserve(plan.N + 2);
    g.vs.reserve(plan.N + 2);
    g.ts.push_back(0.0);
    g.vs.push_back(f_at_0);
    for (std::size_t n = 0; n < plan.N; ++n) {
        double v = 0.0;
        for (std::size_t m = 0; m < weights.size(); ++m)
            v += weights[m] * plan.family.vectors[m][n];
        g.ts.push_back(plan.nodes[n]);
        g.vs.push_back(v);
    }
    g.ts.push_back(plan.a);
    g.vs.push_back(f_at_a);
    if (g.max_slope() > 1.0 + 1e-9)
        throw integrity_error("assemble_g: slope budget violated");
    return g;
}

inline PLFn assemble_g(const FlowSystem& sys, const PerturbPlan& plan, const State& x,
                       double f_at_0, double f_at_a) {
    return assemble_g(plan, cover_weights(sys, plan.cover, x), f_at_0, f_at_a);
}

/// Claim battery over all sample points: sup distance below delta, endpoints
/// bitwise, node distance below delta/2, bridge increment within b, slopes
/// within one, and (for avoidance plans) the smallest grid oscillation.
struct PerturbReport {
    double max_sup_diff = 0.0;
    double max_node_diff = 0.0;
    double max_bridge = 0.0;
    double max_slope = 0.0;
    double min_node_osc = 1.0;
    bool endpoints_exact = true;
    bool pass = false;
    std::string why;
};

inline PerturbReport check_claims(const FlowSystem& sys, const PerturbPlan& plan,
                                  const std::vector<State>& pts, const FEval& f) {
    PerturbReport rep;
    double tstep = std::min(plan.Delta, plan.b) / 4.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        PLFn g = assemble_g(sys, plan, pts[i], f(i, 0.0), f(i, plan.a));
        if (g.vs.front() != f(i, 0.0) || g.vs.back() != f(i, plan.a)) rep.endpoints_exact = false;
        rep.max_slope = std::max(rep.max_slope, g.max_slope());
        rep.max_bridge = std::max(rep.max_bridge, std::abs(g.vs[1] - g.vs[0]));
        for (double t = 0.0; t < plan.a + 0.5 * tstep; t += tstep) {
            double tt = std::min(t, plan.a);
            rep.max_sup_diff = std::max(rep.max_sup_diff, std::abs(g(tt) - f(i, tt)));
        }
        double lo = 2.0, hi = -1.0;
        for (std::size_t n = 0; n < plan.N; ++n) {
            double gv = g.vs[n + 1];
            rep.max_node_diff = std::max(rep.max_node_diff, std::abs(gv - f(i, plan.nodes[n])));
            lo = std::min(lo, gv);
            hi = std::max(hi, gv);
        }
        rep.min_node_osc = std::min(rep.min_node_osc, hi - lo);
    }

    rep.pass = true;
    auto fail = [&](const std::string& msg) {
        rep.pass = false;
        rep.why += rep.why.empty() ? msg : ("; " + msg);
    };
    if (rep.max_sup_diff >= plan.delta) fail("sup distance reached delta");
    if (!rep.endpoints_exact) fail("endpoints not copied bitwise");
    if (rep.max_node_diff >= plan.delta / 2.0) fail("node distance reached delta/2");
    if (rep.max_bridge > plan.b + 1e-12) fail("bridge increment exceeds b");
    if (rep.max_slope > 1.0 + 1e-9) fail("slope exceeds one");
    if (!plan.separating && rep.min_node_osc <= 0.0) fail("a blended output is grid-constant");
    return rep;
}

/// Exhaustive shift-match scan.  For every ordered sample pair and every
/// shift on the scan grid, tests whether the two blended outputs agree along
/// the overlap.  The scan passes when every detected match is the trivial
/// one: shift within one grid step of zero and states within delta.
struct ShiftMatch {
    std::size_t i = 0, j = 0;
    double eps = 0.0;
    double gap = 0.0;   // sup difference along the overlap
    double dist = 0.0;  // state distance
};

struct ScanResult {
    std::vector<ShiftMatch> matches;
    std::size_t pairs_scanned = 0, shifts_per_pair = 0;
    double match_tol = 0.0;
    bool pass = false;
};

inline ScanResult scan_shift_matches(const FlowSystem& sys, const PerturbPlan& plan,
                                     const std::vector<State>& pts, const FEval& f,
                                     double match_tol = 1e-9) {
    ScanResult out;
    out.match_tol = match_tol;

    std::vector<PLFn> g;
    g.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
        g.push_back(assemble_g(sys, plan, pts[i], f(i, 0.0), f(i, plan.a)));

    // shift grid: all node-aligned shifts up to a/2, their half-step
    // neighbors, and the window edge
    std::vector<double> shifts{0.0};
    for (std::size_t k = 1; plan.Delta * static_cast<double>(k) <= plan.a / 2.0; ++k) {
        double e = plan.Delta * static_cast<double>(k);
        shifts.push_back(e);
        shifts.push_back(e - 0.5 * plan.Delta);
        if (e + 0.5 * plan.Delta <= plan.a / 2.0) shifts.push_back(e + 0.5 * plan.Delta);
    }
    shifts.push_back(plan.a / 2.0);
    std::sort(shifts.begin(), shifts.end());
    shifts.erase(std::unique(shifts.begin(), shifts.end()), shifts.end());
    out.shifts_per_pair = shifts.size();

    double tstep = plan.Delta / 4.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < pts.size(); ++j) {
            ++out.pairs_scanned;
            for (double eps : shifts) {
                if (i == j && eps == 0.0) continue;
                double gap = 0.0;
                for (double t = 0.0; t <= plan.a - eps + 1e-15; t += tstep) {
                    double tt = std::min(t, plan.a - eps);
                    gap = std::max(gap, std::abs(g[i](tt + eps) - g[j](tt)));
                    if (gap >= match_tol) break;
                }
                if (gap < match_tol) {
                    ShiftMatch m;
                    m.i = i;
                    m.j = j;
                    m.eps = eps;
                    m.gap = gap;
                    m.dist = sys.metric(pts[i], pts[j]);
                    out.matches.push_back(m);
                }
            }
        }

    out.pass = true;
    for (const auto& m : out.matches)
        if (m.eps > plan.Delta + 1e-12 || m.dist >= plan.delta) out.pass = false;
    return out;
}

}  // namespace lipembed::perturb
