#pragma once

// Local cross-sections of a flow built around a non-fixed base point: a bump
// supported near the base point, the integrated orbit clock f(x), the section
// S = {f = f(p)} nearby, and first-return (hitting) time detection.
//
// The clock is f(x) = integral of h(T_t x) over [c, 0] for a fixed c < 0.
// When the neighborhood is small enough that flowing it by |t| <= a stays in
// {h = 1} and its c-translate misses supp h entirely, f(T_t x) = f(x) + t
// exactly, which is what makes f a clock.  The integral is evaluated by
// adaptive Simpson so that f is a well-defined function of the state to
// ~1e-11, independent of how the query point was reached.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lipembed/common.hpp"
#include "lipembed/flow.hpp"

namespace lipembed::section {

using flow::FlowSystem;
using flow::State;

struct SectionOpts {
    double a_max = 0.5;       // cap on the section time radius
    double tol_S = 1e-8;      // clock-level tolerance for section membership
    double quad_eps = 1e-11;  // adaptive quadrature tolerance for the clock
    double dedupe = 1e-6;     // merge radius for refined section points
    double snap = 1e-7;       // hit-to-stored-point snapping radius
    int max_shrink = 20;
};

struct LocalSection {
    State p;
    double a = 0.0;   // time radius
    double c = 0.0;   // clock integration offset, c < 0, |c| > a
    double r1 = 0.0;  // bump is 1 inside d <= r1
    double r2 = 0.0;  // bump is 0 outside d >= r2
    double rA = 0.0;  // radius of the neighborhood the clock is additive on
    double f_p = 0.0;
    double v_est = 0.0;  // local speed estimate, used for scan step sizes
    std::vector<State> S;
    SectionOpts opts;
};

/// Cubic smoothstep bump of the distance to the base point.
inline double bump_h(const FlowSystem& sys, const LocalSection& sec, const State& x) {
    double d = sys.metric(x, sec.p);
    if (d <= sec.r1) return 1.0;
    if (d >= sec.r2) return 0.0;
    double s = (d - sec.r1) / (sec.r2 - sec.r1);
    return 1.0 - s * s * (3.0 - 2.0 * s);
}

/// Patch weight: 1 on the inner half of the section neighborhood, falling to
/// 0 at its edge.  Constant along nothing but the section; evaluated only at
/// section points.
inline double patch_weight(const FlowSystem& sys, const LocalSection& sec, const State& x) {
    double d = sys.metric(x, sec.p);
    double inner = 0.5 * sec.rA, outer = 0.9 * sec.rA;
    if (d <= inner) return 1.0;
    if (d >= outer) return 0.0;
    double s = (d - inner) / (outer - inner);
    return 1.0 - s * s * (3.0 - 2.0 * s);
}

namespace detail {

inline double adaptive_simpson(const std::function<double(double)>& g, double lo, double hi,
                               double whole, double flo, double fmid, double fhi, double eps,
                               int depth) {
    double mid = 0.5 * (lo + hi);
    double lmid = 0.5 * (lo + mid), rmid = 0.5 * (mid + hi);
    double fl = g(lmid), fr = g(rmid);
    double left = (mid - lo) / 6.0 * (flo + 4.0 * fl + fmid);
    double right = (hi - mid) / 6.0 * (fmid + 4.0 * fr + fhi);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(g, lo, mid, left, flo, fl, fmid, 0.5 * eps, depth - 1) +
           adaptive_simpson(g, mid, hi, right, fmid, fr, fhi, 0.5 * eps, depth - 1);
}

inline double integrate(const std::function<double(double)>& g, double lo, double hi, double eps) {
    double flo = g(lo), fhi = g(hi), fmid = g(0.5 * (lo + hi));
    double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    return adaptive_simpson(g, lo, hi, whole, flo, fmid, fhi, eps, 40);
}

}  // namespace detail

/// The orbit clock f(x): integral of the bump along the orbit over [c, 0].
inline double section_functional(const FlowSystem& sys, const LocalSection& sec, const State& x) {
    auto integrand = [&](double t) { return bump_h(sys, sec, flow::evolve(sys, x, t)); };
    return detail::integrate(integrand, sec.c, 0.0, sec.opts.quad_eps);
}

inline bool on_section(const FlowSystem& sys, const LocalSection& sec, const State& x) {
    return sys.metric(x, sec.p) <= sec.rA + 1e-9 &&
           std::abs(section_functional(sys, sec, x) - sec.f_p) <= sec.opts.tol_S;
}

/// Membership in the flowed-out neighborhood: x = T_t x0 with x0 in the
/// section neighborhood and |t| <= a.  Uses the clock to find the candidate
/// return time, then verifies it lands on the section.
inline bool in_A(const FlowSystem& sys, const LocalSection& sec, const State& x,
                 double* time_to_section = nullptr) {
    double s = sec.f_p - section_functional(sys, sec, x);
    if (std::abs(s) > sec.a + 1e-9) return false;
    State y = flow::evolve(sys, x, s);
    if (time_to_section) *time_to_section = s;
    return sys.metric(y, sec.p) <= sec.rA + 1e-9 &&
           std::abs(section_functional(sys, sec, y) - sec.f_p) <= 10.0 * sec.opts.tol_S;
}

namespace detail {

// Sampled states for the containment checks: the base point, net points in
// the candidate neighborhood, and their small orbit translates.
inline std::vector<State> neighborhood_samples(const FlowSystem& sys, const flow::SampleNet& net,
                                               const State& p, double radius) {
    std::vector<State> out{p};
    for (const auto& q : net.points)
        if (sys.metric(q, p) <= radius) out.push_back(q);
    return out;
}

}  // namespace detail

/// Build a local section at p.  Chooses the clock offset c, bump radii, the
/// time radius a, and the neighborhood radius; shrinks a and the radius until
/// sampled containment checks pass; computes f(p); projects nearby net points
/// onto the section along their orbits; verifies injectivity of the flow box
/// at net resolution.
inline LocalSection build_local_section(const FlowSystem& sys, const flow::SampleNet& net,
                                        const State& p, SectionOpts opts = {}) {
    LocalSection sec;
    sec.p = p;
    sec.opts = opts;

    if (flow::max_displacement(sys, p) <= 1e-5)
        throw precondition_error("build_local_section: base point is fixed");

    double probe = 0.05;
    sec.v_est = std::max({sys.metric(flow::evolve(sys, p, probe), p),
                          sys.metric(flow::evolve(sys, p, -probe), p)}) /
                probe;
    if (sec.v_est < 1e-9)
        throw precondition_error("build_local_section: base point barely moves");

    // Clock offset: the candidate with the largest backward displacement,
    // so the bump support has room to avoid the c-translate.
    double best_d = 0.0;
    for (double cand : {-0.5, -1.0, -2.0, -4.0}) {
        double d = sys.metric(flow::evolve(sys, p, cand), p);
        if (d > best_d) {
            best_d = d;
            sec.c = cand;
        }
    }
    if (best_d <= 0.0) throw precondition_error("build_local_section: orbit returns immediately");

    sec.r2 = best_d / 2.0;
    sec.r1 = sec.r2 / 2.0;
    sec.rA = sec.r1 / 4.0;
    sec.a = std::min({opts.a_max, std::abs(sec.c) / 4.0, sec.r1 / (4.0 * sec.v_est)});

    // Shrink a and the neighborhood radius until flowing the neighborhood by
    // |t| <= a stays inside {h = 1} and its c-translate misses supp h.
    bool ok = false;
    for (int round = 0; round < opts.max_shrink && !ok; ++round) {
        ok = true;
        auto samples = detail::neighborhood_samples(sys, net, p, sec.rA);
        for (const auto& q : samples) {
            for (int k = -4; k <= 4 && ok; ++k) {
                double t = sec.a * static_cast<double>(k) / 4.0;
                State moved = flow::evolve(sys, q, t);
                if (sys.metric(moved, p) > sec.r1) ok = false;
                State shifted = flow::evolve(sys, q, t + sec.c);
                if (sys.metric(shifted, p) < sec.r2 * 1.05) ok = false;
            }
            if (!ok) break;
        }
        if (!ok) {
            sec.a *= 0.5;
            sec.rA *= 0.5;
            if (sec.a < 1e-9)
                throw precondition_error(
                    "build_local_section: containment checks failed at every scale");
        }
    }
    if (!ok)
        throw precondition_error("build_local_section: shrink budget exhausted at p");

    sec.f_p = section_functional(sys, sec, p);

    // Project nearby net points (and p itself) onto the section.
    std::vector<State> candidates{p};
    for (const auto& q : net.points)
        if (sys.metric(q, p) <= sec.rA) candidates.push_back(q);
    for (const auto& q : candidates) {
        double guess = sec.f_p - section_functional(sys, sec, q);
        if (std::abs(guess) > sec.a) continue;
        // The clock has unit slope here, so bisect a small bracket around the
        // direct estimate.
        double h = std::max(1e-3 * sec.a, 4.0 * sec.opts.tol_S);
        double lo = guess - h, hi = guess + h;
        auto g = [&](double t) {
            return section_functional(sys, sec, flow::evolve(sys, q, t)) - sec.f_p;
        };
        double glo = g(lo), ghi = g(hi);
        if (!(glo < 0.0 && ghi > 0.0)) continue;
        for (int it = 0; it < 60; ++it) {
            double mid = 0.5 * (lo + hi);
            (g(mid) < 0.0 ? lo : hi) = mid;
        }
        State y = flow::evolve(sys, q, 0.5 * (lo + hi));
        if (sys.metric(y, p) > sec.rA + 1e-9) continue;
        bool dup = false;
        for (const auto& s : sec.S)
            if (sys.metric(s, y) <= opts.dedupe) {
                dup = true;
                break;
            }
        if (!dup) sec.S.push_back(y);
    }
    if (sec.S.empty())
        throw integrity_error("build_local_section: no section points found near p");

    for (const auto& s : sec.S)
        if (std::abs(section_functional(sys, sec, s) - sec.f_p) > opts.tol_S)
            throw integrity_error("build_local_section: refined point off the section level");

    // Flow-box injectivity at sample resolution.
    for (std::size_t i = 0; i < sec.S.size(); ++i)
        for (std::size_t j = i; j < sec.S.size(); ++j)
            for (int ki = -8; ki <= 8; ++ki)
                for (int kj = (i == j ? ki + 1 : -8); kj <= 8; ++kj) {
                    double ti = sec.a * static_cast<double>(ki) / 8.0;
                    double tj = sec.a * static_cast<double>(kj) / 8.0;
                    State xi = flow::evolve(sys, sec.S[i], ti);
                    State xj = flow::evolve(sys, sec.S[j], tj);
                    if (sys.metric(xi, xj) <= 1e-12 && (i != j || std::abs(ti - tj) > 1e-12))
                        throw integrity_error("build_local_section: flow box is not injective");
                }

    return sec;
}

/// Largest additivity residual |f(T_t x) - f(x) - t| over the section
/// neighborhood samples and the time grid |t| <= a.
inline double additivity_residual(const FlowSystem& sys, const LocalSection& sec,
                                  const flow::SampleNet& net) {
    double worst = 0.0;
    for (const auto& q : detail::neighborhood_samples(sys, net, sec.p, sec.rA)) {
        double fq = section_functional(sys, sec, q);
        for (int k = -4; k <= 4; ++k) {
            double t = sec.a * static_cast<double>(k) / 4.0;
            double ft = section_functional(sys, sec, flow::evolve(sys, q, t));
            worst = std::max(worst, std::abs(ft - fq - t));
        }
    }
    return worst;
}

struct Hit {
    double t = 0.0;            // hitting time
    long section_index = -1;   // nearest stored section point if snapped
    State y;                   // T_t x, refined
};

struct HitList {
    std::vector<Hit> hits;
    double t0 = 0.0, t1 = 0.0;

    std::vector<double> times() const {
        std::vector<double> out;
        for (const auto& h : hits) out.push_back(h.t);
        return out;
    }
};

/// Times t in [t0, t1] with T_t x on the section.  The orbit is marched at a
/// step fine enough that a pass through the section neighborhood cannot be
/// skipped (at one-dimensional state spaces; higher dimensions share the
/// sampled resolution of everything else here).  Candidate passes are
/// refined by bisecting the clock and snapped onto a stored section point
/// when one is within the snap radius.  Consecutive hits closer than the
/// section time radius violate the gap property and raise an error.
inline HitList hitting_times(const FlowSystem& sys, const LocalSection& sec, const State& x,
                             double t0, double t1) {
    if (!(t1 > t0)) throw precondition_error("hitting_times: empty time window");
    HitList out;
    out.t0 = t0;
    out.t1 = t1;

    double step = std::min(sec.a, sec.rA / std::max(sec.v_est, 1e-9)) / 4.0;
    auto steps = static_cast<std::size_t>(std::ceil((t1 - t0) / step));
    step = (t1 - t0) / static_cast<double>(steps);

    auto clock_gap = [&](double t) {
        return section_functional(sys, sec, flow::evolve(sys, x, t)) - sec.f_p;
    };

    State cur = flow::evolve(sys, x, t0);
    double prev_d = sys.metric(cur, sec.p);
    bool inside = prev_d <= sec.rA + sec.v_est * step;
    double enter = t0;
    for (std::size_t k = 1; k <= steps + 1; ++k) {
        double t = t0 + step * static_cast<double>(k);
        cur = flow::evolve(sys, cur, step);
        double d = sys.metric(cur, sec.p);
        bool now = d <= sec.rA + sec.v_est * step && k <= steps;
        if (now && !inside) enter = t - step;
        if (!now && inside) {
            // the orbit just left the neighborhood; refine the pass
            double lo = std::max(t0, enter - step), hi = std::min(t1, t);
            double glo = clock_gap(lo), ghi = clock_gap(hi);
            if (glo < 0.0 && ghi > 0.0) {
                for (int it = 0; it < 60; ++it) {
                    double mid = 0.5 * (lo + hi);
                    (clock_gap(mid) < 0.0 ? lo : hi) = mid;
                }
                Hit hit;
                hit.t = 0.5 * (lo + hi);
                hit.y = flow::evolve(sys, x, hit.t);
                if (sys.metric(hit.y, sec.p) <= sec.rA + 1e-9) {
                    for (std::size_t si = 0; si < sec.S.size(); ++si)
                        if (sys.metric(hit.y, sec.S[si]) <= sec.opts.snap) {
                            hit.section_index = static_cast<long>(si);
                            break;
                        }
                    out.hits.push_back(std::move(hit));
                }
            }
        }
        inside = now;
    }

    for (std::size_t i = 1; i < out.hits.size(); ++i)
        if (out.hits[i].t - out.hits[i - 1].t <= sec.a)
            throw integrity_error("hitting_times: gap property violated between returns");
    return out;
}

}  // namespace lipembed::section
