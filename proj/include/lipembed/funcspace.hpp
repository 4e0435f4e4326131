#pragma once

// Grid representations of one-Lipschitz functions into [0,1], the
// compact-open metric on them, and the handful of operations the rest of
// the library is built from (translation, sup distance, convex mixing,
// oscillation, Lipschitz certification).
//
// All functions are piecewise linear on a uniform grid.  A piecewise-linear
// function is one-Lipschitz iff every grid increment is at most the grid
// step, so certification reduces to scanning adjacent differences.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lipembed/common.hpp"

namespace lipembed::funcspace {

// Tolerances for validating stored values.  Constructions keep increments
// exact; the slack only absorbs float rounding from interpolation.
inline constexpr double kRangeSlack = 1e-12;
inline constexpr double kSlopeSlack = 1e-9;

namespace detail {

inline void validate_values(std::vector<double>& vals, double step, const char* what) {
    for (double& v : vals) {
        if (v < -kRangeSlack || v > 1.0 + kRangeSlack)
            throw integrity_error(std::string(what) + ": value outside [0,1]");
        v = std::clamp(v, 0.0, 1.0);
    }
    double cap = step * (1.0 + kSlopeSlack) + 1e-15;
    for (std::size_t i = 1; i < vals.size(); ++i) {
        if (std::abs(vals[i] - vals[i - 1]) > cap)
            throw integrity_error(std::string(what) + ": grid increment exceeds step at index " +
                                  std::to_string(i));
    }
}

// Piecewise-linear interpolation on a uniform grid with clamped endpoints.
inline double interp(const std::vector<double>& vals, double t0, double step, double t) {
    double u = (t - t0) / step;
    if (u <= 0.0) return vals.front();
    double last = static_cast<double>(vals.size() - 1);
    if (u >= last) return vals.back();
    double fi = std::floor(u);
    auto i = static_cast<std::size_t>(fi);
    double frac = u - fi;
    return vals[i] + frac * (vals[i + 1] - vals[i]);
}

inline double max_grid_slope(const std::vector<double>& vals, double step) {
    double m = 0.0;
    for (std::size_t i = 1; i < vals.size(); ++i)
        m = std::max(m, std::abs(vals[i] - vals[i - 1]));
    return vals.size() > 1 ? m / step : 0.0;
}

}  // namespace detail

/// One-Lipschitz function on a window [0, a], sampled on a uniform grid.
class WindowFn {
public:
    WindowFn(double a, std::vector<double> values) : a_(a), values_(std::move(values)) {
        if (!(a > 0.0)) throw config_error("WindowFn: window length must be positive");
        if (values_.size() < 2) throw config_error("WindowFn: need at least two samples");
        step_ = a_ / static_cast<double>(values_.size() - 1);
        detail::validate_values(values_, step_, "WindowFn");
    }

    static WindowFn constant(double a, std::size_t intervals, double level) {
        return WindowFn(a, std::vector<double>(intervals + 1, level));
    }

    template <typename F>
    static WindowFn from_samples(double a, std::size_t intervals, F&& f) {
        std::vector<double> v(intervals + 1);
        double step = a / static_cast<double>(intervals);
        for (std::size_t i = 0; i <= intervals; ++i) v[i] = f(step * static_cast<double>(i));
        return WindowFn(a, std::move(v));
    }

    double a() const { return a_; }
    double step() const { return step_; }
    std::size_t size() const { return values_.size(); }
    const std::vector<double>& values() const { return values_; }

    /// Evaluate at t; arguments outside [0, a] clamp to the endpoint values.
    double operator()(double t) const { return detail::interp(values_, 0.0, step_, t); }

private:
    double a_;
    double step_;
    std::vector<double> values_;
};

/// One-Lipschitz function on [-T, T] with constant continuation beyond the
/// window.  valid_half_width tracks how much of the window still reflects
/// the underlying function after translations; it starts at T and shrinks.
class LineFn {
public:
    LineFn(double half_width, std::vector<double> values, double valid_half_width = -1.0)
        : half_width_(half_width), values_(std::move(values)) {
        if (!(half_width > 0.0)) throw config_error("LineFn: half width must be positive");
        if (values_.size() < 3 || values_.size() % 2 == 0)
            throw config_error("LineFn: need an odd sample count >= 3 so that t=0 is a node");
        step_ = 2.0 * half_width_ / static_cast<double>(values_.size() - 1);
        valid_half_width_ = valid_half_width < 0.0 ? half_width_ : valid_half_width;
        if (valid_half_width_ > half_width_ + 1e-12)
            throw config_error("LineFn: valid half width exceeds window");
        detail::validate_values(values_, step_, "LineFn");
    }

    static LineFn constant(double half_width, std::size_t half_intervals, double level) {
        return LineFn(half_width, std::vector<double>(2 * half_intervals + 1, level));
    }

    template <typename F>
    static LineFn from_samples(double half_width, std::size_t half_intervals, F&& f) {
        std::vector<double> v(2 * half_intervals + 1);
        double step = half_width / static_cast<double>(half_intervals);
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = f(-half_width + step * static_cast<double>(i));
        return LineFn(half_width, std::move(v));
    }

    double half_width() const { return half_width_; }
    double valid_half_width() const { return valid_half_width_; }
    double step() const { return step_; }
    std::size_t size() const { return values_.size(); }
    const std::vector<double>& values() const { return values_; }
    double node_time(std::size_t i) const {
        return -half_width_ + step_ * static_cast<double>(i);
    }

    /// Evaluate at t; beyond +-T the continuation is constant.
    double operator()(double t) const {
        return detail::interp(values_, -half_width_, step_, t);
    }

private:
    double half_width_;
    double step_;
    double valid_half_width_;
    std::vector<double> values_;
};

/// Constant function, convertible to either grid representation.
struct ConstFn {
    double level = 0.0;

    ConstFn() = default;
    explicit ConstFn(double l) : level(l) {
        if (l < 0.0 || l > 1.0) throw config_error("ConstFn: level outside [0,1]");
    }
    WindowFn as_window(double a, std::size_t intervals) const {
        return WindowFn::constant(a, intervals, level);
    }
    LineFn as_line(double half_width, std::size_t half_intervals) const {
        return LineFn::constant(half_width, half_intervals, level);
    }
};

/// Metric of uniform convergence on compact sets, truncated at n_max:
/// sum over n of 2^-n * max_{|t|<=n} |phi - psi|.  The tail beyond n_max
/// contributes at most 2^-n_max, so truncations bracket the full series.
/// For functions sharing one grid the inner sup is exact: the difference is
/// piecewise linear, so its max over [-n, n] is attained at a grid node or
/// at the interval ends.
inline double cr_dist(const LineFn& phi, const LineFn& psi, int n_max = 30) {
    if (std::abs(phi.step() - psi.step()) > 1e-15 || phi.size() != psi.size() ||
        std::abs(phi.half_width() - psi.half_width()) > 1e-12)
        throw config_error("cr_dist: functions live on different grids");
    if (n_max < 1) throw config_error("cr_dist: n_max must be positive");
    double usable = std::min(phi.valid_half_width(), psi.valid_half_width());
    if (static_cast<double>(n_max) > usable + 1e-9)
        throw domain_error("cr_dist: n_max exceeds the valid half width");

    // One pass out from t=0, keeping the running sup and emitting a term
    // whenever the frontier crosses the next integer radius.
    double total = 0.0;
    double weight = 0.5;
    double running = std::abs(phi(0.0) - psi(0.0));
    std::size_t mid = phi.size() / 2;
    int n = 1;
    for (std::size_t k = 1; n <= n_max; ++k) {
        double t = phi.step() * static_cast<double>(k);
        while (n <= n_max && t >= static_cast<double>(n)) {
            double edge = static_cast<double>(n);
            double sup = std::max({running, std::abs(phi(edge) - psi(edge)),
                                   std::abs(phi(-edge) - psi(-edge))});
            total += weight * sup;
            running = sup;
            weight *= 0.5;
            ++n;
        }
        if (n > n_max) break;
        if (mid + k < phi.size())
            running = std::max(running, std::abs(phi.values()[mid + k] - psi.values()[mid + k]));
        if (k <= mid)
            running = std::max(running, std::abs(phi.values()[mid - k] - psi.values()[mid - k]));
    }
    return total;
}

/// Time translation (s, phi) -> phi(. + s), resampled on the same grid.
/// Shrinks the valid half width by |s|; exhausting it entirely is an error.
inline LineFn translate(const LineFn& phi, double s) {
    double remaining = phi.valid_half_width() - std::abs(s);
    if (remaining <= 0.0)
        throw domain_error("translate: window exhausted, no valid samples remain");
    std::vector<double> v(phi.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = phi(phi.node_time(i) + s);
    return LineFn(phi.half_width(), std::move(v), remaining);
}

inline double lip_constant(const WindowFn& f) {
    return detail::max_grid_slope(f.values(), f.step());
}
inline double lip_constant(const LineFn& f) {
    return detail::max_grid_slope(f.values(), f.step());
}

/// Sup distance for functions on a shared grid.
inline double dist_sup(const WindowFn& f, const WindowFn& g) {
    if (f.size() != g.size() || std::abs(f.a() - g.a()) > 1e-12)
        throw config_error("dist_sup: window grids do not match");
    double m = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        m = std::max(m, std::abs(f.values()[i] - g.values()[i]));
    return m;
}
inline double dist_sup(const LineFn& f, const LineFn& g) {
    if (f.size() != g.size() || std::abs(f.half_width() - g.half_width()) > 1e-12)
        throw config_error("dist_sup: line grids do not match");
    double m = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        m = std::max(m, std::abs(f.values()[i] - g.values()[i]));
    return m;
}

inline double oscillation(const WindowFn& f) {
    auto [lo, hi] = std::minmax_element(f.values().begin(), f.values().end());
    return *hi - *lo;
}
inline double oscillation(const LineFn& f) {
    auto [lo, hi] = std::minmax_element(f.values().begin(), f.values().end());
    return *hi - *lo;
}

/// Pointwise convex mix (1-lambda) f + lambda g; Lipschitz constants mix
/// the same way, which is what the density stages rely on.
inline WindowFn convex_mix(const WindowFn& f, const WindowFn& g, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) throw config_error("convex_mix: lambda outside [0,1]");
    if (f.size() != g.size() || std::abs(f.a() - g.a()) > 1e-12)
        throw config_error("convex_mix: window grids do not match");
    std::vector<double> v(f.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = (1.0 - lambda) * f.values()[i] + lambda * g.values()[i];
    return WindowFn(f.a(), std::move(v));
}
inline LineFn convex_mix(const LineFn& f, const LineFn& g, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) throw config_error("convex_mix: lambda outside [0,1]");
    if (f.size() != g.size() || std::abs(f.half_width() - g.half_width()) > 1e-12)
        throw config_error("convex_mix: line grids do not match");
    std::vector<double> v(f.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = (1.0 - lambda) * f.values()[i] + lambda * g.values()[i];
    return LineFn(f.half_width(), std::move(v),
                  std::min(f.valid_half_width(), g.valid_half_width()));
}

/// Finite eta-net witnessing total boundedness of the window space at grid
/// resolution: step eta/2 (rounded down so it divides a), values quantized
/// to multiples of the step, increments at most one quantum.  Floor-quantizing
/// any one-Lipschitz grid function lands in the net within eta in sup norm.
inline std::vector<WindowFn> quantized_net(double a, double eta) {
    if (!(a > 0.0) || !(eta > 0.0)) throw config_error("quantized_net: need a > 0 and eta > 0");
    auto steps = static_cast<std::size_t>(std::ceil(2.0 * a / eta - 1e-12));
    double q = a / static_cast<double>(steps);
    auto levels = static_cast<long>(std::floor(1.0 / q + 1e-9));

    std::vector<WindowFn> net;
    std::vector<long> path(steps + 1, 0);
    // Depth-first enumeration over level paths with steps in {-1, 0, +1}.
    auto emit = [&] {
        std::vector<double> v(steps + 1);
        for (std::size_t i = 0; i <= steps; ++i)
            v[i] = std::min(1.0, q * static_cast<double>(path[i]));
        net.push_back(WindowFn(a, std::move(v)));
    };
    std::function<void(std::size_t)> walk = [&](std::size_t depth) {
        if (depth == steps) {
            emit();
            return;
        }
        for (long d = -1; d <= 1; ++d) {
            long next = path[depth] + d;
            if (next < 0 || next > levels) continue;
            path[depth + 1] = next;
            walk(depth + 1);
        }
    };
    for (long start = 0; start <= levels; ++start) {
        path[0] = start;
        walk(0);
    }
    return net;
}

/// The net member covering f (floor quantization); dist_sup(f, cover) < step.
inline WindowFn quantize_to_net(const WindowFn& f, double eta) {
    auto steps = static_cast<std::size_t>(std::ceil(2.0 * f.a() / eta - 1e-12));
    if (steps + 1 != f.size())
        throw config_error("quantize_to_net: sample grid does not match the net grid");
    double q = f.a() / static_cast<double>(steps);
    std::vector<double> v(f.size());
    for (std::size_t i = 0; i < f.size(); ++i)
        v[i] = std::min(1.0, q * std::floor(f.values()[i] / q + 1e-12));
    return WindowFn(f.a(), std::move(v));
}

}  // namespace lipembed::funcspace
