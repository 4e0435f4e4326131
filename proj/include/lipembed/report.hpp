#pragma once

// Experiment orchestration: build the flow and the map from a config, run
// the staged pipeline, measure the map-level properties, and write the
// artifact tree.  The verifier reloads that tree and recomputes every
// invariant that is decidable from the serialized data alone, so a tampered
// or truncated artifact turns into a FAIL record with a witness rather than
// a silently trusted report.
//
// Reports carry no timestamps and print doubles deterministically: the same
// config and seed produce byte-identical report bodies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "lipembed/common.hpp"
#include "lipembed/embed.hpp"
#include "lipembed/flow.hpp"
#include "lipembed/funcspace.hpp"
#include "lipembed/genvec.hpp"
#include "lipembed/serialize.hpp"

namespace lipembed::report {

using flow::FlowSystem;
using flow::State;
using serialize::ExperimentConfig;
using serialize::json;

struct CheckRecord {
    std::string name;
    std::string anchor;  // what property the check measures, in plain words
    double measured = 0.0;
    double bound = 0.0;
    bool pass = false;
    std::string witness;  // offending point/pair/row; empty on PASS
};

struct Report {
    std::string kind;  // "run" or "verify"
    std::string flow;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::size_t net_size = 0;
    double quad_step = 0.0;
    double kernel_width = 0.0;
    std::vector<embed::StageRecord> stages;
    std::vector<embed::DensityCert> certs;
    std::size_t perturbed = 0, skipped = 0;
    double min_final_margin = 0.0;
    std::vector<CheckRecord> checks;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }

    json to_json(const ExperimentConfig& cfg) const {
        json j;
        j["kind"] = kind;
        j["flow"] = flow;
        j["seed"] = seed;
        j["workers"] = workers;
        j["net_size"] = net_size;
        j["quad_step"] = quad_step;
        j["kernel_width"] = kernel_width;
        j["config"] = serialize::config_to_json(cfg);
        json sj = json::array();
        for (const auto& s : stages) {
            json e;
            e["kind"] = s.kind;
            e["anchor"] = s.anchor;
            e["delta"] = s.delta;
            e["delta_used"] = s.delta_used;
            e["margin_before"] = s.margin_before;
            e["margin_after"] = s.margin_after;
            e["skipped"] = s.skipped;
            sj.push_back(e);
        }
        j["stages"] = sj;
        json cj = json::array();
        for (const auto& c : certs) {
            json e;
            e["kind"] = c.kind;
            e["anchor"] = c.anchor;
            e["stage"] = c.stage;
            e["margin"] = c.margin;
            e["delta_used"] = c.delta_used;
            e["measured_only"] = c.measured_only;
            e["probes"] = c.kind == "avoid" ? c.probes.size()
                                            : c.probes_b.size() + c.probes_c.size();
            cj.push_back(e);
        }
        j["certs"] = cj;
        json pj;
        pj["perturbed"] = perturbed;
        pj["skipped"] = skipped;
        pj["min_final_margin"] = min_final_margin;
        j["pipeline"] = pj;
        json kj = json::array();
        for (const auto& c : checks) {
            json e;
            e["name"] = c.name;
            e["anchor"] = c.anchor;
            e["measured"] = c.measured;
            e["bound"] = c.bound;
            e["pass"] = c.pass;
            e["witness"] = c.witness;
            kj.push_back(e);
        }
        j["checks"] = kj;
        j["all_pass"] = all_pass();
        return j;
    }
};

inline void print_summary(const Report& rep, std::ostream& out) {
    for (const auto& c : rep.checks) {
        out << (c.pass ? "[PASS] " : "[FAIL] ") << c.name
            << " measured=" << serialize::format_double(c.measured)
            << " bound=" << serialize::format_double(c.bound);
        if (!c.witness.empty()) out << " witness=" << c.witness;
        out << "\n";
    }
    std::size_t fails = 0;
    for (const auto& c : rep.checks)
        if (!c.pass) ++fails;
    if (fails == 0)
        out << "RESULT: ALL PASS (" << rep.checks.size() << " checks)\n";
    else
        out << "RESULT: " << fails << " of " << rep.checks.size() << " checks FAILED\n";
}

// ---------------------------------------------------------------------------
// Building the experiment
// ---------------------------------------------------------------------------

inline FlowSystem build_flow(const ExperimentConfig& cfg) {
    if (cfg.flow == "logistic") return flow::make_logistic_flow();
    if (cfg.flow == "rotation") return flow::make_rotation_flow(cfg.omega);
    if (cfg.flow == "torus") return flow::make_torus_flow(1.0, cfg.omega);
    if (cfg.flow == "northsouth") return flow::make_northsouth_flow();
    throw config_error("unknown flow: " + cfg.flow);
}

inline flow::SampleNet build_net(const FlowSystem& sys, const ExperimentConfig& cfg) {
    if (!cfg.net_points.empty()) {
        flow::SampleNet net;
        net.points = cfg.net_points;
        net.mesh = cfg.mesh;
        return net;
    }
    return flow::make_net(sys, cfg.mesh);
}

struct BuiltExperiment {
    FlowSystem sys;
    flow::SampleNet net;
    flow::FixedSet fixed;
    flow::FixedPointEmbedding h;
    embed::EquivariantMap map;
    embed::Schedule schedule;
};

inline BuiltExperiment build_experiment(const ExperimentConfig& cfg) {
    BuiltExperiment b;
    b.sys = build_flow(cfg);
    b.net = build_net(b.sys, cfg);
    b.fixed = flow::detect_fixed(b.sys, b.net);

    for (const auto& fv : cfg.h) {
        if (flow::max_displacement(b.sys, fv.state) > 1e-5)
            throw config_error("config: assigned value at a moving state " +
                               embed::detail::state_label(fv.state));
        b.h.values.emplace_back(fv.state, fv.value);
    }
    for (const auto& z : b.fixed.points) {
        bool matched = false;
        for (const auto& fv : cfg.h)
            if (b.sys.metric(z, fv.state) <= 1e-6) matched = true;
        if (!matched)
            throw config_error("config: fixed state " + embed::detail::state_label(z) +
                               " has no assigned value");
    }

    if (cfg.base == "cosine") {
        if (!cfg.h.empty())
            throw config_error("config: cosine base profile conflicts with assigned values");
        b.map = embed::make_bebutov(
            b.sys, [](const State& x) { return 0.5 * (1.0 + std::cos(x[0])); }, cfg.lip_target);
    } else {
        b.map = embed::make_bebutov(b.sys, b.h, cfg.lip_target);
    }

    if (cfg.schedule == "default") {
        b.schedule = embed::default_schedule(b.sys, b.net, b.fixed);
    } else if (cfg.schedule == "anchors") {
        b.schedule.anchors = cfg.anchors;
        for (std::size_t i = 0; i < cfg.anchors.size(); ++i)
            for (std::size_t j = i + 1; j < cfg.anchors.size(); ++j)
                if (b.sys.metric(cfg.anchors[i], cfg.anchors[j]) > 4.0 * b.net.mesh)
                    b.schedule.pairs.emplace_back(cfg.anchors[i], cfg.anchors[j]);
    }
    return b;
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

namespace detail {

inline void add_check(Report& rep, const std::string& name, const std::string& anchor,
                      double measured, double bound, bool pass, const std::string& witness) {
    CheckRecord c;
    c.name = name;
    c.anchor = anchor;
    c.measured = measured;
    c.bound = bound;
    c.pass = pass;
    c.witness = pass ? "" : witness;
    rep.checks.push_back(std::move(c));
}

inline std::string stage_file(std::size_t k) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "stage_%02zu", k);
    return buf;
}

inline std::string line_file(std::size_t i) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "line_%04zu.csv", i);
    return buf;
}

/// Up to k states spread evenly over the net.
inline std::vector<State> spread_states(const std::vector<State>& pts, std::size_t k) {
    std::vector<State> out;
    if (pts.empty()) return out;
    std::size_t stride = std::max<std::size_t>(1, pts.size() / std::max<std::size_t>(1, k));
    for (std::size_t i = 0; i < pts.size() && out.size() < k; i += stride) out.push_back(pts[i]);
    return out;
}

struct SlopeScan {
    double worst = 0.0;
    std::size_t line = 0, seg = 0;
};

inline SlopeScan scan_slopes(const std::vector<funcspace::LineFn>& lines) {
    SlopeScan s;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& vs = lines[i].values();
        double step = lines[i].step();
        for (std::size_t k = 0; k + 1 < vs.size(); ++k) {
            double slope = std::abs(vs[k + 1] - vs[k]) / step;
            if (slope > s.worst) {
                s.worst = slope;
                s.line = i;
                s.seg = k;
            }
        }
    }
    return s;
}

struct EquivPair {
    std::size_t index = 0;   // net index of the base state
    double shift = 0.0;      // grid-multiple time shift
    double residual = 0.0;   // max node gap on the overlap
    funcspace::LineFn base = funcspace::LineFn::constant(1.0, 1, 0.0);
    funcspace::LineFn shifted = funcspace::LineFn::constant(1.0, 1, 0.0);
};

inline double pair_residual(const funcspace::LineFn& base, const funcspace::LineFn& shifted,
                            long offset) {
    const auto& bv = base.values();
    const auto& sv = shifted.values();
    double worst = 0.0;
    for (std::size_t i = 0; i < sv.size(); ++i) {
        long bi = static_cast<long>(i) + offset;
        if (bi < 0 || bi >= static_cast<long>(bv.size())) continue;
        worst = std::max(worst, std::abs(bv[static_cast<std::size_t>(bi)] - sv[i]));
    }
    return worst;
}

inline std::vector<EquivPair> make_equiv_pairs(const embed::EquivariantMap& map,
                                               const std::vector<State>& pts, double half_width) {
    std::vector<EquivPair> out;
    std::size_t K = std::min<std::size_t>(5, pts.size());
    if (K == 0) return out;
    std::size_t stride = std::max<std::size_t>(1, pts.size() / K);
    for (std::size_t k = 0; k < K; ++k) {
        EquivPair p;
        p.index = (k * stride) % pts.size();
        long ticks = 37 * static_cast<long>(k + 1);
        p.shift = map.quad_step * static_cast<double>(ticks);
        p.base = map.eval_line(pts[p.index], half_width);
        p.shifted = map.eval_line(flow::evolve(map.sys, pts[p.index], p.shift), half_width);
        p.residual = pair_residual(p.base, p.shifted, ticks);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace detail

/// Execute the configured experiment, measure every map-level property, and
/// (unless out_dir is empty) write the artifact tree for later verification.
inline Report run_experiment(const ExperimentConfig& cfg, const std::string& out_dir_override = "",
                             bool write_artifacts = true,
                             std::vector<funcspace::LineFn>* lines_out = nullptr) {
    namespace fs = std::filesystem;
    Report rep;
    rep.kind = "run";
    rep.flow = cfg.flow;
    rep.seed = cfg.seed;
    rep.workers = worker_count();

    auto built = build_experiment(cfg);
    auto& map = built.map;
    rep.net_size = built.net.points.size();
    rep.quad_step = map.quad_step;
    rep.kernel_width = map.kernel_width;

    double base_bound = std::min(1.0, cfg.lip_target) + 1e-3;
    double base_lip =
        embed::map_lipschitz(map, detail::spread_states(built.net.points, 9), 4.0);
    detail::add_check(rep, "base_slope",
                      "unit-mass kernel with total variation 4/w caps every base line slope",
                      base_lip, base_bound, base_lip <= base_bound, "");

    embed::PipelineOpts popts;
    popts.delta0 = cfg.delta0;
    popts.seed = cfg.seed;
    popts.crdist_nmax = cfg.n_max;
    popts.match_tol = cfg.tol_match;
    bool pipeline_ok = true;
    try {
        auto pl = embed::run_pipeline(map, built.net, built.schedule, popts);
        rep.stages = std::move(pl.stages);
        rep.certs = std::move(pl.certs);
        rep.perturbed = pl.perturbed;
        rep.skipped = pl.skipped;
        rep.min_final_margin = pl.min_final_margin;
    } catch (const std::exception& e) {
        pipeline_ok = false;
        detail::add_check(rep, "pipeline", "staged construction ran to completion", 0.0, 0.0,
                          false, e.what());
    }

    double W_line = static_cast<double>(cfg.n_max) + 1.0;
    std::vector<funcspace::LineFn> lines;
    lines.reserve(built.net.points.size());
    for (const auto& x : built.net.points) lines.push_back(map.eval_line(x, W_line));
    if (lines_out) *lines_out = lines;

    auto slopes = detail::scan_slopes(lines);
    detail::add_check(rep, "map_slope",
                      "convex mixes and unit-slope window interpolants keep lines one-Lipschitz",
                      slopes.worst, 1.0 + 1e-6, slopes.worst <= 1.0 + 1e-6,
                      "line " + std::to_string(slopes.line) + " segment " +
                          std::to_string(slopes.seg));

    double inj = std::numeric_limits<double>::infinity();
    std::size_t inj_i = 0, inj_j = 0;
    std::vector<std::tuple<std::size_t, std::size_t, double>> pair_dists;
    for (std::size_t i = 0; i < lines.size(); ++i)
        for (std::size_t j = i + 1; j < lines.size(); ++j) {
            double d = funcspace::cr_dist(lines[i], lines[j], cfg.n_max);
            pair_dists.emplace_back(i, j, d);
            if (d < inj) {
                inj = d;
                inj_i = i;
                inj_j = j;
            }
        }
    if (lines.size() >= 2)
        detail::add_check(rep, "injectivity", "distinct net states map to metric-separated lines",
                          inj, 0.0, inj > 0.0,
                          "pair (" + std::to_string(inj_i) + "," + std::to_string(inj_j) + ")");

    auto epairs = detail::make_equiv_pairs(map, built.net.points, 4.0);
    double eres = 0.0;
    std::size_t eworst = 0;
    for (std::size_t k = 0; k < epairs.size(); ++k)
        if (epairs[k].residual > eres) {
            eres = epairs[k].residual;
            eworst = k;
        }
    detail::add_check(rep, "equivariance_lines",
                      "shifting the state by s and sampling matches shifting the line by s", eres,
                      1e-5, eres <= 1e-5, "pair " + std::to_string(eworst));

    double epoint = embed::equivariance_residual(
        map, detail::spread_states(built.net.points, 6), 12, derive_seed(cfg.seed, 1001));
    detail::add_check(rep, "equivariance_pointwise",
                      "pointwise evaluation commutes with grid-multiple time shifts", epoint, 1e-5,
                      epoint <= 1e-5, "");

    if (!built.h.values.empty()) {
        double fres = embed::fixed_residual(map, built.h);
        detail::add_check(rep, "fixed_values",
                          "states with zero velocity evaluate to their assigned constants", fres,
                          cfg.tol_fix, fres <= cfg.tol_fix, "");
    }

    for (const auto& c : rep.certs) {
        std::string name = detail::stage_file(c.stage) + "_" + c.kind;
        std::string anchor = c.kind == "avoid"
                                 ? "window oscillation keeps the neighborhood away from constants"
                                 : "images of the two anchor neighborhoods stay metric-separated";
        detail::add_check(rep, name, anchor, c.margin, 0.0, c.margin > 0.0, c.anchor);
    }
    if (pipeline_ok && !rep.certs.empty())
        detail::add_check(rep, "margin_floor",
                          "every separation certificate re-verified against the final map",
                          rep.min_final_margin, 0.0, rep.min_final_margin > 0.0, "");

    if (!write_artifacts) return rep;

    fs::path out(out_dir_override.empty() ? cfg.out_dir : out_dir_override);
    fs::create_directories(out / "lines");
    fs::create_directories(out / "equivariance");
    serialize::write_text_file(out / "net.csv", serialize::net_to_csv(built.net.points));
    for (std::size_t i = 0; i < lines.size(); ++i)
        serialize::write_text_file(out / "lines" / detail::line_file(i),
                                   serialize::line_to_csv(lines[i]));

    std::string pd = "i,j,dist\n";
    for (const auto& [i, j, d] : pair_dists)
        pd += std::to_string(i) + "," + std::to_string(j) + "," + serialize::format_double(d) +
              "\n";
    serialize::write_text_file(out / "pairwise_crdist.csv", pd);

    std::string shifts = "pair,index,shift,residual\n";
    for (std::size_t k = 0; k < epairs.size(); ++k) {
        char prefix[24];
        std::snprintf(prefix, sizeof(prefix), "pair_%02zu", k);
        serialize::write_text_file(out / "equivariance" / (std::string(prefix) + "_base.csv"),
                                   serialize::line_to_csv(epairs[k].base));
        serialize::write_text_file(out / "equivariance" / (std::string(prefix) + "_shifted.csv"),
                                   serialize::line_to_csv(epairs[k].shifted));
        shifts += std::to_string(k) + "," + std::to_string(epairs[k].index) + "," +
                  serialize::format_double(epairs[k].shift) + "," +
                  serialize::format_double(epairs[k].residual) + "\n";
    }
    serialize::write_text_file(out / "equivariance" / "shifts.csv", shifts);

    std::string fx = "net_index,value\n";
    for (const auto& [z, target] : built.h.values)
        for (std::size_t i = 0; i < built.net.points.size(); ++i)
            if (built.sys.metric(z, built.net.points[i]) <= 1e-9) {
                fx += std::to_string(i) + "," + serialize::format_double(target) + "\n";
                break;
            }
    serialize::write_text_file(out / "fixed.csv", fx);

    bool any_layer = !map.layers.empty();
    if (any_layer) {
        fs::create_directories(out / "families");
        fs::create_directories(out / "sections");
    }
    std::size_t layer_idx = 0;
    for (std::size_t s = 0; s < rep.stages.size(); ++s) {
        if (rep.stages[s].skipped) continue;
        const auto& L = map.layers[layer_idx++];
        json fj;
        fj["stage"] = s;
        fj["kind"] = rep.stages[s].kind;
        fj["a"] = L.plan.a;
        fj["delta"] = L.plan.delta;
        fj["tau"] = L.plan.tau;
        fj["b"] = L.plan.b;
        fj["c"] = L.plan.c;
        fj["Delta"] = L.plan.Delta;
        fj["box"] = L.plan.box;
        fj["incr"] = L.plan.incr;
        fj["N"] = L.plan.N;
        fj["L"] = L.plan.L;
        fj["seed"] = L.plan.family.seed;
        fj["min_margin"] = L.plan.family.min_margin;
        fj["rows"] = L.plan.f_rows;
        fj["vectors"] = L.plan.family.vectors;
        serialize::write_text_file(out / "families" / (detail::stage_file(s) + ".json"),
                                   fj.dump(2) + "\n");

        std::string sc = "section,coords\n";
        for (std::size_t si = 0; si < L.secs.size(); ++si)
            for (const auto& pt : L.secs[si].S) {
                sc += std::to_string(si);
                for (double cdd : pt) sc += "," + serialize::format_double(cdd);
                sc += "\n";
            }
        serialize::write_text_file(out / "sections" / (detail::stage_file(s) + ".csv"), sc);
    }

    serialize::write_text_file(out / "report.json", rep.to_json(cfg).dump(2) + "\n");
    return rep;
}

// ---------------------------------------------------------------------------
// Verifying artifacts
// ---------------------------------------------------------------------------

/// Recompute every invariant decidable from the artifact tree alone: grid
/// shape, value range, slopes, the metric matrix, the shifted-line residuals,
/// the fixed-state constants, and the stored perturbation families.
inline Report verify_artifacts(const ExperimentConfig& cfg, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path root(dir);
    Report rep;
    rep.kind = "verify";
    rep.flow = cfg.flow;
    rep.seed = cfg.seed;
    rep.workers = worker_count();

    json run_json;
    try {
        run_json = json::parse(serialize::read_text_file(root / "report.json"));
    } catch (const nlohmann::json::exception& e) {
        throw config_error("verify: report.json unreadable: " + std::string(e.what()));
    }
    std::size_t net_size = run_json.value("net_size", std::size_t{0});
    double quad_step = run_json.value("quad_step", 0.01);
    rep.net_size = net_size;
    rep.quad_step = quad_step;
    rep.kernel_width = run_json.value("kernel_width", 0.0);

    bool cfg_match = run_json.contains("config") &&
                     run_json.at("config") == serialize::config_to_json(cfg);
    detail::add_check(rep, "config_match", "artifact was produced by the supplied config", 0.0,
                      0.0, cfg_match, "stored config differs");

    auto net_pts = serialize::parse_net_csv(serialize::read_text_file(root / "net.csv"));
    detail::add_check(rep, "net_size", "net file row count matches the recorded net size",
                      static_cast<double>(net_pts.size()), static_cast<double>(net_size),
                      net_pts.size() == net_size, "net.csv");

    std::vector<funcspace::LineFn> lines;
    double worst_grid = 0.0, worst_range = 0.0, worst_slope = 0.0;
    std::string grid_wit, range_wit, slope_wit, rebuild_wit;
    bool rebuild_ok = true;
    for (std::size_t i = 0; i < net_size; ++i) {
        auto raw = serialize::parse_line_csv(
            serialize::read_text_file(root / "lines" / detail::line_file(i)));
        for (std::size_t k = 0; k + 1 < raw.ts.size(); ++k) {
            double g = std::abs(raw.ts[k + 1] - raw.ts[k] - quad_step);
            if (g > worst_grid) {
                worst_grid = g;
                grid_wit = "line " + std::to_string(i) + " row " + std::to_string(k);
            }
        }
        for (std::size_t k = 0; k < raw.vs.size(); ++k) {
            double r = std::max(-raw.vs[k], raw.vs[k] - 1.0);
            if (r > worst_range) {
                worst_range = r;
                range_wit = "line " + std::to_string(i) + " row " + std::to_string(k);
            }
        }
        for (std::size_t k = 0; k + 1 < raw.vs.size(); ++k) {
            double slope = std::abs(raw.vs[k + 1] - raw.vs[k]) / quad_step;
            if (slope > worst_slope) {
                worst_slope = slope;
                slope_wit = "line " + std::to_string(i) + " row " + std::to_string(k);
            }
        }
        if (rebuild_ok) {
            try {
                lines.emplace_back(-raw.ts.front(), raw.vs);
            } catch (const std::exception& e) {
                rebuild_ok = false;
                rebuild_wit = "line " + std::to_string(i) + ": " + e.what();
            }
        }
    }
    detail::add_check(rep, "line_grid", "sampled lines sit on the uniform evaluation grid",
                      worst_grid, 1e-9, worst_grid <= 1e-9, grid_wit);
    detail::add_check(rep, "line_range", "sampled values stay inside the unit interval",
                      worst_range, 1e-12, worst_range <= 1e-12, range_wit);
    detail::add_check(rep, "line_slope", "sampled lines are one-Lipschitz on the grid",
                      worst_slope, 1.0 + 1e-6, worst_slope <= 1.0 + 1e-6, slope_wit);
    detail::add_check(rep, "line_rebuild", "every line reparses into a valid sampled function",
                      rebuild_ok ? 0.0 : 1.0, 0.0, rebuild_ok, rebuild_wit);

    if (rebuild_ok && lines.size() == net_size && net_size >= 2) try {
            double worst_gap = 0.0, min_stored = std::numeric_limits<double>::infinity();
            std::string gap_wit, min_wit;
            std::size_t rows = 0;
            std::istringstream in(serialize::read_text_file(root / "pairwise_crdist.csv"));
            std::string row;
            std::getline(in, row);  // header
            while (std::getline(in, row)) {
                if (row.empty()) continue;
                ++rows;
                std::istringstream cells(row);
                std::string cell;
                std::getline(cells, cell, ',');
                std::size_t i = std::stoul(cell);
                std::getline(cells, cell, ',');
                std::size_t j = std::stoul(cell);
                std::getline(cells, cell, ',');
                double stored = std::stod(cell);
                std::string label = "pair (" + std::to_string(i) + "," + std::to_string(j) + ")";
                if (stored < min_stored) {
                    min_stored = stored;
                    min_wit = label;
                }
                double re = funcspace::cr_dist(lines.at(i), lines.at(j), cfg.n_max);
                double gap = std::abs(re - stored);
                if (gap > worst_gap) {
                    worst_gap = gap;
                    gap_wit = label;
                }
            }
            bool count_ok = rows == net_size * (net_size - 1) / 2;
            detail::add_check(rep, "crdist_recompute",
                              "stored pairwise metric distances match recomputation from the lines",
                              worst_gap, 1e-9, count_ok && worst_gap <= 1e-9,
                              count_ok ? gap_wit : "row count mismatch");
            detail::add_check(rep, "crdist_positive",
                              "distinct net states map to metric-separated lines", min_stored, 0.0,
                              min_stored > 0.0, min_wit);
        } catch (const std::exception& e) {
            detail::add_check(rep, "crdist_recompute",
                              "stored pairwise metric distances match recomputation from the lines",
                              0.0, 1e-9, false, e.what());
        }

    try {
        double worst = 0.0, worst_gap = 0.0;
        std::string wit;
        std::istringstream in(serialize::read_text_file(root / "equivariance" / "shifts.csv"));
        std::string row;
        std::getline(in, row);
        while (std::getline(in, row)) {
            if (row.empty()) continue;
            std::istringstream cells(row);
            std::string cell;
            std::getline(cells, cell, ',');
            std::size_t k = std::stoul(cell);
            std::getline(cells, cell, ',');  // net index, informational
            std::getline(cells, cell, ',');
            double shift = std::stod(cell);
            std::getline(cells, cell, ',');
            double stored = std::stod(cell);
            char prefix[24];
            std::snprintf(prefix, sizeof(prefix), "pair_%02zu", k);
            auto braw = serialize::parse_line_csv(serialize::read_text_file(
                root / "equivariance" / (std::string(prefix) + "_base.csv")));
            auto sraw = serialize::parse_line_csv(serialize::read_text_file(
                root / "equivariance" / (std::string(prefix) + "_shifted.csv")));
            long off = std::lround(shift / quad_step);
            funcspace::LineFn bl(-braw.ts.front(), braw.vs);
            funcspace::LineFn sl(-sraw.ts.front(), sraw.vs);
            double re = detail::pair_residual(bl, sl, off);
            double gap = std::abs(re - stored);
            if (re > worst || gap > worst_gap) wit = "pair " + std::to_string(k);
            worst = std::max(worst, re);
            worst_gap = std::max(worst_gap, gap);
        }
        detail::add_check(rep, "equivariance_files",
                          "shifting the state by s and sampling matches shifting the line by s",
                          worst, 1e-5, worst <= 1e-5 && worst_gap <= 1e-9, wit);
    } catch (const std::exception& e) {
        detail::add_check(rep, "equivariance_files",
                          "shifting the state by s and sampling matches shifting the line by s",
                          0.0, 1e-5, false, e.what());
    }

    if (rebuild_ok) try {
            double worst = 0.0;
            std::string wit;
            std::istringstream in(serialize::read_text_file(root / "fixed.csv"));
            std::string row;
            std::getline(in, row);
            while (std::getline(in, row)) {
                if (row.empty()) continue;
                auto comma = row.find(',');
                std::size_t idx = std::stoul(row.substr(0, comma));
                double target = std::stod(row.substr(comma + 1));
                for (double v : lines.at(idx).values())
                    if (std::abs(v - target) > worst) {
                        worst = std::abs(v - target);
                        wit = "line " + std::to_string(idx);
                    }
            }
            detail::add_check(
                rep, "fixed_lines",
                "states with zero velocity keep constant lines at their assigned values", worst,
                cfg.tol_fix, worst <= cfg.tol_fix, wit);
        } catch (const std::exception& e) {
            detail::add_check(
                rep, "fixed_lines",
                "states with zero velocity keep constant lines at their assigned values", 0.0,
                cfg.tol_fix, false, e.what());
        }

    try {
        double min_margin = std::numeric_limits<double>::infinity();
        bool any = false, ok = true;
        std::string wit;
        for (std::size_t s = 0; run_json.contains("stages") && s < run_json["stages"].size();
             ++s) {
            const auto& sj = run_json["stages"][s];
            if (sj.value("skipped", true)) continue;
            any = true;
            fs::path fpath = root / "families" / (detail::stage_file(s) + ".json");
            fs::path spath = root / "sections" / (detail::stage_file(s) + ".csv");
            if (!fs::exists(fpath) || !fs::exists(spath)) {
                ok = false;
                wit = detail::stage_file(s) + " artifacts missing";
                continue;
            }
            json fj = json::parse(serialize::read_text_file(fpath));
            genvec::Matrix rows = fj.at("rows").get<genvec::Matrix>();
            genvec::VecFamily fam;
            fam.vectors = fj.at("vectors").get<genvec::Matrix>();
            fam.m = fam.vectors.size();
            fam.dim = fam.m ? fam.vectors[0].size() : 0;
            fam.provenance = "sampled";
            double box = fj.at("box").get<double>();
            double incr = fj.at("incr").get<double>();
            std::size_t L = fj.at("L").get<std::size_t>();
            genvec::FamilyCheck chk =
                L > 0 ? genvec::check_family_separating(rows, fam, box, incr, L)
                      : genvec::check_family_avoid(rows, fam, box, incr);
            if (!chk.ok) {
                ok = false;
                wit = detail::stage_file(s) + ": " + chk.detail;
            }
            min_margin = std::min(min_margin, chk.min_margin);
        }
        if (any)
            detail::add_check(rep, "family_margins",
                              "stored perturbation families re-pass the independence checks",
                              min_margin, cfg.rank_tol, ok && min_margin >= cfg.rank_tol, wit);
    } catch (const std::exception& e) {
        detail::add_check(rep, "family_margins",
                          "stored perturbation families re-pass the independence checks", 0.0,
                          cfg.rank_tol, false, e.what());
    }

    {
        bool ok = true;
        std::string wit;
        double min_margin = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; run_json.contains("certs") && c < run_json["certs"].size(); ++c) {
            double m = run_json["certs"][c].value("margin", 0.0);
            min_margin = std::min(min_margin, m);
            if (!(m > 0.0)) {
                ok = false;
                wit = "cert " + std::to_string(c);
            }
        }
        if (run_json.contains("certs") && !run_json["certs"].empty())
            detail::add_check(rep, "cert_margins", "every recorded certificate margin is positive",
                              min_margin, 0.0, ok, wit);
    }

    return rep;
}

}  // namespace lipembed::report
