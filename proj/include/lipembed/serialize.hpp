#pragma once

// Artifact I/O: experiment configs (JSON), sampled lines and nets (CSV), and
// the helpers shared by the runner and the verifier.  All numeric output is
// printed with 17 significant digits so a written artifact reparses to the
// same doubles, and nothing here stamps wall-clock state: identical inputs
// produce byte-identical files.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipembed/common.hpp"
#include "lipembed/flow.hpp"
#include "lipembed/funcspace.hpp"

namespace lipembed::serialize {

using json = nlohmann::ordered_json;
using flow::State;

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw config_error("cannot open for writing: " + path.string());
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw config_error("short write: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Line CSV
// ---------------------------------------------------------------------------

inline std::string line_to_csv(const funcspace::LineFn& line) {
    std::string out = "t,value\n";
    for (std::size_t i = 0; i < line.values().size(); ++i) {
        out += format_double(line.node_time(i));
        out += ",";
        out += format_double(line.values()[i]);
        out += "\n";
    }
    return out;
}

/// Parsed but unvalidated samples; the verifier checks the grid and slopes
/// itself so that a corrupted file yields a FAIL record, not a crash.
struct RawLine {
    std::vector<double> ts, vs;
};

inline RawLine parse_line_csv(const std::string& body) {
    RawLine raw;
    std::istringstream in(body);
    std::string row;
    if (!std::getline(in, row) || row != "t,value")
        throw config_error("line csv: missing t,value header");
    while (std::getline(in, row)) {
        if (row.empty()) continue;
        auto comma = row.find(',');
        if (comma == std::string::npos) throw config_error("line csv: malformed row " + row);
        raw.ts.push_back(std::stod(row.substr(0, comma)));
        raw.vs.push_back(std::stod(row.substr(comma + 1)));
    }
    if (raw.ts.size() < 2) throw config_error("line csv: too few rows");
    return raw;
}

// ---------------------------------------------------------------------------
// Net CSV
// ---------------------------------------------------------------------------

inline std::string net_to_csv(const std::vector<State>& pts) {
    std::string out = "index,coords\n";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        out += std::to_string(i);
        for (double c : pts[i]) {
            out += ",";
            out += format_double(c);
        }
        out += "\n";
    }
    return out;
}

inline std::vector<State> parse_net_csv(const std::string& body) {
    std::vector<State> pts;
    std::istringstream in(body);
    std::string row;
    if (!std::getline(in, row) || row.rfind("index,", 0) != 0)
        throw config_error("net csv: missing header");
    while (std::getline(in, row)) {
        if (row.empty()) continue;
        std::istringstream cells(row);
        std::string cell;
        std::getline(cells, cell, ',');  // index column
        State p;
        while (std::getline(cells, cell, ',')) p.push_back(std::stod(cell));
        if (p.empty()) throw config_error("net csv: empty state row");
        pts.push_back(std::move(p));
    }
    return pts;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct FixedValue {
    State state;
    double value = 0.0;
};

struct ExperimentConfig {
    std::string flow = "logistic";
    double omega = 1.0;              // rotation / torus frequency
    double mesh = 0.05;
    std::vector<State> net_points;   // explicit net overrides the mesh
    std::string base = "mcshane";    // or "cosine" for angle flows
    std::vector<FixedValue> h;
    double delta0 = 0.1;
    double lip_target = 0.5;
    std::uint64_t seed = 0;
    double tol_fix = 1e-6;
    double tol_match = 1e-9;
    double rank_tol = 1e-6;
    int n_max = 20;
    std::string schedule = "default";  // default | none | anchors
    std::vector<State> anchors;        // for schedule = anchors
    std::string out_dir = "out";
};

inline State parse_state(const json& j) {
    if (!j.is_array() || j.empty()) throw config_error("config: state must be a nonempty array");
    State s;
    for (const auto& c : j) s.push_back(c.get<double>());
    return s;
}

inline ExperimentConfig parse_config(const json& j) {
    ExperimentConfig cfg;
    if (!j.contains("seed")) throw config_error("config: seed is mandatory");
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.flow = j.value("flow", cfg.flow);
    cfg.omega = j.value("omega", cfg.omega);
    cfg.mesh = j.value("mesh", cfg.mesh);
    cfg.base = j.value("base", cfg.base);
    cfg.delta0 = j.value("delta0", cfg.delta0);
    cfg.lip_target = j.value("lip_target", cfg.lip_target);
    cfg.tol_fix = j.value("tol_fix", cfg.tol_fix);
    cfg.tol_match = j.value("tol_match", cfg.tol_match);
    cfg.rank_tol = j.value("rank_tol", cfg.rank_tol);
    cfg.n_max = j.value("n_max", cfg.n_max);
    cfg.schedule = j.value("schedule", cfg.schedule);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    if (j.contains("net_points"))
        for (const auto& p : j.at("net_points")) cfg.net_points.push_back(parse_state(p));
    if (j.contains("anchors"))
        for (const auto& p : j.at("anchors")) cfg.anchors.push_back(parse_state(p));
    if (j.contains("h"))
        for (const auto& e : j.at("h")) {
            FixedValue fv;
            fv.state = parse_state(e.at("state"));
            fv.value = e.at("value").get<double>();
            cfg.h.push_back(fv);
        }

    if (!(cfg.mesh > 0.0)) throw config_error("config: mesh must be positive");
    if (!(cfg.delta0 > 0.0 && cfg.delta0 < 1.0))
        throw config_error("config: delta0 must lie in (0,1)");
    if (!(cfg.lip_target > 0.0)) throw config_error("config: lip_target must be positive");
    if (!(cfg.tol_fix > 0.0)) throw config_error("config: tol_fix must be positive");
    if (!(cfg.tol_match > 0.0)) throw config_error("config: tol_match must be positive");
    if (!(cfg.rank_tol > 0.0)) throw config_error("config: rank_tol must be positive");
    if (cfg.n_max < 1) throw config_error("config: n_max must be at least 1");
    if (cfg.schedule != "default" && cfg.schedule != "none" && cfg.schedule != "anchors")
        throw config_error("config: unknown schedule policy " + cfg.schedule);
    if (cfg.schedule == "anchors" && cfg.anchors.empty())
        throw config_error("config: schedule 'anchors' needs an anchors list");
    if (cfg.base != "mcshane" && cfg.base != "cosine")
        throw config_error("config: unknown base profile " + cfg.base);
    for (const auto& fv : cfg.h)
        if (fv.value < 0.0 || fv.value > 1.0)
            throw config_error("config: fixed values must lie in [0,1]");
    for (std::size_t i = 0; i < cfg.h.size(); ++i)
        for (std::size_t k = i + 1; k < cfg.h.size(); ++k)
            if (cfg.h[i].value == cfg.h[k].value)
                throw config_error("config: fixed values must be pairwise distinct");
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw config_error("config parse: " + std::string(e.what()));
    }
    return parse_config(j);
}

inline json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["flow"] = cfg.flow;
    j["omega"] = cfg.omega;
    j["mesh"] = cfg.mesh;
    j["base"] = cfg.base;
    json hj = json::array();
    for (const auto& fv : cfg.h) {
        json e;
        e["state"] = fv.state;
        e["value"] = fv.value;
        hj.push_back(e);
    }
    j["h"] = hj;
    j["delta0"] = cfg.delta0;
    j["lip_target"] = cfg.lip_target;
    j["seed"] = cfg.seed;
    j["tol_fix"] = cfg.tol_fix;
    j["tol_match"] = cfg.tol_match;
    j["rank_tol"] = cfg.rank_tol;
    j["n_max"] = cfg.n_max;
    j["schedule"] = cfg.schedule;
    if (!cfg.anchors.empty()) j["anchors"] = cfg.anchors;
    if (!cfg.net_points.empty()) j["net_points"] = cfg.net_points;
    return j;
}

}  // namespace lipembed::serialize
