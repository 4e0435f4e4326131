#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

#include "lipembed/report.hpp"
#include "lipembed/serialize.hpp"

using namespace lipembed;
using serialize::json;

namespace fs = std::filesystem;

static serialize::ExperimentConfig rotation_config(const std::string& out) {
    json j;
    j["flow"] = "rotation";
    j["mesh"] = 0.5;
    j["base"] = "cosine";
    j["seed"] = 41;
    j["delta0"] = 0.1;
    j["n_max"] = 10;
    j["schedule"] = "anchors";
    j["anchors"] = {{0.7}, {2.9}};
    j["out_dir"] = out;
    return serialize::parse_config(j);
}

TEST_CASE("config validation rejects degenerate inputs") {
    json j;
    j["seed"] = 1;
    REQUIRE_NOTHROW(serialize::parse_config(j));

    json no_seed;
    CHECK_THROWS_AS(serialize::parse_config(no_seed), config_error);

    j["tol_match"] = 0.0;
    CHECK_THROWS_AS(serialize::parse_config(j), config_error);
    j["tol_match"] = 1e-9;

    j["schedule"] = "everything";
    CHECK_THROWS_AS(serialize::parse_config(j), config_error);
    j["schedule"] = "default";

    j["h"] = {{{"state", {0.0}}, {"value", 0.3}}, {{"state", {1.0}}, {"value", 0.3}}};
    CHECK_THROWS_AS(serialize::parse_config(j), config_error);
    j["h"] = {{{"state", {0.0}}, {"value", 1.5}}};
    CHECK_THROWS_AS(serialize::parse_config(j), config_error);
}

TEST_CASE("line csv round-trips exactly") {
    auto line =
        funcspace::LineFn::from_samples(2.0, 40, [](double t) { return 0.5 + 0.3 * std::sin(t); });
    auto raw = serialize::parse_line_csv(serialize::line_to_csv(line));
    REQUIRE(raw.vs.size() == line.values().size());
    for (std::size_t i = 0; i < raw.vs.size(); ++i) {
        CHECK(raw.vs[i] == line.values()[i]);
        CHECK(raw.ts[i] == line.node_time(i));
    }
}

TEST_CASE("run produces a passing report and a verifiable artifact tree") {
    fs::path out = fs::temp_directory_path() / "lipembed_report_rot";
    fs::remove_all(out);
    auto cfg = rotation_config(out.string());

    auto rep = report::run_experiment(cfg);
    REQUIRE(rep.kind == "run");
    REQUIRE(rep.all_pass());
    CHECK(rep.perturbed == 0);
    CHECK(rep.skipped == 3);
    CHECK(fs::exists(out / "report.json"));
    CHECK(fs::exists(out / "net.csv"));
    CHECK(fs::exists(out / "pairwise_crdist.csv"));
    CHECK(fs::exists(out / "lines" / "line_0000.csv"));
    CHECK(fs::exists(out / "equivariance" / "shifts.csv"));

    auto ver = report::verify_artifacts(cfg, out.string());
    REQUIRE(ver.kind == "verify");
    INFO([&] {
        std::string s;
        for (const auto& c : ver.checks)
            if (!c.pass) s += c.name + " (" + c.witness + ") ";
        return s;
    }());
    REQUIRE(ver.all_pass());
}

TEST_CASE("verification flags a tampered line with a witness") {
    fs::path out = fs::temp_directory_path() / "lipembed_report_tamper";
    fs::remove_all(out);
    auto cfg = rotation_config(out.string());
    report::run_experiment(cfg);

    // bump one sampled value by 0.1: the slope check must fail and point at
    // the damaged row
    fs::path target = out / "lines" / "line_0001.csv";
    auto raw = serialize::parse_line_csv(serialize::read_text_file(target));
    raw.vs[100] += 0.1;
    std::string body = "t,value\n";
    for (std::size_t i = 0; i < raw.ts.size(); ++i)
        body += serialize::format_double(raw.ts[i]) + "," + serialize::format_double(raw.vs[i]) +
                "\n";
    serialize::write_text_file(target, body);

    auto ver = report::verify_artifacts(cfg, out.string());
    REQUIRE(!ver.all_pass());
    bool slope_failed = false;
    for (const auto& c : ver.checks)
        if (c.name == "line_slope" && !c.pass) {
            slope_failed = true;
            CHECK(c.witness.find("line 1") != std::string::npos);
        }
    CHECK(slope_failed);
}

TEST_CASE("identical runs write byte-identical reports") {
    fs::path out1 = fs::temp_directory_path() / "lipembed_report_rep1";
    fs::path out2 = fs::temp_directory_path() / "lipembed_report_rep2";
    fs::remove_all(out1);
    fs::remove_all(out2);

    auto cfg = rotation_config(out1.string());
    report::run_experiment(cfg);
    report::run_experiment(cfg, out2.string());

    auto b1 = serialize::read_text_file(out1 / "report.json");
    auto b2 = serialize::read_text_file(out2 / "report.json");
    CHECK(b1 == b2);
    CHECK(serialize::read_text_file(out1 / "pairwise_crdist.csv") ==
          serialize::read_text_file(out2 / "pairwise_crdist.csv"));
    CHECK(serialize::read_text_file(out1 / "lines" / "line_0003.csv") ==
          serialize::read_text_file(out2 / "lines" / "line_0003.csv"));
}

TEST_CASE("logistic run pins its fixed values and passes verification") {
    fs::path out = fs::temp_directory_path() / "lipembed_report_logi";
    fs::remove_all(out);
    json j;
    j["flow"] = "logistic";
    j["mesh"] = 0.1;
    j["seed"] = 9;
    j["n_max"] = 10;
    j["schedule"] = "anchors";
    j["anchors"] = {{0.5}};
    j["h"] = {{{"state", {0.0}}, {"value", 0.0}}, {{"state", {1.0}}, {"value", 1.0}}};
    j["out_dir"] = out.string();
    auto cfg = serialize::parse_config(j);

    auto rep = report::run_experiment(cfg);
    REQUIRE(rep.all_pass());
    bool saw_fixed = false;
    for (const auto& c : rep.checks)
        if (c.name == "fixed_values") saw_fixed = true;
    CHECK(saw_fixed);

    auto ver = report::verify_artifacts(cfg, out.string());
    REQUIRE(ver.all_pass());
}

TEST_CASE("config and flow mismatches are surfaced") {
    auto sys_cfg = rotation_config("unused");
    json j;
    j["seed"] = 1;
    j["flow"] = "parabolic";
    auto bad = serialize::parse_config(j);
    CHECK_THROWS_AS(report::build_flow(bad), config_error);

    // verifying with a different seed must fail the config match
    fs::path out = fs::temp_directory_path() / "lipembed_report_cfgmatch";
    fs::remove_all(out);
    auto cfg = rotation_config(out.string());
    report::run_experiment(cfg);
    auto other = cfg;
    other.seed = 999;
    auto ver = report::verify_artifacts(other, out.string());
    bool cfg_failed = false;
    for (const auto& c : ver.checks)
        if (c.name == "config_match" && !c.pass) cfg_failed = true;
    CHECK(cfg_failed);
}
