// Command-line front end: run experiments, re-verify written artifacts,
// print independence witness families, and export sampled lines.
// Exit codes: 0 all checks pass, 1 check failures or construction errors,
// 2 usage or configuration problems.

#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lipembed/embed.hpp"
#include "lipembed/genvec.hpp"
#include "lipembed/report.hpp"
#include "lipembed/serialize.hpp"

namespace {

using namespace lipembed;

void print_family(const genvec::VecFamily& fam, std::ostream& out) {
    out << "family " << fam.provenance << " m=" << fam.m << " dim=" << fam.dim << "\n";
    for (std::size_t i = 0; i < fam.vectors.size(); ++i) {
        out << "u_" << (i + 1) << " =";
        for (double v : fam.vectors[i]) out << " " << serialize::format_double(v);
        out << "\n";
    }
    for (const auto& cert : fam.certificates) {
        out << "certificate rows=" << cert.rows << " cols=" << cert.cols
            << " rank=" << cert.rank << " margin=" << serialize::format_double(cert.margin);
        if (cert.exact) out << " exact_rank=" << cert.exact_rank;
        out << "\n";
    }
    out << "min_margin=" << serialize::format_double(fam.min_margin) << "\n";
}

flow::State parse_state_arg(const std::string& s) {
    flow::State out;
    std::istringstream in(s);
    std::string cell;
    while (std::getline(in, cell, ',')) out.push_back(std::stod(cell));
    if (out.empty()) throw config_error("state argument is empty");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"equivariant embeddings of flows into one-Lipschitz lines"};
    app.require_subcommand(1);

    std::string config_path, out_dir, artifacts_dir, witness_kind, state_arg, export_path;
    double half_width = 8.0;
    int w_l = 3, w_m = 2, w_n = 12, w_alpha = 2;

    auto* cmd_run = app.add_subcommand("run", "run the configured experiment, write artifacts");
    cmd_run->add_option("--config", config_path, "experiment config JSON")->required();
    cmd_run->add_option("--out", out_dir, "override the config output directory");

    auto* cmd_verify =
        app.add_subcommand("verify", "recompute invariants from a written artifact tree");
    cmd_verify->add_option("--config", config_path, "experiment config JSON")->required();
    cmd_verify->add_option("--artifacts", artifacts_dir, "artifact directory from a run")
        ->required();

    auto* cmd_witness = app.add_subcommand("witness", "print an independence witness family");
    cmd_witness->add_option("--kind", witness_kind, "e_du or shifted")->required();
    cmd_witness->add_option("-l", w_l, "grid length parameter");
    cmd_witness->add_option("-m", w_m, "family size");
    cmd_witness->add_option("-n", w_n, "ambient dimension (shifted only)");
    cmd_witness->add_option("--alpha", w_alpha, "shift offset (shifted only)");

    auto* cmd_export = app.add_subcommand("export", "sample the final map on a line into CSV");
    cmd_export->add_option("--config", config_path, "experiment config JSON")->required();
    cmd_export->add_option("--state", state_arg, "comma-separated state coordinates")->required();
    cmd_export->add_option("--half-width", half_width, "line half width");
    cmd_export->add_option("--out", export_path, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (cmd_run->parsed()) {
            auto cfg = serialize::load_config(config_path);
            auto rep = report::run_experiment(cfg, out_dir);
            report::print_summary(rep, std::cout);
            return rep.all_pass() ? 0 : 1;
        }
        if (cmd_verify->parsed()) {
            auto cfg = serialize::load_config(config_path);
            auto rep = report::verify_artifacts(cfg, artifacts_dir);
            report::print_summary(rep, std::cout);
            return rep.all_pass() ? 0 : 1;
        }
        if (cmd_witness->parsed()) {
            genvec::VecFamily fam;
            if (witness_kind == "e_du")
                fam = genvec::witness_e_du(w_l, w_m);
            else if (witness_kind == "shifted")
                fam = genvec::witness_shifted(w_n, w_l, w_m, w_alpha);
            else
                throw config_error("witness kind must be e_du or shifted");
            print_family(fam, std::cout);
            return 0;
        }
        if (cmd_export->parsed()) {
            auto cfg = serialize::load_config(config_path);
            auto built = report::build_experiment(cfg);
            embed::PipelineOpts popts;
            popts.delta0 = cfg.delta0;
            popts.seed = cfg.seed;
            popts.crdist_nmax = cfg.n_max;
            popts.match_tol = cfg.tol_match;
            embed::run_pipeline(built.map, built.net, built.schedule, popts);
            auto line = built.map.eval_line(parse_state_arg(state_arg), half_width);
            serialize::write_text_file(export_path, serialize::line_to_csv(line));
            std::cout << "wrote " << export_path << "\n";
            return 0;
        }
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const domain_error& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return 2;
    } catch (const precondition_error& e) {
        std::cerr << "precondition error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
