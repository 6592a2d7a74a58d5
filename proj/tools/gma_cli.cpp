// Command-line front end: solve / verify / probe / report.
// Exit codes: 0 converged, 2 solver abort, 3 config error.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "gma/io.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw gma::ConfigError("/", "cannot open config file " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

gma::RunConfig load_config(const std::string& path, bool strict, const std::string& out_override) {
    gma::RunConfig cfg = gma::parse_config(read_file(path), strict);
    if (!out_override.empty()) cfg.out_dir = out_override;
    return cfg;
}

void print_solution_summary(const gma::RunResult& r) {
    std::cout.precision(12);
    std::cout << (r.converged ? "converged" : "ABORTED") << "\n";
    if (!r.abort_reason.empty()) std::cout << "reason: " << r.abort_reason << "\n";
    std::cout << "b = " << r.solution.b << "\n"
              << "final residual (sup) = " << r.solution.final_residual << "\n"
              << "min eigenvalue of gtilde = " << r.solution.min_eig << "\n";
    if (r.report) {
        std::cout << "sup|u| = " << r.report->sup_abs_u << ", K = " << r.report->K
                  << ", c2_ratio = " << r.report->c2_ratio
                  << ", b_bound_slack = " << r.report->b_bound_slack << "\n";
        if (r.report->aeppli_defect) std::cout << "aeppli defect = " << *r.report->aeppli_defect << "\n";
    }
    if (r.kernel_defect) std::cout << "kernel density defect = " << *r.kernel_defect << "\n";
    if (r.uniqueness)
        std::cout << "uniqueness probe: " << (r.uniqueness->pass ? "pass" : "FAIL")
                  << " (max |du| = " << r.uniqueness->max_u_distance
                  << ", max |db| = " << r.uniqueness->max_b_distance << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monge-Ampere solver with gradient term on flat complex tori"};
    app.require_subcommand(1);

    std::string config_path, out_dir, bundle_dir;
    int threads = 1;
    bool strict = false;
    app.add_option("--threads", threads, "worker threads for parallel probes")->check(CLI::PositiveNumber);
    app.add_flag("--strict", strict, "reject configs with unknown keys");

    CLI::App* solve = app.add_subcommand("solve", "run the continuity method on a config");
    solve->add_option("--config", config_path, "JSON config file")->required();
    solve->add_option("--out", out_dir, "output bundle directory (overrides config)");

    CLI::App* verify = app.add_subcommand("verify", "manufactured-solution verification");
    verify->add_option("--config", config_path, "JSON config file with a truth expression")->required();
    verify->add_option("--out", out_dir, "output bundle directory (overrides config)");

    CLI::App* probe = app.add_subcommand("probe", "uniqueness probe: repeated perturbed re-solves");
    probe->add_option("--config", config_path, "JSON config file")->required();
    probe->add_option("--out", out_dir, "output bundle directory (overrides config)");

    CLI::App* report = app.add_subcommand("report", "render a solve bundle as text + CSV");
    report->add_option("dir", bundle_dir, "bundle directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) {
            gma::RunConfig cfg = load_config(config_path, strict, out_dir);
            gma::RunResult r = gma::run_solve(cfg, {}, threads);
            print_solution_summary(r);
            return r.converged ? 0 : 2;
        }
        if (verify->parsed()) {
            gma::RunConfig cfg = load_config(config_path, strict, out_dir);
            gma::VerificationReport rep = gma::run_manufactured(cfg);
            std::cout.precision(12);
            std::cout << (rep.converged ? "converged" : "ABORTED") << "\n"
                      << "manufactured gtilde min eigenvalue = " << rep.truth_min_eig << "\n"
                      << "sup|u - u*| = " << rep.u_sup_error << "\n"
                      << "|b| = " << rep.b_abs << "\n"
                      << "final residual (sup) = " << rep.final_residual << "\n";
            return rep.converged ? 0 : 2;
        }
        if (probe->parsed()) {
            gma::RunConfig cfg = load_config(config_path, strict, out_dir);
            if (std::find(cfg.monitors.begin(), cfg.monitors.end(), "uniqueness") == cfg.monitors.end())
                cfg.monitors.push_back("uniqueness");
            gma::RunResult r = gma::run_solve(cfg, {}, threads);
            print_solution_summary(r);
            if (!r.converged) return 2;
            return (r.uniqueness && r.uniqueness->pass) ? 0 : 2;
        }
        if (report->parsed()) {
            gma::RenderedReport rep = gma::run_report(bundle_dir);
            std::cout << rep.text;
            namespace fs = std::filesystem;
            gma::io_detail::write_atomic(fs::path(bundle_dir) / "report.txt", rep.text);
            gma::io_detail::write_atomic(fs::path(bundle_dir) / "report.csv", rep.csv);
            return 0;
        }
    } catch (const gma::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const gma::SolverAbort& e) {
        std::cerr << "solver abort: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
