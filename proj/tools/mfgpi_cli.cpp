/// @file mfgpi_cli.cpp
/// @brief Command-line driver: run experiment configs, list presets, and
/// compare run reports.
///
/// Exit codes: 0 all runs converged, 2 at least one run flagged
/// non-convergent, 1 configuration or I/O errors.

#include <cstdio>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "mfgpi/errors.hpp"
#include "mfgpi/experiments.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw mfgpi::ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void print_report(const mfgpi::RunReport& r) {
    std::printf("%s [%s]: %s in %d iterations, %.3f s", r.preset.c_str(), r.method.c_str(),
                r.converged ? "converged" : "NOT converged", r.iterations, r.total_seconds);
    if (r.lambda) std::printf(", lambda = %.7f", *r.lambda);
    if (!r.rows.empty()) {
        const mfgpi::ErrorRow& last = r.rows.back();
        std::printf(", final errors m %.3e / u %.3e", last.l2_error_m, last.l2_error_u);
    }
    if (!r.failure.empty()) std::printf("  (%s)", r.failure.c_str());
    std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-process policy-iteration solvers for HJB and mean-field games"};
    app.require_subcommand(1);

    // run ------------------------------------------------------------------
    std::string config_path, method_flag, out_dir, preset_flag;
    std::int64_t seed_flag = -1;
    CLI::App* run = app.add_subcommand("run", "execute an experiment config");
    run->add_option("config", config_path, "JSON config file (optional with --preset)");
    run->add_option("--method", method_flag, "gppi|as|both (overrides the config)");
    run->add_option("--seed", seed_flag, "observation seed (overrides the config)");
    run->add_option("--out", out_dir, "output directory for reports and CSVs");
    run->add_option("--preset", preset_flag, "run a named preset without a config file");

    // list-presets ---------------------------------------------------------
    CLI::App* list = app.add_subcommand("list-presets", "print the preset names");

    // compare --------------------------------------------------------------
    std::string report_a, report_b;
    CLI::App* compare = app.add_subcommand("compare", "compare two run reports");
    compare->add_option("reportA", report_a, "first report JSON")->required();
    compare->add_option("reportB", report_b, "second report JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (list->parsed()) {
            for (const std::string& name : mfgpi::preset_names()) std::printf("%s\n", name.c_str());
            return 0;
        }

        if (compare->parsed()) {
            const mfgpi::RunReport a = mfgpi::report_from_json(read_file(report_a));
            const mfgpi::RunReport b = mfgpi::report_from_json(read_file(report_b));
            const mfgpi::MethodComparison cmp = mfgpi::compare_methods(a, b);
            std::printf("preset: %s  (%s vs %s)\n", a.preset.c_str(), a.method.c_str(),
                        b.method.c_str());
            std::printf("delta_lambda:      %.3e\n", cmp.delta_lambda);
            std::printf("final_error_ratio: %.6f\n", cmp.final_error_ratio);
            std::printf("iteration_ratio:   %.6f\n", cmp.iteration_ratio);
            std::printf("runtime_ratio:     %.6f\n", cmp.runtime_ratio);
            return 0;
        }

        // run
        mfgpi::ExperimentConfig cfg;
        if (!preset_flag.empty())
            cfg = mfgpi::make_preset(preset_flag, seed_flag >= 0 ? (std::uint64_t)seed_flag : 0);
        else if (!config_path.empty())
            cfg = mfgpi::parse_experiment_config(config_path);
        else
            throw mfgpi::ConfigError("run needs a config file or --preset NAME");

        if (seed_flag >= 0) cfg.seed = (std::uint64_t)seed_flag;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!method_flag.empty()) {
            if (method_flag == "gppi")
                cfg.method = mfgpi::RunMethod::gppi;
            else if (method_flag == "as")
                cfg.method = mfgpi::RunMethod::as_newton;
            else if (method_flag == "both")
                cfg.method = mfgpi::RunMethod::both;
            else
                throw mfgpi::ConfigError("--method must be gppi|as|both");
        }

        const std::vector<mfgpi::RunReport> reports = mfgpi::run_experiment(cfg);
        bool all_converged = true;
        for (const mfgpi::RunReport& r : reports) {
            print_report(r);
            all_converged = all_converged && r.converged;
        }
        return all_converged ? 0 : 2;
    } catch (const mfgpi::Error& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    }
}
