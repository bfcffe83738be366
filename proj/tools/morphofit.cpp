// morphofit - body-scan registration and anthropometric estimation CLI.
//
// Subcommands:
//   synth     generate a synthetic cohort (template + scans + ground truth)
//   register  fit the body template to one scan
//   pipeline  register a cohort, extract features, cross-validate regressors
//
// Exit codes: 0 success, 1 usage error, 2 data error (also partial pipeline
// success with skipped subjects), 3 numerical failure.

#include <CLI11.hpp>

#include "morphofit/morphofit.hpp"

#include <cstdio>
#include <iostream>

namespace {

morphofit::PipelineConfig make_config(const std::string& config_path, bool paper_sched,
                                      const std::string& regressor, int jobs,
                                      std::uint64_t seed, bool have_seed) {
    morphofit::PipelineConfig config;
    if (!config_path.empty()) config = morphofit::load_pipeline_config(config_path);
    if (paper_sched) config.nricp.stiffness_schedule = morphofit::paper_schedule();
    if (!regressor.empty()) {
        config.regressor.kind = morphofit::regressor_kind_from_string(regressor);
    }
    if (jobs > 0) config.jobs = jobs;
    if (have_seed) config.seed = seed;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"morphofit: non-rigid body-scan registration and tape-measure estimation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, regressor;
    bool paper_sched = false;
    int jobs = 0;
    std::uint64_t seed = 7;
    app.add_option("--config", config_path, "JSON pipeline config")->capture_default_str();
    app.add_option("--seed", seed, "master seed");
    app.add_option("--jobs", jobs, "parallel subject workers");
    app.add_flag("--paper-schedule", paper_sched, "stiffness 100..1 step 1 (slow)");
    app.add_option("--regressor", regressor, "ols|ridge|svr")
        ->check(CLI::IsMember({"ols", "ridge", "svr"}));
    app.add_option("--out", out_dir, "output directory");

    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
    int n_subjects = 20;
    synth->add_option("-n,--subjects", n_subjects, "number of subjects")->required();

    auto* reg = app.add_subcommand("register", "register the template to a scan");
    std::string template_dir, scan_path;
    bool no_auto_orient = false;
    reg->add_option("--template", template_dir, "template directory")->required();
    reg->add_option("--scan", scan_path, "scan OBJ path")->required();
    reg->add_flag("--no-auto-orient", no_auto_orient,
                  "trust the scanner orientation (skip facing detection)");

    auto* pipe = app.add_subcommand("pipeline", "run the full cohort pipeline");
    std::string cohort_dir, limits_file;
    bool sweep = false;
    pipe->add_option("--cohort", cohort_dir, "cohort directory (from synth)")->required();
    pipe->add_option("--limits", limits_file, "acceptance-limit JSON file");
    pipe->add_flag("--sweep", sweep, "also run the path-count ablation sweep");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const bool seed_given = app.count("--seed") > 0;
        morphofit::PipelineConfig config =
            make_config(config_path, paper_sched, regressor, jobs, seed, seed_given);
        if (out_dir.empty()) out_dir = "morphofit_out";

        if (synth->parsed()) {
            morphofit::run_synth(out_dir, n_subjects, config.seed, config);
            std::cout << "cohort written to " << out_dir << "\n";
        } else if (reg->parsed()) {
            if (no_auto_orient) config.auto_orient = false;
            const morphofit::RegisterOutcome outcome =
                morphofit::run_register(template_dir, scan_path, out_dir, config);
            std::printf("registered %s: mean active distance %.6f m (active %.1f%%)\n",
                        scan_path.c_str(), outcome.final_mean_active_distance,
                        100.0 * outcome.final_active_fraction);
        } else if (pipe->parsed()) {
            if (!limits_file.empty()) config.limits_file = limits_file;
            if (sweep) config.run_sweep = true;
            const morphofit::PipelineOutcome outcome =
                morphofit::run_pipeline(cohort_dir, out_dir, config);
            std::printf("pipeline report: avg MAE %.2f mm", outcome.report.avg_mae_mm);
            if (outcome.report.avg_success >= 0) {
                std::printf(", avg success %.1f%%", 100.0 * outcome.report.avg_success);
            }
            std::printf(" (%zu subjects, %zu skipped)\n", outcome.dataset.size(),
                        outcome.report.skipped_subjects.size());
            if (outcome.partial) {
                std::cerr << "warning: some subjects were skipped; see report.json\n";
                return 2;
            }
        }
        return 0;
    } catch (const morphofit::ParamError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const morphofit::ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const morphofit::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const morphofit::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
