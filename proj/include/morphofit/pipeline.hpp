// pipeline.hpp - wiring for the CLI: scan registration front to back
// (normalize, stature + arm-angle init, non-rigid ICP), cohort synthesis and
// the full evaluate pipeline with subject-level parallelism.
#pragma once

#include "morphofit/core.hpp"
#include "morphofit/eval.hpp"
#include "morphofit/measure.hpp"
#include "morphofit/nricp.hpp"
#include "morphofit/obj_io.hpp"
#include "morphofit/prealign.hpp"
#include "morphofit/regress.hpp"
#include "morphofit/synth.hpp"
#include "morphofit/template_model.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <thread>
#include <vector>

namespace morphofit {

struct PipelineConfig {
    // template generation (used when no template dir is supplied)
    std::uint64_t template_seed = 1;
    int template_modes = 10;
    int template_resolution = 18;
    // registration
    NricpConfig nricp = default_nricp_config();
    bool auto_orient = true;
    std::vector<double> arm_candidates = default_arm_candidates();
    // cohort
    double beta_sigma = 0.6;
    ScanRecipe recipe = default_scan_recipe();
    // evaluation
    RegressorConfig regressor;
    int folds = 5;
    std::uint64_t seed = 7;
    std::filesystem::path limits_file;
    bool run_sweep = false;
    int jobs = 1;
};

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("config: " + std::string(e.what()));
    }
    PipelineConfig c;
    try {
        if (j.contains("template")) {
            const auto& t = j["template"];
            c.template_seed = t.value("seed", c.template_seed);
            c.template_modes = t.value("modes", c.template_modes);
            c.template_resolution = t.value("resolution", c.template_resolution);
        }
        if (j.contains("schedule")) {
            c.nricp.stiffness_schedule = j["schedule"].get<std::vector<double>>();
        }
        if (j.value("paper_schedule", false)) c.nricp.stiffness_schedule = paper_schedule();
        if (j.contains("gates")) {
            c.nricp.dist_gate_multiple = j["gates"].value("distance_multiple", 4.0);
            c.nricp.normal_gate_deg = j["gates"].value("normal_deg", 60.0);
        }
        c.nricp.gamma = j.value("gamma", c.nricp.gamma);
        c.nricp.max_inner_iters = j.value("max_inner_iters", c.nricp.max_inner_iters);
        c.auto_orient = j.value("auto_orient", c.auto_orient);
        if (j.contains("regressor")) {
            c.regressor.kind = regressor_kind_from_string(j["regressor"].value("kind", "svr"));
            c.regressor.ridge_lambda = j["regressor"].value("ridge_lambda", 1.0);
        }
        if (j.contains("folds")) {
            c.folds = j["folds"].value("k", 5);
            c.seed = j["folds"].value("seed", static_cast<std::uint64_t>(7));
        }
        c.beta_sigma = j.value("beta_sigma", c.beta_sigma);
        if (j.contains("recipe")) c.recipe = recipe_from_json(j["recipe"]);
        if (j.contains("limits_file")) c.limits_file = j["limits_file"].get<std::string>();
        c.run_sweep = j.value("run_sweep", c.run_sweep);
        c.jobs = j.value("jobs", c.jobs);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("config schema: " + std::string(e.what()));
    }
    return c;
}

/// Index-addressed parallel loop; deterministic because workers only write
/// their own slot. jobs <= 1 runs inline.
template <typename Fn>
void parallel_for(int count, int jobs, Fn&& fn) {
    if (jobs <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    const int n_workers = std::min(jobs, count);
    workers.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) {
        workers.emplace_back([&] {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    }
    for (auto& t : workers) t.join();
}

// ---------------------------------------------------------------------------
// Single-scan registration: prealign + initialize + non-rigid ICP.
// ---------------------------------------------------------------------------

struct RegisterOutcome {
    AlignmentReport alignment;
    TriMesh normalized_scan;
    RegistrationResult registration;
    double final_mean_active_distance = 0.0;
    double final_active_fraction = 0.0;
};

inline RegisterOutcome register_scan(const ParametricTemplate& tpl, const TriMesh& raw_scan,
                                     const PipelineConfig& config) {
    RegisterOutcome outcome;
    NormalizeOptions norm_opts;
    norm_opts.auto_orient = config.auto_orient;
    auto [scan, report] = normalize_scan(raw_scan, norm_opts);

    const HeightModel height_model = template_height_model(tpl);
    report.estimated_beta1 =
        std::clamp(height_model.estimate_beta1(mesh_height(scan)), -4.0, 4.0);
    ShapeParams shape;
    shape.beta = Eigen::VectorXd::Zero(tpl.mode_count());
    shape.beta[0] = report.estimated_beta1;

    const TriMesh blended = blend_shape(tpl, shape);
    if (scan.face_count() > 0) {
        const SurfaceIndex scan_index(scan);
        report.estimated_arm_angle =
            init_arm_angle(tpl, shape, scan_index, config.arm_candidates);
    } else {
        report.estimated_arm_angle = 0.0;
    }
    TriMesh posed = pose_mesh(blended, tpl, abduction_pose(tpl, report.estimated_arm_angle));

    // Put the initialized template into the scan's frame convention
    // (grounded, horizontally centered).
    {
        const auto [lo, hi] = posed.bounding_box();
        const Vec3 shift(-0.5 * (lo.x() + hi.x()), -0.5 * (lo.y() + hi.y()), -lo.z());
        std::vector<Vec3> verts = posed.vertices();
        for (Vec3& v : verts) v += shift;
        posed = posed.with_vertices(std::move(verts));
    }

    outcome.registration = register_mesh(posed, scan, Landmarks{}, config.nricp);
    outcome.alignment = report;

    const CorrespondenceSet final_corr =
        find_correspondences(outcome.registration.deformed, ScanTarget(scan, true), config.nricp);
    outcome.final_mean_active_distance = final_corr.mean_active_distance();
    outcome.final_active_fraction = final_corr.active_fraction();
    outcome.normalized_scan = std::move(scan);
    return outcome;
}

// ---------------------------------------------------------------------------
// CLI commands as library functions.
// ---------------------------------------------------------------------------

inline void run_synth(const std::filesystem::path& out_dir, int n_subjects, std::uint64_t seed,
                      const PipelineConfig& config) {
    if (n_subjects <= 0) throw ParamError("synth: number of subjects must be positive");
    const ParametricTemplate tpl = generate_synthetic_template(
        config.template_seed, config.template_modes, config.template_resolution);
    const Cohort cohort = generate_cohort(tpl, n_subjects, seed, config.beta_sigma, config.recipe);
    save_cohort(cohort, tpl, out_dir);
    log_info("cohort of ", n_subjects, " subjects written to ", out_dir.string());
}

inline RegisterOutcome run_register(const std::filesystem::path& template_dir,
                                    const std::filesystem::path& scan_path,
                                    const std::filesystem::path& out_dir,
                                    const PipelineConfig& config) {
    const ParametricTemplate tpl = load_template(template_dir);
    const TriMesh scan = load_obj(scan_path);
    RegisterOutcome outcome;
    try {
        outcome = register_scan(tpl, scan, config);
    } catch (const Error&) {
        // Leave a trace for diagnosis even on failure (may be empty).
        std::filesystem::create_directories(out_dir);
        write_trace_csv(RegistrationTrace{}, out_dir / "trace.csv");
        throw;
    }
    std::filesystem::create_directories(out_dir);
    save_obj(outcome.registration.deformed, out_dir / "registered.obj");
    write_trace_csv(outcome.registration.trace, out_dir / "trace.csv");
    save_alignment_report(outcome.alignment, out_dir / "alignment.json");
    write_matrix_bin(out_dir / "deformation.bin", outcome.registration.params.x);
    return outcome;
}

struct PipelineOutcome {
    EvalReport report;
    Dataset dataset;
    std::vector<MeasurementSpec> specs;
    bool partial = false;  // true when some subjects were skipped
};

inline PipelineOutcome run_pipeline(const std::filesystem::path& cohort_dir,
                                    const std::filesystem::path& out_dir,
                                    const PipelineConfig& config) {
    const ParametricTemplate tpl = load_template(cohort_dir / "template");
    const CohortIndex index = load_cohort_index(cohort_dir);
    const int n = static_cast<int>(index.ids.size());

    struct SubjectResult {
        bool ok = false;
        std::string error;
        std::map<std::string, FeatureVector> features;
        double mean_distance = 0;
    };
    std::vector<SubjectResult> results(static_cast<std::size_t>(n));

    parallel_for(n, config.jobs, [&](int i) {
        SubjectResult& r = results[static_cast<std::size_t>(i)];
        try {
            const TriMesh scan = load_obj(index.scan_paths[static_cast<std::size_t>(i)]);
            const RegisterOutcome outcome = register_scan(tpl, scan, config);
            r.features = extract_all_features(outcome.registration.deformed, tpl);
            r.mean_distance = outcome.final_mean_active_distance;
            r.ok = true;
        } catch (const std::exception& e) {
            r.error = e.what();
        }
    });

    PipelineOutcome outcome;
    std::vector<std::pair<std::string, std::map<std::string, FeatureVector>>> feature_rows;
    for (int i = 0; i < n; ++i) {
        const SubjectResult& r = results[static_cast<std::size_t>(i)];
        const std::string& id = index.ids[static_cast<std::size_t>(i)];
        if (!r.ok) {
            outcome.report.skipped_subjects.push_back(id + " (" + r.error + ")");
            log_warn("subject ", id, " skipped: ", r.error);
            continue;
        }
        SubjectRecord record;
        record.id = id;
        record.features = r.features;
        record.truths = index.truths[static_cast<std::size_t>(i)];
        outcome.dataset.push_back(std::move(record));
        feature_rows.emplace_back(id, r.features);
    }
    if (outcome.dataset.size() < 2 * static_cast<std::size_t>(config.folds)) {
        throw NumericError("pipeline: too few successfully registered subjects (" +
                           std::to_string(outcome.dataset.size()) + ") for " +
                           std::to_string(config.folds) + "-fold evaluation");
    }

    outcome.specs = tpl.paths;
    if (!config.limits_file.empty()) apply_limits_file(outcome.specs, config.limits_file);

    std::vector<std::string> ids;
    for (const SubjectRecord& s : outcome.dataset) ids.push_back(s.id);
    const FoldPlan plan = make_folds(ids, config.folds, config.seed);
    const auto skipped = outcome.report.skipped_subjects;
    outcome.report = cv_evaluate(outcome.dataset, outcome.specs, config.regressor, plan);
    outcome.report.skipped_subjects = skipped;
    outcome.partial = !skipped.empty();

    std::filesystem::create_directories(out_dir);
    write_features_csv(out_dir / "features.csv", feature_rows);
    write_report_csv(outcome.report, out_dir / "report.csv");
    write_report_json(outcome.report, out_dir / "report.json");
    write_predictions_csv(outcome.report, outcome.specs, out_dir / "predictions.csv");
    for (const MeasurementSpec& spec : outcome.specs) {
        std::vector<double> errors;
        for (const PredictionRow& p : outcome.report.predictions) {
            if (p.measurement == spec.name) {
                errors.push_back((p.estimate_m - p.truth_m) * 1000.0);
            }
        }
        write_error_histogram_svg(errors, spec.limit_mm, spec.name,
                                  out_dir / ("hist_" + spec.name + ".svg"));
    }
    if (config.run_sweep) {
        write_file_atomic(out_dir / "sweep.csv", [&](std::ostream& os) {
            os << "measurement,C,mae_mm,best_single_path\n";
            for (const MeasurementSpec& spec : outcome.specs) {
                const SweepResult sweep =
                    sweep_paths(outcome.dataset, spec, static_cast<int>(spec.paths.size()),
                                config.regressor, plan);
                char buf[64];
                for (const auto& [c, mae] : sweep.mae_by_count) {
                    std::snprintf(buf, sizeof(buf), "%.6g", mae);
                    os << spec.name << ',' << c << ',' << buf << ','
                       << sweep.best_single_path << '\n';
                }
            }
        });
    }
    return outcome;
}

}  // namespace morphofit
