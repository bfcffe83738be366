// eval.hpp - metrics (MAE, success rate), k-fold protocol, cross-validated
// measurement evaluation and the path-count ablation sweep.
#pragma once

#include "morphofit/core.hpp"
#include "morphofit/measure.hpp"
#include "morphofit/regress.hpp"
#include "morphofit/template_model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace morphofit {

// ---------------------------------------------------------------------------
// Metrics.
// ---------------------------------------------------------------------------

/// Mean absolute error in millimeters between truths and estimates (meters).
inline double mae_mm(const std::vector<double>& truth, const std::vector<double>& est) {
    if (truth.empty() || truth.size() != est.size()) {
        throw ParamError("mae: inputs must be equal-length and nonempty");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) sum += std::abs(truth[i] - est[i]);
    return 1000.0 * sum / static_cast<double>(truth.size());
}

/// Fraction of subjects with |error| within the limit (inclusive).
inline double success_rate(const std::vector<double>& truth, const std::vector<double>& est,
                           double limit_mm) {
    if (truth.empty() || truth.size() != est.size()) {
        throw ParamError("success_rate: inputs must be equal-length and nonempty");
    }
    if (limit_mm <= 0) throw ParamError("success_rate: limit must be positive");
    std::size_t within = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (std::abs(truth[i] - est[i]) * 1000.0 <= limit_mm) ++within;
    }
    return static_cast<double>(within) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// Fold plans: seeded shuffle, round-robin split; deterministic per seed.
// ---------------------------------------------------------------------------

struct FoldPlan {
    std::vector<std::vector<std::string>> folds;
    std::uint64_t seed = 0;
};

inline FoldPlan make_folds(std::vector<std::string> subject_ids, int k, std::uint64_t seed) {
    if (k < 2) throw ParamError("make_folds: k must be >= 2");
    if (static_cast<std::size_t>(k) > subject_ids.size()) {
        throw ParamError("make_folds: k exceeds the number of subjects");
    }
    Rng rng(seed);
    rng.shuffle(subject_ids);
    FoldPlan plan;
    plan.seed = seed;
    plan.folds.assign(static_cast<std::size_t>(k), {});
    for (std::size_t i = 0; i < subject_ids.size(); ++i) {
        plan.folds[i % static_cast<std::size_t>(k)].push_back(subject_ids[i]);
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Dataset plumbing.
// ---------------------------------------------------------------------------

struct SubjectRecord {
    std::string id;
    std::map<std::string, FeatureVector> features;  // per measurement
    std::map<std::string, double> truths;           // meters
};

using Dataset = std::vector<SubjectRecord>;

struct RegressorConfig {
    RegressorKind kind = RegressorKind::Svr;
    double ridge_lambda = 1.0;
    SvrGrid svr_grid;
};

inline RegressionModel fit_regressor(const RegressorConfig& config, const TrainingSet& data) {
    switch (config.kind) {
        case RegressorKind::Ols: return fit_ols(data);
        case RegressorKind::Ridge: return fit_ridge(data, config.ridge_lambda);
        case RegressorKind::Svr: return fit_svr_tuned(data, config.svr_grid);
    }
    throw ParamError("fit_regressor: bad kind");
}

namespace eval_detail {

inline const SubjectRecord& find_subject(const Dataset& dataset, const std::string& id) {
    for (const SubjectRecord& s : dataset) {
        if (s.id == id) return s;
    }
    throw ParamError("unknown subject id: " + id);
}

/// Feature rows for one measurement restricted to a subset of path indices
/// (empty subset = all paths in spec order).
inline TrainingSet training_set_for(const Dataset& dataset, const std::vector<std::string>& ids,
                                    const std::string& measurement,
                                    const std::vector<int>& path_subset) {
    std::vector<std::vector<double>> rows;
    std::vector<double> targets;
    for (const std::string& id : ids) {
        const SubjectRecord& s = find_subject(dataset, id);
        const FeatureVector& full = s.features.at(measurement);
        std::vector<double> row;
        if (path_subset.empty()) {
            row = full;
        } else {
            for (int p : path_subset) row.push_back(full.at(static_cast<std::size_t>(p)));
        }
        rows.push_back(std::move(row));
        targets.push_back(s.truths.at(measurement));
    }
    return make_training_set(rows, targets);
}

}  // namespace eval_detail

// ---------------------------------------------------------------------------
// Cross-validated evaluation.
// ---------------------------------------------------------------------------

struct PredictionRow {
    std::string subject;
    std::string measurement;
    double truth_m = 0;
    double estimate_m = 0;
};

struct MeasurementReport {
    std::string name;
    double mae_mm = 0;
    double success = -1;  // < 0: no limit defined
    int n_subjects = 0;
    int c_used = 0;
};

struct EvalReport {
    std::vector<MeasurementReport> measurements;
    double avg_mae_mm = 0;
    double avg_success = -1;
    std::vector<PredictionRow> predictions;
    std::vector<std::string> skipped_subjects;
    // Aggregation convention, shipped in every report header.
    std::string notes =
        "success rates are averaged per measurement (not pooled over subjects)";
};

/// Fits per fold on the training subjects, predicts the held-out fold, and
/// aggregates MAE / success over all test predictions. Hyperparameter search
/// stays inside the training folds by construction.
inline EvalReport cv_evaluate(const Dataset& dataset, const std::vector<MeasurementSpec>& specs,
                              const RegressorConfig& config, const FoldPlan& plan) {
    // Validate coverage up front, listing every offending subject.
    std::vector<std::string> missing;
    for (const auto& fold : plan.folds) {
        for (const std::string& id : fold) {
            const SubjectRecord& s = eval_detail::find_subject(dataset, id);
            for (const MeasurementSpec& spec : specs) {
                if (!s.features.count(spec.name) || !s.truths.count(spec.name)) {
                    missing.push_back(id + ":" + spec.name);
                }
            }
        }
    }
    if (!missing.empty()) {
        std::string joined;
        for (const auto& m : missing) joined += (joined.empty() ? "" : ", ") + m;
        throw ParamError("cv_evaluate: missing subject data for " + joined);
    }

    EvalReport report;
    double mae_sum = 0.0, success_sum = 0.0;
    int success_count = 0;
    for (const MeasurementSpec& spec : specs) {
        std::vector<double> truths, estimates;
        for (std::size_t f = 0; f < plan.folds.size(); ++f) {
            std::vector<std::string> train_ids;
            for (std::size_t g = 0; g < plan.folds.size(); ++g) {
                if (g == f) continue;
                train_ids.insert(train_ids.end(), plan.folds[g].begin(), plan.folds[g].end());
            }
            const RegressionModel model = fit_regressor(
                config, eval_detail::training_set_for(dataset, train_ids, spec.name, {}));
            for (const std::string& id : plan.folds[f]) {
                const SubjectRecord& s = eval_detail::find_subject(dataset, id);
                const double est = predict(model, s.features.at(spec.name));
                truths.push_back(s.truths.at(spec.name));
                estimates.push_back(est);
                report.predictions.push_back({id, spec.name, truths.back(), est});
            }
        }
        MeasurementReport mr;
        mr.name = spec.name;
        mr.mae_mm = mae_mm(truths, estimates);
        mr.n_subjects = static_cast<int>(truths.size());
        mr.c_used = static_cast<int>(spec.paths.size());
        if (spec.limit_mm > 0) {
            mr.success = success_rate(truths, estimates, spec.limit_mm);
            success_sum += mr.success;
            ++success_count;
        }
        mae_sum += mr.mae_mm;
        report.measurements.push_back(mr);
    }
    if (!report.measurements.empty()) {
        report.avg_mae_mm = mae_sum / static_cast<double>(report.measurements.size());
    }
    if (success_count > 0) report.avg_success = success_sum / success_count;
    return report;
}

// ---------------------------------------------------------------------------
// Path-count ablation: greedy forward selection on training-fold validation
// MAE (deterministic; ties broken by path index), then per-C test evaluation.
// ---------------------------------------------------------------------------

struct SweepResult {
    std::vector<std::pair<int, double>> mae_by_count;  // (C, mae_mm)
    int best_single_path = -1;
};

namespace eval_detail {

/// Validation MAE of a path subset via deterministic inner folds (round
/// robin over the training ids, no reshuffle). Mid-grid SVR hyperparameters
/// keep the greedy search affordable; final per-C fits are fully tuned.
inline double subset_validation_mae(const Dataset& dataset, const std::vector<std::string>& ids,
                                    const std::string& measurement,
                                    const std::vector<int>& subset,
                                    const RegressorConfig& config, int inner_folds) {
    inner_folds = std::min<int>(inner_folds, static_cast<int>(ids.size()) / 2);
    if (inner_folds < 2) inner_folds = 2;
    double abs_err = 0.0;
    int count = 0;
    for (int fold = 0; fold < inner_folds; ++fold) {
        std::vector<std::string> train_ids, val_ids;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            (static_cast<int>(i) % inner_folds == fold ? val_ids : train_ids).push_back(ids[i]);
        }
        if (train_ids.size() < 2 || val_ids.empty()) continue;
        const TrainingSet train = training_set_for(dataset, train_ids, measurement, subset);
        RegressionModel model;
        switch (config.kind) {
            case RegressorKind::Ols: model = fit_ols(train); break;
            case RegressorKind::Ridge: model = fit_ridge(train, config.ridge_lambda); break;
            case RegressorKind::Svr: {
                const double bw =
                    median_pairwise_distance(regress_detail::standardize(train.features).z);
                model = fit_svr(train, 10.0, 0.002, bw);
                break;
            }
        }
        for (const std::string& id : val_ids) {
            const SubjectRecord& s = find_subject(dataset, id);
            std::vector<double> row;
            for (int p : subset) row.push_back(s.features.at(measurement)[static_cast<std::size_t>(p)]);
            abs_err += std::abs(predict(model, row) - s.truths.at(measurement));
            ++count;
        }
    }
    return count > 0 ? abs_err / count : std::numeric_limits<double>::infinity();
}

}  // namespace eval_detail

inline SweepResult sweep_paths(const Dataset& dataset, const MeasurementSpec& spec, int c_max,
                               const RegressorConfig& config, const FoldPlan& plan) {
    const int total_paths = static_cast<int>(spec.paths.size());
    if (c_max < 1 || c_max > total_paths) {
        throw ParamError("sweep_paths: c_range exceeds available paths (" +
                         std::to_string(total_paths) + ")");
    }

    std::vector<std::vector<double>> truths(static_cast<std::size_t>(c_max));
    std::vector<std::vector<double>> estimates(static_cast<std::size_t>(c_max));
    std::map<int, int> first_path_votes;

    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        std::vector<std::string> train_ids;
        for (std::size_t g = 0; g < plan.folds.size(); ++g) {
            if (g == f) continue;
            train_ids.insert(train_ids.end(), plan.folds[g].begin(), plan.folds[g].end());
        }

        std::vector<int> selected;
        std::set<int> remaining;
        for (int p = 0; p < total_paths; ++p) remaining.insert(p);
        while (static_cast<int>(selected.size()) < c_max) {
            int best_path = -1;
            double best_mae = std::numeric_limits<double>::infinity();
            for (int p : remaining) {  // ascending: ties go to the lowest index
                std::vector<int> candidate = selected;
                candidate.push_back(p);
                const double v = eval_detail::subset_validation_mae(dataset, train_ids, spec.name,
                                                                    candidate, config, 3);
                if (v < best_mae) {
                    best_mae = v;
                    best_path = p;
                }
            }
            selected.push_back(best_path);
            remaining.erase(best_path);
        }
        ++first_path_votes[selected[0]];

        for (int c = 1; c <= c_max; ++c) {
            const std::vector<int> subset(selected.begin(), selected.begin() + c);
            const RegressionModel model = fit_regressor(
                config, eval_detail::training_set_for(dataset, train_ids, spec.name, subset));
            for (const std::string& id : plan.folds[f]) {
                const SubjectRecord& s = eval_detail::find_subject(dataset, id);
                std::vector<double> row;
                for (int p : subset) {
                    row.push_back(s.features.at(spec.name)[static_cast<std::size_t>(p)]);
                }
                truths[static_cast<std::size_t>(c - 1)].push_back(s.truths.at(spec.name));
                estimates[static_cast<std::size_t>(c - 1)].push_back(predict(model, row));
            }
        }
    }

    SweepResult result;
    for (int c = 1; c <= c_max; ++c) {
        result.mae_by_count.emplace_back(
            c, mae_mm(truths[static_cast<std::size_t>(c - 1)], estimates[static_cast<std::size_t>(c - 1)]));
    }
    int best_votes = -1;
    for (const auto& [path, votes] : first_path_votes) {
        if (votes > best_votes) {
            best_votes = votes;
            result.best_single_path = path;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Limits config and report output.
// ---------------------------------------------------------------------------

/// Overrides spec limits from a {"NameCirc": limit_mm, ...} JSON file.
inline void apply_limits_file(std::vector<MeasurementSpec>& specs,
                              const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("limits file: " + std::string(e.what()));
    }
    for (MeasurementSpec& spec : specs) {
        if (j.contains(spec.name)) spec.limit_mm = j.at(spec.name).get<double>();
    }
}

inline void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    write_file_atomic(path, [&](std::ostream& os) {
        os << "# " << report.notes << "\n";
        os << "measurement,mae_mm,success_rate,n_subjects,C_used\n";
        char buf[64];
        for (const MeasurementReport& m : report.measurements) {
            std::snprintf(buf, sizeof(buf), "%.6g", m.mae_mm);
            os << m.name << ',' << buf << ',';
            if (m.success >= 0) {
                std::snprintf(buf, sizeof(buf), "%.6g", m.success);
                os << buf;
            }
            os << ',' << m.n_subjects << ',' << m.c_used << '\n';
        }
        std::snprintf(buf, sizeof(buf), "%.6g", report.avg_mae_mm);
        os << "AVERAGE," << buf << ',';
        if (report.avg_success >= 0) {
            std::snprintf(buf, sizeof(buf), "%.6g", report.avg_success);
            os << buf;
        }
        os << ",,\n";
    });
}

inline void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
    nlohmann::json j;
    j["notes"] = report.notes;
    j["avg_mae_mm"] = report.avg_mae_mm;
    if (report.avg_success >= 0) j["avg_success_rate"] = report.avg_success;
    j["skipped_subjects"] = report.skipped_subjects;
    j["measurements"] = nlohmann::json::array();
    for (const MeasurementReport& m : report.measurements) {
        nlohmann::json e;
        e["name"] = m.name;
        e["mae_mm"] = m.mae_mm;
        if (m.success >= 0) e["success_rate"] = m.success;
        e["n_subjects"] = m.n_subjects;
        e["C_used"] = m.c_used;
        j["measurements"].push_back(std::move(e));
    }
    write_file_atomic(path, [&](std::ostream& os) { os << j.dump(1); });
}

inline void write_predictions_csv(const EvalReport& report,
                                  const std::vector<MeasurementSpec>& specs,
                                  const std::filesystem::path& path) {
    std::map<std::string, double> limits;
    for (const MeasurementSpec& s : specs) limits[s.name] = s.limit_mm;
    write_file_atomic(path, [&](std::ostream& os) {
        os << "subject_id,measurement,truth_mm,estimate_mm,abs_error_mm,within_limit\n";
        char buf[192];
        for (const PredictionRow& p : report.predictions) {
            const double truth_mm = p.truth_m * 1000.0;
            const double est_mm = p.estimate_m * 1000.0;
            const double err = std::abs(truth_mm - est_mm);
            const double limit = limits.count(p.measurement) ? limits[p.measurement] : 0.0;
            std::snprintf(buf, sizeof(buf), "%s,%s,%.6g,%.6g,%.6g,%s\n", p.subject.c_str(),
                          p.measurement.c_str(), truth_mm, est_mm, err,
                          limit > 0 ? (err <= limit ? "1" : "0") : "");
            os << buf;
        }
    });
}

/// Signed error histogram (Fig.-style), acceptance limit drawn as vertical
/// red lines. Pure geometry, no timestamps: output is byte-deterministic.
inline void write_error_histogram_svg(const std::vector<double>& errors_mm, double limit_mm,
                                      const std::string& title,
                                      const std::filesystem::path& path) {
    const int bins = 21;
    double max_abs = limit_mm > 0 ? 2.0 * limit_mm : 1.0;
    for (const double e : errors_mm) max_abs = std::max(max_abs, std::abs(e));
    max_abs *= 1.05;
    std::vector<int> counts(bins, 0);
    for (const double e : errors_mm) {
        int b = static_cast<int>((e + max_abs) / (2.0 * max_abs) * bins);
        b = std::clamp(b, 0, bins - 1);
        ++counts[static_cast<std::size_t>(b)];
    }
    const int peak = std::max(1, *std::max_element(counts.begin(), counts.end()));

    const double width = 420, height = 260, left = 40, bottom = 220, top = 30;
    const double plot_w = width - 2 * left, plot_h = bottom - top;
    const auto x_of = [&](double mm) { return left + (mm + max_abs) / (2.0 * max_abs) * plot_w; };

    write_file_atomic(path, [&](std::ostream& os) {
        char buf[256];
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
           << height << "\">\n";
        os << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">" << title
           << " error [mm]</text>\n";
        for (int b = 0; b < bins; ++b) {
            const double h = plot_h * counts[static_cast<std::size_t>(b)] / peak;
            std::snprintf(buf, sizeof(buf),
                          "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" "
                          "fill=\"#6688cc\"/>\n",
                          left + b * plot_w / bins, bottom - h, plot_w / bins - 1.0, h);
            os << buf;
        }
        os << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << left + plot_w
           << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";
        if (limit_mm > 0) {
            for (const double lm : {-limit_mm, limit_mm}) {
                std::snprintf(buf, sizeof(buf),
                              "<line x1=\"%.2f\" y1=\"%.0f\" x2=\"%.2f\" y2=\"%.0f\" "
                              "stroke=\"red\" stroke-width=\"1.5\"/>\n",
                              x_of(lm), top, x_of(lm), bottom);
                os << buf;
            }
        }
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.0f\" y=\"%.0f\" font-size=\"11\" text-anchor=\"middle\">"
                      "%.0f</text>\n",
                      x_of(-max_abs / 1.05), bottom + 16, -max_abs / 1.05);
        os << buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.0f\" y=\"%.0f\" font-size=\"11\" text-anchor=\"middle\">"
                      "0</text>\n",
                      x_of(0), bottom + 16);
        os << buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.0f\" y=\"%.0f\" font-size=\"11\" text-anchor=\"middle\">"
                      "%.0f</text>\n",
                      x_of(max_abs / 1.05), bottom + 16, max_abs / 1.05);
        os << buf;
        os << "</svg>\n";
    });
}

}  // namespace morphofit
