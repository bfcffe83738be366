// regress.hpp - regressors mapping circumference features to tape
// measurements: ordinary least squares, ridge (unpenalized intercept), and
// epsilon-insensitive RBF-kernel support vector regression solved by
// sequential pairwise (SMO-style) optimization.
#pragma once

#include "morphofit/core.hpp"

#include <Eigen/Dense>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <string>
#include <vector>

namespace morphofit {

struct TrainingSet {
    Eigen::MatrixXd features;  // rows = subjects
    Eigen::VectorXd targets;   // meters

    int size() const { return static_cast<int>(features.rows()); }
    int dim() const { return static_cast<int>(features.cols()); }
};

inline TrainingSet make_training_set(const std::vector<std::vector<double>>& rows,
                                     const std::vector<double>& targets) {
    if (rows.size() != targets.size()) throw ParamError("training set: row/target count mismatch");
    if (rows.empty()) throw ParamError("training set: empty");
    TrainingSet set;
    set.features.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(rows[0].size()));
    set.targets.resize(static_cast<Eigen::Index>(targets.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size()) {
            throw ParamError("training set: inconsistent feature dimension");
        }
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            set.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
        set.targets[static_cast<Eigen::Index>(r)] = targets[r];
    }
    return set;
}

enum class RegressorKind { Ols, Ridge, Svr };

inline std::string to_string(RegressorKind kind) {
    switch (kind) {
        case RegressorKind::Ols: return "ols";
        case RegressorKind::Ridge: return "ridge";
        case RegressorKind::Svr: return "svr";
    }
    return "?";
}

inline RegressorKind regressor_kind_from_string(const std::string& s) {
    if (s == "ols") return RegressorKind::Ols;
    if (s == "ridge") return RegressorKind::Ridge;
    if (s == "svr") return RegressorKind::Svr;
    throw ParamError("unknown regressor kind: " + s);
}

struct RegressionModel {
    RegressorKind kind = RegressorKind::Ols;
    // ols/ridge: weights in raw feature space, intercept first.
    Eigen::VectorXd weights;
    // standardization applied at fit; svr predicts in standardized space.
    Eigen::VectorXd feature_mean;
    Eigen::VectorXd feature_std;
    // svr solution.
    Eigen::MatrixXd support;  // standardized support vectors (rows)
    Eigen::VectorXd dual;     // coefficients in [-c_box, c_box]
    double bias = 0.0;
    double bandwidth = 1.0;
    double c_box = 1.0;
    double eps_tube = 0.0;

    int dim() const { return static_cast<int>(feature_mean.size()); }
};

namespace regress_detail {

struct Standardized {
    Eigen::MatrixXd z;
    Eigen::VectorXd mean, std;
};

inline Standardized standardize(const Eigen::MatrixXd& x) {
    Standardized s;
    s.mean = x.colwise().mean();
    s.std.resize(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double var =
            (x.col(c).array() - s.mean[c]).square().sum() / static_cast<double>(x.rows());
        s.std[c] = var > 0 ? std::sqrt(var) : 1.0;
    }
    s.z = (x.rowwise() - s.mean.transpose()).array().rowwise() / s.std.transpose().array();
    return s;
}

// Raw-space weights (intercept first) from a standardized-space solution.
inline Eigen::VectorXd destandardize(const Eigen::VectorXd& w_std, double intercept_std,
                                     const Standardized& s) {
    Eigen::VectorXd w(w_std.size() + 1);
    double w0 = intercept_std;
    for (Eigen::Index c = 0; c < w_std.size(); ++c) {
        w[c + 1] = w_std[c] / s.std[c];
        w0 -= w_std[c] * s.mean[c] / s.std[c];
    }
    w[0] = w0;
    return w;
}

}  // namespace regress_detail

// ---------------------------------------------------------------------------
// Ordinary least squares (orthogonal factorization; exact on full-rank data).
// ---------------------------------------------------------------------------

inline RegressionModel fit_ols(const TrainingSet& data) {
    if (data.size() < 2) throw ParamError("fit_ols: need >= 2 rows");
    if (!data.features.allFinite() || !data.targets.allFinite()) {
        throw ParamError("fit_ols: non-finite training data");
    }
    const auto s = regress_detail::standardize(data.features);
    Eigen::MatrixXd design(data.size(), data.dim() + 1);
    design.col(0).setOnes();
    design.rightCols(data.dim()) = s.z;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < design.cols()) {
        throw NumericError(
            "fit_ols: design matrix is rank deficient (collinear or constant features); "
            "use fit_ridge with lambda > 0");
    }
    const Eigen::VectorXd w = qr.solve(data.targets);

    RegressionModel model;
    model.kind = RegressorKind::Ols;
    model.feature_mean = s.mean;
    model.feature_std = s.std;
    model.weights = regress_detail::destandardize(w.tail(data.dim()), w[0], s);
    return model;
}

// ---------------------------------------------------------------------------
// Ridge regression; the penalty applies to the standardized non-intercept
// weights only (the intercept tracks the target mean under shifts).
// ---------------------------------------------------------------------------

inline RegressionModel fit_ridge(const TrainingSet& data, double lambda) {
    if (data.size() < 2) throw ParamError("fit_ridge: need >= 2 rows");
    if (lambda < 0) throw ParamError("fit_ridge: lambda must be >= 0");
    const auto s = regress_detail::standardize(data.features);
    const double target_mean = data.targets.mean();
    const Eigen::VectorXd centered = data.targets.array() - target_mean;

    Eigen::VectorXd w;
    if (lambda == 0.0) {
        w = s.z.colPivHouseholderQr().solve(centered);
    } else {
        const Eigen::MatrixXd gram =
            s.z.transpose() * s.z + lambda * Eigen::MatrixXd::Identity(data.dim(), data.dim());
        w = gram.ldlt().solve(s.z.transpose() * centered);
    }

    RegressionModel model;
    model.kind = RegressorKind::Ridge;
    model.feature_mean = s.mean;
    model.feature_std = s.std;
    model.weights = regress_detail::destandardize(w, target_mean, s);
    return model;
}

// ---------------------------------------------------------------------------
// Epsilon-insensitive SVR with RBF kernel exp(-|a-b|^2 / (2 bandwidth^2)).
// Dual solved in the 2n box-constrained form by sequential pairwise
// optimization with maximal-violating-pair selection, KKT tolerance 1e-6.
// ---------------------------------------------------------------------------

inline RegressionModel fit_svr(const TrainingSet& data, double c_box, double eps_tube,
                               double bandwidth) {
    if (data.size() < 2) throw ParamError("fit_svr: need >= 2 rows");
    if (c_box <= 0 || bandwidth <= 0 || eps_tube < 0) {
        throw ParamError("fit_svr: hyperparameters must be positive (eps_tube >= 0)");
    }
    const auto s = regress_detail::standardize(data.features);
    const int n = data.size();

    Eigen::MatrixXd kernel(n, n);
    const double inv_two_bw2 = 1.0 / (2.0 * bandwidth * bandwidth);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double k = std::exp(-(s.z.row(i) - s.z.row(j)).squaredNorm() * inv_two_bw2);
            kernel(i, j) = k;
            kernel(j, i) = k;
        }
    }

    // Variables: beta[0..n) = alpha (y=+1), beta[n..2n) = alpha* (y=-1).
    const int m = 2 * n;
    const auto y = [n](int t) { return t < n ? 1.0 : -1.0; };
    const auto q = [&](int a, int b) { return y(a) * y(b) * kernel(a % n, b % n); };
    std::vector<double> beta(m, 0.0), grad(m);
    for (int t = 0; t < m; ++t) {
        grad[t] = eps_tube + (t < n ? -data.targets[t] : data.targets[t - n]);
    }

    const double tol = 1e-6;
    const long max_iters = 200000 + 200L * m;
    double gap = std::numeric_limits<double>::infinity();
    long iter = 0;
    for (; iter < max_iters; ++iter) {
        int i = -1, j = -1;
        double up = -std::numeric_limits<double>::infinity();
        double low = std::numeric_limits<double>::infinity();
        for (int t = 0; t < m; ++t) {
            const bool positive = t < n;
            const double v = -y(t) * grad[t];
            if ((positive && beta[t] < c_box) || (!positive && beta[t] > 0)) {
                if (v > up) {
                    up = v;
                    i = t;
                }
            }
            if ((positive && beta[t] > 0) || (!positive && beta[t] < c_box)) {
                if (v < low) {
                    low = v;
                    j = t;
                }
            }
        }
        gap = up - low;
        if (gap <= tol || i < 0 || j < 0) break;

        const double old_bi = beta[i], old_bj = beta[j];
        if (y(i) != y(j)) {
            double quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if (quad <= 0) quad = 1e-12;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = beta[i] - beta[j];
            beta[i] += delta;
            beta[j] += delta;
            if (diff > 0) {
                if (beta[j] < 0) {
                    beta[j] = 0;
                    beta[i] = diff;
                }
                if (beta[i] > c_box) {
                    beta[i] = c_box;
                    beta[j] = c_box - diff;
                }
            } else {
                if (beta[i] < 0) {
                    beta[i] = 0;
                    beta[j] = -diff;
                }
                if (beta[j] > c_box) {
                    beta[j] = c_box;
                    beta[i] = c_box + diff;
                }
            }
        } else {
            double quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if (quad <= 0) quad = 1e-12;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = beta[i] + beta[j];
            beta[i] -= delta;
            beta[j] += delta;
            if (sum > c_box) {
                if (beta[i] > c_box) {
                    beta[i] = c_box;
                    beta[j] = sum - c_box;
                }
                if (beta[j] > c_box) {
                    beta[j] = c_box;
                    beta[i] = sum - c_box;
                }
            } else {
                if (beta[j] < 0) {
                    beta[j] = 0;
                    beta[i] = sum;
                }
                if (beta[i] < 0) {
                    beta[i] = 0;
                    beta[j] = sum;
                }
            }
        }
        const double dbi = beta[i] - old_bi, dbj = beta[j] - old_bj;
        if (dbi == 0.0 && dbj == 0.0) break;  // numerically stuck at a bound
        for (int t = 0; t < m; ++t) grad[t] += q(t, i) * dbi + q(t, j) * dbj;
    }
    if (gap > tol && iter >= max_iters) {
        throw NumericError("fit_svr: no convergence after " + std::to_string(max_iters) +
                           " iterations (KKT violation " + std::to_string(gap) + ")");
    }

    // Bias from free variables, falling back to the violating-pair midpoint.
    double up = -std::numeric_limits<double>::infinity();
    double low = std::numeric_limits<double>::infinity();
    double free_sum = 0.0;
    int free_count = 0;
    for (int t = 0; t < m; ++t) {
        const double v = -y(t) * grad[t];
        const bool positive = t < n;
        if ((positive && beta[t] < c_box) || (!positive && beta[t] > 0)) up = std::max(up, v);
        if ((positive && beta[t] > 0) || (!positive && beta[t] < c_box)) low = std::min(low, v);
        if (beta[t] > 0 && beta[t] < c_box) {
            free_sum += v;
            ++free_count;
        }
    }
    const double bias = free_count > 0 ? free_sum / free_count : 0.5 * (up + low);

    RegressionModel model;
    model.kind = RegressorKind::Svr;
    model.feature_mean = s.mean;
    model.feature_std = s.std;
    model.bandwidth = bandwidth;
    model.c_box = c_box;
    model.eps_tube = eps_tube;
    model.bias = bias;
    std::vector<int> sv;
    for (int i = 0; i < n; ++i) {
        if (beta[i] - beta[n + i] != 0.0) sv.push_back(i);
    }
    model.support.resize(static_cast<Eigen::Index>(sv.size()), data.dim());
    model.dual.resize(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t k = 0; k < sv.size(); ++k) {
        model.support.row(static_cast<Eigen::Index>(k)) = s.z.row(sv[k]);
        model.dual[static_cast<Eigen::Index>(k)] = beta[sv[k]] - beta[n + sv[k]];
    }
    return model;
}

// ---------------------------------------------------------------------------
// Prediction and serialization.
// ---------------------------------------------------------------------------

inline double predict(const RegressionModel& model, const std::vector<double>& features) {
    if (static_cast<int>(features.size()) != model.dim()) {
        throw ParamError("predict: feature dimension mismatch (" +
                         std::to_string(features.size()) + " vs model " +
                         std::to_string(model.dim()) + ")");
    }
    if (model.kind == RegressorKind::Svr) {
        Eigen::RowVectorXd z(model.dim());
        for (int c = 0; c < model.dim(); ++c) {
            z[c] = (features[static_cast<std::size_t>(c)] - model.feature_mean[c]) /
                   model.feature_std[c];
        }
        const double inv_two_bw2 = 1.0 / (2.0 * model.bandwidth * model.bandwidth);
        double f = model.bias;
        for (Eigen::Index k = 0; k < model.dual.size(); ++k) {
            f += model.dual[k] * std::exp(-(model.support.row(k) - z).squaredNorm() * inv_two_bw2);
        }
        return f;
    }
    double f = model.weights[0];
    for (int c = 0; c < model.dim(); ++c) {
        f += model.weights[c + 1] * features[static_cast<std::size_t>(c)];
    }
    return f;
}

inline nlohmann::json model_to_json(const RegressionModel& model) {
    nlohmann::json j;
    j["schema"] = "morphofit.regressor/1";
    j["kind"] = to_string(model.kind);
    const auto vec = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    j["feature_mean"] = vec(model.feature_mean);
    j["feature_std"] = vec(model.feature_std);
    if (model.kind == RegressorKind::Svr) {
        j["bias"] = model.bias;
        j["bandwidth"] = model.bandwidth;
        j["c_box"] = model.c_box;
        j["eps_tube"] = model.eps_tube;
        j["dual"] = vec(model.dual);
        auto rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < model.support.rows(); ++r) {
            rows.push_back(vec(model.support.row(r).transpose()));
        }
        j["support"] = std::move(rows);
    } else {
        j["weights"] = vec(model.weights);
    }
    return j;
}

inline RegressionModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema").get<std::string>() != "morphofit.regressor/1") {
            throw ParseError("unsupported regressor schema");
        }
        RegressionModel model;
        model.kind = regressor_kind_from_string(j.at("kind").get<std::string>());
        const auto vec = [](const nlohmann::json& a) {
            Eigen::VectorXd v(a.size());
            for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i];
            return v;
        };
        model.feature_mean = vec(j.at("feature_mean"));
        model.feature_std = vec(j.at("feature_std"));
        if (model.kind == RegressorKind::Svr) {
            model.bias = j.at("bias").get<double>();
            model.bandwidth = j.at("bandwidth").get<double>();
            model.c_box = j.at("c_box").get<double>();
            model.eps_tube = j.at("eps_tube").get<double>();
            model.dual = vec(j.at("dual"));
            const auto& rows = j.at("support");
            model.support.resize(static_cast<Eigen::Index>(rows.size()), model.feature_mean.size());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                model.support.row(static_cast<Eigen::Index>(r)) = vec(rows[r]).transpose();
            }
        } else {
            model.weights = vec(j.at("weights"));
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("regressor json: " + std::string(e.what()));
    }
}

// ---------------------------------------------------------------------------
// SVR hyperparameter grid search confined to the given training data
// (deterministic inner K-fold by round robin; first best combo wins ties).
// ---------------------------------------------------------------------------

struct SvrGrid {
    std::vector<double> c_box = {1.0, 10.0, 100.0};
    std::vector<double> bandwidth_scale = {0.5, 1.0, 2.0};  // x median pairwise distance
    std::vector<double> eps_tube = {0.001, 0.002, 0.005};   // meters
};

inline double median_pairwise_distance(const Eigen::MatrixXd& z) {
    std::vector<double> d;
    const Eigen::Index n = z.rows();
    d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((z.row(i) - z.row(j)).norm());
    }
    if (d.empty()) return 1.0;
    std::nth_element(d.begin(), d.begin() + static_cast<long>(d.size() / 2), d.end());
    const double med = d[d.size() / 2];
    return med > 1e-12 ? med : 1.0;
}

inline RegressionModel fit_svr_tuned(const TrainingSet& data, const SvrGrid& grid = {},
                                     int inner_folds = 3) {
    const int n = data.size();
    if (n < 4) {
        const double bw = median_pairwise_distance(regress_detail::standardize(data.features).z);
        return fit_svr(data, 10.0, 0.002, bw);
    }
    inner_folds = std::min(inner_folds, n);
    const double med = median_pairwise_distance(regress_detail::standardize(data.features).z);

    double best_mae = std::numeric_limits<double>::infinity();
    double best_c = grid.c_box[0], best_bw = grid.bandwidth_scale[0] * med,
           best_eps = grid.eps_tube[0];
    for (const double c : grid.c_box) {
        for (const double bws : grid.bandwidth_scale) {
            for (const double eps : grid.eps_tube) {
                double abs_err = 0.0;
                int count = 0;
                for (int fold = 0; fold < inner_folds; ++fold) {
                    std::vector<std::vector<double>> train_x, val_x;
                    std::vector<double> train_y, val_y;
                    for (int r = 0; r < n; ++r) {
                        std::vector<double> row(data.features.row(r).data(),
                                                data.features.row(r).data() + data.dim());
                        if (r % inner_folds == fold) {
                            val_x.push_back(std::move(row));
                            val_y.push_back(data.targets[r]);
                        } else {
                            train_x.push_back(std::move(row));
                            train_y.push_back(data.targets[r]);
                        }
                    }
                    if (train_x.size() < 2 || val_x.empty()) continue;
                    const RegressionModel m =
                        fit_svr(make_training_set(train_x, train_y), c, eps, bws * med);
                    for (std::size_t v = 0; v < val_x.size(); ++v) {
                        abs_err += std::abs(predict(m, val_x[v]) - val_y[v]);
                        ++count;
                    }
                }
                const double mae = count > 0 ? abs_err / count : std::numeric_limits<double>::infinity();
                if (mae < best_mae) {
                    best_mae = mae;
                    best_c = c;
                    best_bw = bws * med;
                    best_eps = eps;
                }
            }
        }
    }
    return fit_svr(data, best_c, best_eps, best_bw);
}

}  // namespace morphofit
