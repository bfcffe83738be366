// nricp.hpp - locally affine non-rigid ICP: per-vertex 3x4 transforms solved
// from a stacked sparse least-squares system (stiffness + data + landmark
// rows), with a decreasing-stiffness outer loop and a fixed-point inner loop.
#pragma once

#include "morphofit/core.hpp"
#include "morphofit/mesh.hpp"
#include "morphofit/nearest.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <optional>
#include <tuple>
#include <vector>

namespace morphofit {

using SpMat = Eigen::SparseMatrix<double>;

/// Per-vertex affine transforms, stacked as a 4n x 3 array; block row 4i..4i+3
/// holds the transpose of the 3x4 transform of vertex i.
struct DeformationParams {
    Eigen::MatrixXd x;

    int vertex_count() const { return static_cast<int>(x.rows() / 4); }
};

inline DeformationParams identity_deformation(std::size_t n) {
    DeformationParams p;
    p.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(4 * n), 3);
    for (std::size_t i = 0; i < n; ++i) {
        p.x.block<3, 3>(static_cast<Eigen::Index>(4 * i), 0).setIdentity();
    }
    return p;
}

/// Nearest-point targets per template vertex. weight 0 marks vertices gated
/// out as missing data; their targets are ignored everywhere.
struct CorrespondenceSet {
    Eigen::MatrixXd targets;    // n x 3
    Eigen::VectorXd weights;    // n, entries in {0, 1}
    Eigen::VectorXd distances;  // n, nearest distances before gating

    double active_fraction() const {
        return weights.size() == 0 ? 0.0 : weights.sum() / static_cast<double>(weights.size());
    }
    double mean_active_distance() const {
        const double active = weights.sum();
        return active == 0 ? 0.0 : weights.dot(distances) / active;
    }
};

/// Optional pre-labeled point constraints (the set ships empty by default).
struct Landmarks {
    std::vector<std::pair<int, Vec3>> points;  // (template vertex, target)
    double beta_l = 1.0;

    bool empty() const { return points.empty(); }
};

struct NricpConfig {
    std::vector<double> stiffness_schedule;  // strictly decreasing, positive
    double gamma = 1.0;
    double epsilon = 0.0;        // 0: auto = 1e-4 * sqrt(n)
    int max_inner_iters = 20;
    double dist_gate_multiple = 4.0;  // <= 0 disables the distance gate
    double normal_gate_deg = 60.0;    // <= 0 disables the normal gate
    bool allow_vertex_targets = true;  // vertex-only fallback for faceless scans
};

/// Desk-scale default: 8 geometrically spaced stiffness values from 100 to 1.
inline std::vector<double> desk_schedule() {
    std::vector<double> s;
    for (int i = 0; i < 8; ++i) s.push_back(100.0 * std::pow(100.0, -i / 7.0));
    return s;
}

/// The 100-to-1 arithmetic schedule with step 1 (slow, full-quality option).
inline std::vector<double> paper_schedule() {
    std::vector<double> s;
    for (int a = 100; a >= 1; --a) s.push_back(static_cast<double>(a));
    return s;
}

inline NricpConfig default_nricp_config() {
    NricpConfig c;
    c.stiffness_schedule = desk_schedule();
    return c;
}

struct TraceRow {
    double alpha = 0;
    int iter = 0;
    double e_d = 0, e_s = 0, e_l = 0;
    double delta_x = 0;
    double active_fraction = 0;
};

struct RegistrationTrace {
    std::vector<TraceRow> rows;
};

inline void write_trace_csv(const RegistrationTrace& trace, const std::filesystem::path& path) {
    write_file_atomic(path, [&](std::ostream& os) {
        os << "alpha,iter,E_d,E_s,E_l,delta_x,active_fraction\n";
        char buf[192];
        for (const TraceRow& r : trace.rows) {
            std::snprintf(buf, sizeof(buf), "%.9g,%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.alpha, r.iter,
                          r.e_d, r.e_s, r.e_l, r.delta_x, r.active_fraction);
            os << buf;
        }
    });
}

// ---------------------------------------------------------------------------
// Correspondence search.
// ---------------------------------------------------------------------------

/// Nearest-point target for either a triangulated scan or a bare point cloud.
class ScanTarget {
public:
    ScanTarget(const TriMesh& scan, bool allow_vertex_targets) : scan_(&scan) {
        if (scan.face_count() > 0) {
            surface_.emplace(scan);
        } else if (allow_vertex_targets) {
            points_.emplace(scan.vertices());
        } else {
            throw ParamError("scan has no faces and vertex-target fallback is disabled");
        }
    }

    bool has_normals() const { return surface_.has_value(); }

    /// (target point, distance, surface normal or zero).
    std::tuple<Vec3, double, Vec3> nearest(const Vec3& query) const {
        if (surface_) {
            const SurfaceHit hit = surface_->nearest(query);
            return {hit.point, hit.distance, scan_->face_normals()[hit.face_index]};
        }
        const auto [index, distance] = points_->nearest(query);
        return {scan_->vertices()[index], distance, Vec3::Zero()};
    }

private:
    const TriMesh* scan_;
    std::optional<SurfaceIndex> surface_;
    std::optional<PointIndex> points_;
};

/// Nearest scan-surface targets for every deformed template vertex; w_i = 0
/// where the match fails the distance gate (beyond a multiple of the median
/// nearest distance) or the surface-normal compatibility gate.
inline CorrespondenceSet find_correspondences(const TriMesh& deformed, const ScanTarget& target,
                                              const NricpConfig& config) {
    const std::size_t n = deformed.vertex_count();
    CorrespondenceSet corr;
    corr.targets.resize(static_cast<Eigen::Index>(n), 3);
    corr.weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
    corr.distances.resize(static_cast<Eigen::Index>(n));

    std::vector<Vec3> normals(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto [point, distance, normal] = target.nearest(deformed.vertices()[i]);
        corr.targets.row(static_cast<Eigen::Index>(i)) = point.transpose();
        corr.distances[static_cast<Eigen::Index>(i)] = distance;
        normals[i] = normal;
    }

    if (config.dist_gate_multiple > 0 && n > 0) {
        std::vector<double> sorted(corr.distances.data(), corr.distances.data() + n);
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(n / 2), sorted.end());
        const double median = sorted[n / 2];
        const double cutoff = config.dist_gate_multiple * median;
        for (std::size_t i = 0; i < n; ++i) {
            if (corr.distances[static_cast<Eigen::Index>(i)] > cutoff) {
                corr.weights[static_cast<Eigen::Index>(i)] = 0.0;
            }
        }
    }
    if (config.normal_gate_deg > 0 && target.has_normals()) {
        const double min_dot = std::cos(config.normal_gate_deg * M_PI / 180.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (deformed.vertex_normals()[i].dot(normals[i]) < min_dot) {
                corr.weights[static_cast<Eigen::Index>(i)] = 0.0;
            }
        }
    }
    return corr;
}

inline CorrespondenceSet find_correspondences(const TriMesh& deformed, const TriMesh& scan,
                                              const NricpConfig& config) {
    return find_correspondences(deformed, ScanTarget(scan, config.allow_vertex_targets), config);
}

// ---------------------------------------------------------------------------
// System assembly. Rows are scaled so that || A X - B ||_F^2 equals
// E_d + alpha * E_s + beta_l * E_l exactly (sqrt weights on the stiffness and
// landmark blocks). Zero-weight data rows are kept as structural zeros so the
// sparsity pattern is independent of the gating.
// ---------------------------------------------------------------------------

inline std::pair<SpMat, Eigen::MatrixXd> assemble_system(const TriMesh& tpl,
                                                         const CorrespondenceSet& corr,
                                                         const Landmarks& landmarks, double alpha,
                                                         double gamma) {
    const Eigen::Index n = static_cast<Eigen::Index>(tpl.vertex_count());
    const Eigen::Index e = static_cast<Eigen::Index>(tpl.edge_count());
    const Eigen::Index l = static_cast<Eigen::Index>(landmarks.points.size());
    if (alpha <= 0) throw ParamError("assemble_system: alpha must be positive");
    if (corr.targets.rows() != n || corr.weights.size() != n) {
        throw ParamError("assemble_system: correspondence set does not match template size");
    }

    const Eigen::Index rows = 4 * e + n + l;
    const Eigen::Index cols = 4 * n;
    SpMat a(rows, cols);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(rows, 3);

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(8 * e + 4 * n + 4 * l));

    const double sqrt_alpha = std::sqrt(alpha);
    const double g[4] = {1.0, 1.0, 1.0, gamma};
    for (Eigen::Index r = 0; r < e; ++r) {
        const auto& edge = tpl.edges()[static_cast<std::size_t>(r)];
        for (int k = 0; k < 4; ++k) {
            trips.emplace_back(4 * r + k, 4 * edge.first + k, sqrt_alpha * g[k]);
            trips.emplace_back(4 * r + k, 4 * edge.second + k, -sqrt_alpha * g[k]);
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const double w = corr.weights[i];
        const Vec3& v = tpl.vertices()[static_cast<std::size_t>(i)];
        const Eigen::Index row = 4 * e + i;
        trips.emplace_back(row, 4 * i + 0, w * v.x());
        trips.emplace_back(row, 4 * i + 1, w * v.y());
        trips.emplace_back(row, 4 * i + 2, w * v.z());
        trips.emplace_back(row, 4 * i + 3, w);
        b.row(row) = w * corr.targets.row(i);
    }
    const double sqrt_beta = landmarks.empty() ? 0.0 : std::sqrt(landmarks.beta_l);
    for (Eigen::Index j = 0; j < l; ++j) {
        const auto& [vertex, point] = landmarks.points[static_cast<std::size_t>(j)];
        if (vertex < 0 || vertex >= n) throw ParamError("assemble_system: landmark vertex out of range");
        const Vec3& v = tpl.vertices()[static_cast<std::size_t>(vertex)];
        const Eigen::Index row = 4 * e + n + j;
        trips.emplace_back(row, 4 * vertex + 0, sqrt_beta * v.x());
        trips.emplace_back(row, 4 * vertex + 1, sqrt_beta * v.y());
        trips.emplace_back(row, 4 * vertex + 2, sqrt_beta * v.z());
        trips.emplace_back(row, 4 * vertex + 3, sqrt_beta);
        b.row(row) = sqrt_beta * point.transpose();
    }
    a.setFromTriplets(trips.begin(), trips.end());
    return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Energies evaluated directly from their definitions (independently of the
// stacked system; the two routes are cross-checked in the tests).
// ---------------------------------------------------------------------------

inline Vec3 transform_vertex(const Eigen::MatrixXd& x, Eigen::Index i, const Vec3& v) {
    Eigen::RowVector4d hom;
    hom << v.x(), v.y(), v.z(), 1.0;
    return (hom * x.block<4, 3>(4 * i, 0)).transpose();
}

/// (E_d, E_s, E_l): weighted squared point distances, G-weighted neighbor
/// transform differences summed over edges, and squared landmark residuals.
inline std::tuple<double, double, double> energy(const TriMesh& tpl, const DeformationParams& params,
                                                 const CorrespondenceSet& corr,
                                                 const Landmarks& landmarks, double gamma) {
    const Eigen::Index n = static_cast<Eigen::Index>(tpl.vertex_count());
    if (params.x.rows() != 4 * n || params.x.cols() != 3) {
        throw ParamError("energy: deformation parameter shape mismatch");
    }
    if (corr.targets.rows() != n) throw ParamError("energy: correspondence size mismatch");

    double e_d = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (corr.weights[i] == 0.0) continue;
        const Vec3 moved = transform_vertex(params.x, i, tpl.vertices()[static_cast<std::size_t>(i)]);
        e_d += corr.weights[i] * (moved - corr.targets.row(i).transpose()).squaredNorm();
    }

    double e_s = 0.0;
    const double g2[4] = {1.0, 1.0, 1.0, gamma * gamma};
    for (const auto& edge : tpl.edges()) {
        const Eigen::Matrix<double, 4, 3> diff =
            params.x.block<4, 3>(4 * edge.first, 0) - params.x.block<4, 3>(4 * edge.second, 0);
        for (int k = 0; k < 4; ++k) e_s += g2[k] * diff.row(k).squaredNorm();
    }

    double e_l = 0.0;
    for (const auto& [vertex, point] : landmarks.points) {
        const Vec3 moved =
            transform_vertex(params.x, vertex, tpl.vertices()[static_cast<std::size_t>(vertex)]);
        e_l += (moved - point).squaredNorm();
    }
    return {e_d, e_s, e_l};
}

// ---------------------------------------------------------------------------
// Least-squares solve via sparse normal equations (Cholesky), with an
// iterative fallback when the factorization reports trouble.
// ---------------------------------------------------------------------------

namespace nricp_detail {

class NormalEquationSolver {
public:
    Eigen::MatrixXd solve(const SpMat& a, const Eigen::MatrixXd& b) {
        const SpMat ata = (SpMat(a.transpose()) * a).pruned();
        const Eigen::MatrixXd atb = a.transpose() * b;
        const double scale = std::max(atb.norm(), 1e-300);

        if (!analyzed_) {
            ldlt_.analyzePattern(ata);
            analyzed_ = true;
        }
        ldlt_.factorize(ata);
        Eigen::MatrixXd x;
        bool ok = ldlt_.info() == Eigen::Success;
        if (ok) {
            x = ldlt_.solve(atb);
            ok = x.allFinite() && (ata * x - atb).norm() <= 1e-9 * scale;
        }
        if (!ok) {
            log_debug("normal-equation factorization weak, falling back to LSQR-style CG");
            Eigen::LeastSquaresConjugateGradient<SpMat> lscg;
            lscg.setTolerance(1e-10);
            lscg.setMaxIterations(8 * a.cols());
            lscg.compute(a);
            x = lscg.solve(b);
            if (!x.allFinite() || (ata * x - atb).norm() > 1e-6 * scale) {
                throw NumericError(
                    "solve_step: normal equations are singular and the iterative fallback did "
                    "not converge (rank-deficient system)");
            }
        }
        return x;
    }

private:
    Eigen::SimplicialLDLT<SpMat> ldlt_;
    bool analyzed_ = false;
};

}  // namespace nricp_detail

/// Exact minimizer of || A X - B ||_F^2 via the normal equations.
inline DeformationParams solve_step(const SpMat& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows()) throw ParamError("solve_step: A and B row counts differ");
    nricp_detail::NormalEquationSolver solver;
    DeformationParams params;
    params.x = solver.solve(a, b);
    return params;
}

/// v_i <- X_i [v_i; 1], connectivity unchanged.
inline TriMesh apply_deformation(const TriMesh& tpl, const DeformationParams& params) {
    const Eigen::Index n = static_cast<Eigen::Index>(tpl.vertex_count());
    if (params.x.rows() != 4 * n || params.x.cols() != 3) {
        throw ParamError("apply_deformation: parameter count does not match vertex count");
    }
    if (!params.x.allFinite()) throw ParamError("apply_deformation: non-finite parameters");
    std::vector<Vec3> verts(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        verts[static_cast<std::size_t>(i)] =
            transform_vertex(params.x, i, tpl.vertices()[static_cast<std::size_t>(i)]);
    }
    return tpl.with_vertices(std::move(verts));
}

struct RegistrationResult {
    DeformationParams params;
    TriMesh deformed;
    RegistrationTrace trace;
};

/// Full two-loop registration: outer loop over the decreasing stiffness
/// schedule, inner fixed-point loop alternating correspondence search,
/// assembly and solve until ||X_j - X_{j-1}||_F drops under epsilon.
inline RegistrationResult register_mesh(const TriMesh& tpl, const TriMesh& scan,
                                        const Landmarks& landmarks, const NricpConfig& config) {
    if (config.stiffness_schedule.empty()) {
        throw ParamError("register: empty stiffness schedule");
    }
    for (std::size_t i = 0; i < config.stiffness_schedule.size(); ++i) {
        if (config.stiffness_schedule[i] <= 0) {
            throw ParamError("register: stiffness values must be positive");
        }
        if (i > 0 && config.stiffness_schedule[i] >= config.stiffness_schedule[i - 1]) {
            throw ParamError("register: stiffness schedule must be strictly decreasing");
        }
    }
    if (config.max_inner_iters < 1) throw ParamError("register: max_inner_iters must be >= 1");

    const std::size_t n = tpl.vertex_count();
    const double eps = config.epsilon > 0 ? config.epsilon : 1e-4 * std::sqrt(static_cast<double>(n));
    const ScanTarget target(scan, config.allow_vertex_targets);

    RegistrationResult result;
    result.params = identity_deformation(n);
    result.deformed = tpl;
    nricp_detail::NormalEquationSolver solver;

    for (const double alpha : config.stiffness_schedule) {
        for (int iter = 1; iter <= config.max_inner_iters; ++iter) {
            const CorrespondenceSet corr = find_correspondences(result.deformed, target, config);
            if (corr.weights.sum() == 0.0) {
                throw NumericError("register: no active correspondences (coverage 0 of " +
                                   std::to_string(n) + " vertices)");
            }
            // Every connected component needs at least one active data row,
            // otherwise its block of the normal equations is singular.
            std::vector<char> component_active(static_cast<std::size_t>(tpl.component_count()), 0);
            for (std::size_t i = 0; i < n; ++i) {
                const int comp = tpl.component_of(static_cast<int>(i));
                if (comp >= 0 && corr.weights[static_cast<Eigen::Index>(i)] > 0) {
                    component_active[static_cast<std::size_t>(comp)] = 1;
                }
            }
            for (std::size_t comp = 0; comp < component_active.size(); ++comp) {
                if (!component_active[comp]) {
                    throw NumericError(
                        "register: connected component " + std::to_string(comp) +
                        " has no active correspondences (unconstrained block); coverage " +
                        std::to_string(corr.active_fraction()));
                }
            }

            const auto [a, b] = assemble_system(tpl, corr, landmarks, alpha, config.gamma);
            DeformationParams next;
            next.x = solver.solve(a, b);
            const double delta = (next.x - result.params.x).norm();
            const auto [e_d, e_s, e_l] = energy(tpl, next, corr, landmarks, config.gamma);
            result.trace.rows.push_back(
                {alpha, iter, e_d, e_s, e_l, delta, corr.active_fraction()});
            result.params = std::move(next);
            result.deformed = apply_deformation(tpl, result.params);
            if (delta < eps) break;
        }
    }
    return result;
}

}  // namespace morphofit
