// prealign.hpp - deterministic scan normalization (unit scale, facing, ground
// contact) and registration initialization (stature coefficient, arm angle).
#pragma once

#include "morphofit/core.hpp"
#include "morphofit/mesh.hpp"
#include "morphofit/nearest.hpp"
#include "morphofit/template_model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <vector>

namespace morphofit {

struct AlignmentReport {
    double applied_scale = 1.0;
    double applied_yaw = 0.0;       // radians about Z
    Vec3 applied_translation = Vec3::Zero();
    double estimated_beta1 = 0.0;
    double estimated_arm_angle = 0.0;
};

struct NormalizeOptions {
    bool auto_orient = true;  // false: trust the scanner-provided orientation
};

namespace prealign_detail {

inline double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ParamError("quantile of empty set");
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t idx = static_cast<std::size_t>(pos);
    std::nth_element(values.begin(), values.begin() + static_cast<long>(idx), values.end());
    return values[idx];
}

}  // namespace prealign_detail

/// Normalized scan: meters (bounding-box height heuristic), facing +Y,
/// lowest point on z = 0, vertical axis through the horizontal bounding-box
/// center passing through the origin. Output vertex v' = R_yaw * (s * v) + t.
inline std::pair<TriMesh, AlignmentReport> normalize_scan(const TriMesh& scan,
                                                          const NormalizeOptions& options = {}) {
    if (scan.vertex_count() == 0) throw ParamError("normalize_scan: empty scan");
    const auto [lo, hi] = scan.bounding_box();
    const Vec3 extent = hi - lo;
    if (extent.norm() < 1e-12) throw ParamError("normalize_scan: degenerate scan (zero bounding box)");

    AlignmentReport report;

    // Unit heuristic on the vertical extent: > 100 -> millimeters,
    // (3, 100] -> centimeters, else meters.
    const double height = extent.z();
    if (height > 100.0) {
        report.applied_scale = 1e-3;
    } else if (height > 3.0) {
        report.applied_scale = 1e-2;
    } else {
        report.applied_scale = 1.0;
    }

    std::vector<Vec3> verts = scan.vertices();
    for (Vec3& v : verts) v *= report.applied_scale;

    if (options.auto_orient) {
        // Principal horizontal axis (the shoulder line) goes to X. The 180deg
        // ambiguity is resolved by the forward-reaching toes: in the lowest
        // band the +y tail is much longer than the -y tail. Quantile-based
        // extents are invariant to the smooth shape modes.
        Eigen::Vector2d mean = Eigen::Vector2d::Zero();
        for (const Vec3& v : verts) mean += v.head<2>();
        mean /= static_cast<double>(verts.size());
        double cxx = 0, cxy = 0, cyy = 0;
        for (const Vec3& v : verts) {
            const Eigen::Vector2d d = v.head<2>() - mean;
            cxx += d.x() * d.x();
            cxy += d.x() * d.y();
            cyy += d.y() * d.y();
        }
        double yaw = 0.0;
        if (std::abs(cxy) > 1e-12 * (cxx + cyy) || cyy > cxx) {
            yaw = -0.5 * std::atan2(2.0 * cxy, cxx - cyy);
        }
        Eigen::Rotation2Dd r2(yaw);
        double min_z = std::numeric_limits<double>::infinity();
        double max_z = -std::numeric_limits<double>::infinity();
        for (const Vec3& v : verts) {
            min_z = std::min(min_z, v.z());
            max_z = std::max(max_z, v.z());
        }
        const double band_top = min_z + 0.14 * (max_z - min_z);
        std::vector<double> band_y;
        for (const Vec3& v : verts) {
            if (v.z() <= band_top) band_y.push_back((r2 * (v.head<2>() - mean)).y());
        }
        if (band_y.size() >= 8) {
            const double med = prealign_detail::quantile(band_y, 0.5);
            const double front = prealign_detail::quantile(band_y, 0.98) - med;
            const double back = med - prealign_detail::quantile(band_y, 0.02);
            if (front < back) yaw += M_PI;
        } else {
            log_warn("normalize_scan: too few low-band points for facing detection");
        }
        report.applied_yaw = std::remainder(yaw, 2.0 * M_PI);
        const Eigen::Rotation2Dd rot(report.applied_yaw);
        for (Vec3& v : verts) v.head<2>() = rot * v.head<2>();
    }

    Vec3 nlo = verts[0], nhi = verts[0];
    for (const Vec3& v : verts) {
        nlo = nlo.cwiseMin(v);
        nhi = nhi.cwiseMax(v);
    }
    report.applied_translation =
        Vec3(-0.5 * (nlo.x() + nhi.x()), -0.5 * (nlo.y() + nhi.y()), -nlo.z());
    for (Vec3& v : verts) v += report.applied_translation;

    return {scan.with_vertices(std::move(verts)), report};
}

/// Applies the same similarity transform normalize_scan chose for a scan.
/// Used to bring a subject's true mesh into the registration frame.
inline TriMesh apply_alignment(const TriMesh& mesh, const AlignmentReport& report) {
    const Eigen::Rotation2Dd rot(report.applied_yaw);
    std::vector<Vec3> verts = mesh.vertices();
    for (Vec3& v : verts) {
        v *= report.applied_scale;
        v.head<2>() = rot * v.head<2>();
        v += report.applied_translation;
    }
    return mesh.with_vertices(std::move(verts));
}

// ---------------------------------------------------------------------------
// Stature initialization: least-squares line beta1 = slope * height + intercept.
// ---------------------------------------------------------------------------

struct HeightModel {
    double slope = 0.0;
    double intercept = 0.0;

    double estimate_beta1(double height_m) const { return slope * height_m + intercept; }
};

inline HeightModel fit_height_model(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.size() < 2) throw ParamError("fit_height_model: need >= 2 (height, beta1) pairs");
    double mean_h = 0, mean_b = 0;
    for (const auto& [h, b] : pairs) {
        mean_h += h;
        mean_b += b;
    }
    mean_h /= static_cast<double>(pairs.size());
    mean_b /= static_cast<double>(pairs.size());
    double shh = 0, shb = 0;
    for (const auto& [h, b] : pairs) {
        shh += (h - mean_h) * (h - mean_h);
        shb += (h - mean_h) * (b - mean_b);
    }
    if (shh < 1e-18) throw ParamError("fit_height_model: all heights equal");
    HeightModel model;
    model.slope = shb / shh;
    model.intercept = mean_b - model.slope * mean_h;
    return model;
}

/// Height model sampled from the template itself: blend the stature mode over
/// a grid of beta1 values and measure the resulting mesh heights.
inline HeightModel template_height_model(const ParametricTemplate& tpl) {
    std::vector<std::pair<double, double>> pairs;
    for (double b = -3.0; b <= 3.0 + 1e-9; b += 1.0) {
        ShapeParams shape;
        shape.beta = Eigen::VectorXd::Zero(tpl.mode_count());
        shape.beta[0] = b;
        pairs.emplace_back(mesh_height(blend_shape(tpl, shape)), b);
    }
    return fit_height_model(pairs);
}

// ---------------------------------------------------------------------------
// Arm-angle initialization: test candidate shoulder abductions against the
// scan surface, keep the argmin of the mean vertex-to-surface distance.
// ---------------------------------------------------------------------------

inline std::vector<double> default_arm_candidates() {
    std::vector<double> c;
    for (int i = 0; i <= 10; ++i) c.push_back(0.05 * i);
    return c;
}

inline double init_arm_angle(const ParametricTemplate& tpl, const ShapeParams& shape,
                             const SurfaceIndex& scan_index, const std::vector<double>& candidates) {
    if (candidates.empty()) throw ParamError("init_arm_angle: empty candidate list");
    const TriMesh blended = blend_shape(tpl, shape);
    double best_angle = candidates.front();
    double best_cost = std::numeric_limits<double>::infinity();
    for (const double angle : candidates) {
        const TriMesh posed = pose_mesh(blended, tpl, abduction_pose(tpl, angle));
        double sum = 0.0;
        for (const Vec3& v : posed.vertices()) sum += scan_index.nearest(v).distance;
        const double cost = sum / static_cast<double>(posed.vertex_count());
        if (cost < best_cost || (cost == best_cost && angle < best_angle)) {
            best_cost = cost;
            best_angle = angle;
        }
    }
    return best_angle;
}

inline double init_arm_angle(const ParametricTemplate& tpl, const ShapeParams& shape,
                             const TriMesh& scan, const std::vector<double>& candidates) {
    const SurfaceIndex index(scan);
    return init_arm_angle(tpl, shape, index, candidates);
}

inline void save_alignment_report(const AlignmentReport& report,
                                  const std::filesystem::path& path) {
    nlohmann::json j;
    j["applied_scale"] = report.applied_scale;
    j["applied_yaw"] = report.applied_yaw;
    j["applied_translation"] = {report.applied_translation.x(), report.applied_translation.y(),
                                report.applied_translation.z()};
    j["estimated_beta1"] = report.estimated_beta1;
    j["estimated_arm_angle"] = report.estimated_arm_angle;
    write_file_atomic(path, [&](std::ostream& os) { os << j.dump(1); });
}

}  // namespace morphofit
