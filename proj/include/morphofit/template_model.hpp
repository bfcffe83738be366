// template_model.hpp - deformable body template: canonical mesh, PCA-style
// shape basis, skeleton with linear blend skinning, measurement-path registry,
// and the procedural generator that produces a self-contained humanoid.
#pragma once

#include "morphofit/core.hpp"
#include "morphofit/mesh.hpp"
#include "morphofit/obj_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace morphofit {

struct Joint {
    std::string name;
    int parent = -1;  // -1: root
    Vec3 rest = Vec3::Zero();
};

struct MeasurementPath {
    bool closed = true;
    std::vector<int> vertices;
};

/// One anthropometric target: named set of surface paths + acceptance limit.
struct MeasurementSpec {
    std::string name;
    double limit_mm = 0.0;  // <= 0 means "no limit defined"
    std::vector<MeasurementPath> paths;
};

/// Tape-oracle metadata: the anchor ring locating a station's cutting plane.
struct Station {
    std::string name;
    std::vector<int> anchors;
};

struct ShapeParams {
    Eigen::VectorXd beta;
};

struct PoseParams {
    std::vector<Vec3> theta;  // axis-angle per joint
};

struct ParametricTemplate {
    TriMesh canonical;
    Eigen::MatrixXd shape_basis;   // (3V x modes), column n = displacement field S_n
    std::vector<Joint> skeleton;
    Eigen::MatrixXd skin_weights;  // (V x K), rows sum to 1
    std::vector<MeasurementSpec> paths;
    std::vector<Station> stations;
    std::map<std::string, int> named_points;  // e.g. head_top, left_toe
    double nominal_height = 0.0;
    int left_shoulder = -1, right_shoulder = -1;  // joint ids used for arm-angle init

    int mode_count() const { return static_cast<int>(shape_basis.cols()); }
    int joint_count() const { return static_cast<int>(skeleton.size()); }

    const MeasurementSpec& spec(const std::string& name) const {
        for (const auto& s : paths) {
            if (s.name == name) return s;
        }
        throw ParamError("unknown measurement: " + name);
    }
    const Station& station(const std::string& name) const {
        for (const auto& s : stations) {
            if (s.name == name) return s;
        }
        throw ParamError("unknown station: " + name);
    }
};

inline double mesh_height(const TriMesh& mesh) {
    const auto [lo, hi] = mesh.bounding_box();
    return hi.z() - lo.z();
}

// ---------------------------------------------------------------------------
// Shape blending (linear PCA reconstruction around the mean shape).
// ---------------------------------------------------------------------------

inline TriMesh blend_shape(const ParametricTemplate& tpl, const ShapeParams& shape) {
    if (shape.beta.size() != tpl.mode_count()) {
        throw ParamError("blend_shape: beta has " + std::to_string(shape.beta.size()) +
                         " coefficients, template has " + std::to_string(tpl.mode_count()) +
                         " modes");
    }
    if (!shape.beta.allFinite()) throw ParamError("blend_shape: non-finite beta");
    const Eigen::VectorXd disp = tpl.shape_basis * shape.beta;
    std::vector<Vec3> vertices = tpl.canonical.vertices();
    for (std::size_t v = 0; v < vertices.size(); ++v) {
        vertices[v] += Vec3(disp[3 * v + 0], disp[3 * v + 1], disp[3 * v + 2]);
    }
    return tpl.canonical.with_vertices(std::move(vertices));
}

// ---------------------------------------------------------------------------
// Linear blend skinning. Joint rest positions are fixed in the canonical frame
// and scale with overall stature (measured mesh height / nominal height).
// ---------------------------------------------------------------------------

inline Eigen::Matrix3d axis_angle_rotation(const Vec3& theta) {
    const double angle = theta.norm();
    if (angle < 1e-16) return Eigen::Matrix3d::Identity();
    return Eigen::AngleAxisd(angle, theta / angle).toRotationMatrix();
}

inline TriMesh pose_mesh(const TriMesh& mesh, const ParametricTemplate& tpl,
                         const PoseParams& pose) {
    const int K = tpl.joint_count();
    if (static_cast<int>(pose.theta.size()) != K) {
        throw ParamError("pose_mesh: expected " + std::to_string(K) + " joint angles, got " +
                         std::to_string(pose.theta.size()));
    }
    if (static_cast<Eigen::Index>(mesh.vertex_count()) != tpl.skin_weights.rows()) {
        throw ParamError("pose_mesh: mesh vertex count does not match skin weights");
    }
    for (const Vec3& t : pose.theta) {
        if (!t.allFinite()) throw ParamError("pose_mesh: non-finite pose angle");
    }

    const double scale = tpl.nominal_height > 0 ? mesh_height(mesh) / tpl.nominal_height : 1.0;

    // Global affine transform per joint, composed parent to child. Each local
    // transform rotates about the (stature-scaled) joint rest position.
    std::vector<Eigen::Matrix3d> rot(K);
    std::vector<Vec3> trans(K);
    for (int k = 0; k < K; ++k) {
        const Joint& joint = tpl.skeleton[k];
        const Vec3 pivot = joint.rest * scale;
        const Eigen::Matrix3d local_r = axis_angle_rotation(pose.theta[k]);
        const Vec3 local_t = pivot - local_r * pivot;
        if (joint.parent < 0) {
            rot[k] = local_r;
            trans[k] = local_t;
        } else {
            if (joint.parent >= k) throw ParamError("pose_mesh: joints must be parent-ordered");
            rot[k] = rot[joint.parent] * local_r;
            trans[k] = rot[joint.parent] * local_t + trans[joint.parent];
        }
    }

    std::vector<Vec3> out(mesh.vertex_count());
    const auto& verts = mesh.vertices();
    for (std::size_t v = 0; v < verts.size(); ++v) {
        Vec3 acc = Vec3::Zero();
        for (int k = 0; k < K; ++k) {
            const double w = tpl.skin_weights(static_cast<Eigen::Index>(v), k);
            if (w == 0.0) continue;
            acc += w * (rot[k] * verts[v] + trans[k]);
        }
        out[v] = acc;
    }
    return mesh.with_vertices(std::move(out));
}

inline PoseParams zero_pose(const ParametricTemplate& tpl) {
    PoseParams p;
    p.theta.assign(tpl.joint_count(), Vec3::Zero());
    return p;
}

/// Pose with both shoulders abducted by `angle` (radians, positive = arms
/// away from the torso) relative to the canonical pose.
inline PoseParams abduction_pose(const ParametricTemplate& tpl, double left_angle,
                                 double right_angle) {
    PoseParams p = zero_pose(tpl);
    if (tpl.left_shoulder >= 0) p.theta[tpl.left_shoulder] = Vec3(0, -left_angle, 0);
    if (tpl.right_shoulder >= 0) p.theta[tpl.right_shoulder] = Vec3(0, right_angle, 0);
    return p;
}

inline PoseParams abduction_pose(const ParametricTemplate& tpl, double angle) {
    return abduction_pose(tpl, angle, angle);
}

// ---------------------------------------------------------------------------
// Procedural template generator. The humanoid is a union of six closed
// tube-of-revolution components (torso, head+neck, arms, legs) in the
// instructed pose: arms abducted 20 degrees, feet 30 cm apart, toes forward.
// Cross-sections carry a radial wobble so they are gently non-convex, which
// keeps surface ring paths strictly longer than a taut tape around them.
// ---------------------------------------------------------------------------

namespace tpl_detail {

struct RingDef {
    Vec3 center;
    double rx = 0.0, ry = 0.0;  // in-plane radii (u and v directions)
};

struct SegmentDef {
    std::string name;
    std::vector<RingDef> rings;
    double wobble_amp = 0.0;
    int wobble_freq = 0;
    double wobble_phase = 0.0;
    // skinning chain: (joint id, axial coordinate), coordinate increasing
    std::vector<std::pair<int, double>> chain;
    Vec3 chain_origin = Vec3::Zero();  // axial coordinate = (v - origin) . axis
    Vec3 chain_axis = Vec3::UnitZ();
};

struct BuiltSegment {
    int base_vertex = 0;
    int ring_count = 0;
    int ring_size = 0;
    int begin_pole = -1, end_pole = -1;
};

inline double smoothstep(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

// Minimal rotation taking unit vector a to unit vector b (parallel transport).
inline Eigen::Matrix3d rotation_between(const Vec3& a, const Vec3& b) {
    const double c = std::clamp(a.dot(b), -1.0, 1.0);
    const Vec3 axis = a.cross(b);
    const double s = axis.norm();
    if (s < 1e-14) {
        if (c > 0) return Eigen::Matrix3d::Identity();
        // Opposite vectors: rotate pi about any perpendicular axis.
        Vec3 perp = std::abs(a.x()) < 0.9 ? Vec3::UnitX().cross(a) : Vec3::UnitY().cross(a);
        return Eigen::AngleAxisd(M_PI, perp.normalized()).toRotationMatrix();
    }
    return Eigen::AngleAxisd(std::atan2(s, c), axis / s).toRotationMatrix();
}

inline BuiltSegment build_tube(const SegmentDef& def, int ring_size, std::vector<Vec3>& vertices,
                               std::vector<Face>& faces) {
    const int m = ring_size;
    const int nr = static_cast<int>(def.rings.size());
    BuiltSegment seg;
    seg.base_vertex = static_cast<int>(vertices.size());
    seg.ring_count = nr;
    seg.ring_size = m;

    // Tangents along the ring-center path, then parallel-transported frames.
    std::vector<Vec3> tangents(nr);
    for (int r = 0; r < nr; ++r) {
        const Vec3& prev = def.rings[std::max(0, r - 1)].center;
        const Vec3& next = def.rings[std::min(nr - 1, r + 1)].center;
        Vec3 t = next - prev;
        if (t.norm() < 1e-12) t = Vec3::UnitZ();
        tangents[r] = t.normalized();
    }
    std::vector<Vec3> us(nr), vs(nr);
    Vec3 u0 = Vec3::UnitX() - Vec3::UnitX().dot(tangents[0]) * tangents[0];
    if (u0.norm() < 1e-6) u0 = Vec3::UnitY() - Vec3::UnitY().dot(tangents[0]) * tangents[0];
    us[0] = u0.normalized();
    vs[0] = tangents[0].cross(us[0]);
    for (int r = 1; r < nr; ++r) {
        const Eigen::Matrix3d rot = rotation_between(tangents[r - 1], tangents[r]);
        us[r] = rot * us[r - 1];
        vs[r] = tangents[r].cross(us[r]);
    }

    for (int r = 0; r < nr; ++r) {
        const RingDef& ring = def.rings[r];
        for (int j = 0; j < m; ++j) {
            const double phi = 2.0 * M_PI * j / m;
            const double w =
                1.0 + def.wobble_amp * std::cos(def.wobble_freq * phi + def.wobble_phase);
            vertices.push_back(ring.center + us[r] * (ring.rx * std::cos(phi) * w) +
                               vs[r] * (ring.ry * std::sin(phi) * w));
        }
    }
    const auto ring_vertex = [&](int r, int j) { return seg.base_vertex + r * m + (j % m); };

    for (int r = 0; r + 1 < nr; ++r) {
        for (int j = 0; j < m; ++j) {
            faces.push_back({ring_vertex(r, j), ring_vertex(r, j + 1), ring_vertex(r + 1, j + 1)});
            faces.push_back({ring_vertex(r, j), ring_vertex(r + 1, j + 1), ring_vertex(r + 1, j)});
        }
    }

    // End caps: pole vertices slightly beyond the end rings.
    const double r_begin = 0.5 * (def.rings.front().rx + def.rings.front().ry);
    const double r_end = 0.5 * (def.rings.back().rx + def.rings.back().ry);
    seg.begin_pole = static_cast<int>(vertices.size());
    vertices.push_back(def.rings.front().center - tangents.front() * (0.45 * r_begin));
    seg.end_pole = static_cast<int>(vertices.size());
    vertices.push_back(def.rings.back().center + tangents.back() * (0.45 * r_end));
    for (int j = 0; j < m; ++j) {
        faces.push_back({seg.begin_pole, ring_vertex(0, j + 1), ring_vertex(0, j)});
        faces.push_back({seg.end_pole, ring_vertex(nr - 1, j), ring_vertex(nr - 1, j + 1)});
    }
    return seg;
}

struct StationPlan {
    std::string name;
    double limit_mm;
    int segment;  // index into built segment list
    int ring;     // center ring of the station
};

}  // namespace tpl_detail

/// Deterministic procedural humanoid with `n_modes` orthonormal shape modes
/// (mode 1 is global stature) and `resolution` vertices per cross-section
/// ring. Throws if the resolution is too low to carry the measurement paths.
inline ParametricTemplate generate_synthetic_template(std::uint64_t seed, int n_modes,
                                                      int resolution) {
    using namespace tpl_detail;
    if (n_modes < 1) throw ParamError("generate_synthetic_template: n_modes must be >= 1");
    if (resolution < 8) {
        throw ParamError(
            "generate_synthetic_template: resolution too low to place measurement paths "
            "(need >= 8 vertices per ring)");
    }
    const int m = resolution;

    ParametricTemplate tpl;
    // Skeleton: pelvis-rooted tree, 3 joints per limb, parent-ordered.
    const double kArmAbduction = 20.0 * M_PI / 180.0;
    const Vec3 arm_dir_l(std::sin(kArmAbduction), 0.0, -std::cos(kArmAbduction));
    const Vec3 arm_dir_r(-arm_dir_l.x(), 0.0, arm_dir_l.z());
    const Vec3 shoulder_l(0.186, 0.0, 1.425), shoulder_r(-0.186, 0.0, 1.425);

    auto add_joint = [&](const std::string& name, int parent, const Vec3& rest) {
        tpl.skeleton.push_back({name, parent, rest});
        return static_cast<int>(tpl.skeleton.size()) - 1;
    };
    const int j_pelvis = add_joint("pelvis", -1, {0, 0, 0.915});
    const int j_spine1 = add_joint("spine1", j_pelvis, {0, 0, 1.10});
    const int j_spine2 = add_joint("spine2", j_spine1, {0, 0, 1.28});
    const int j_neck = add_joint("neck", j_spine2, {0, 0, 1.47});
    add_joint("head", j_neck, {0, 0, 1.60});
    const int j_head = 4;
    const int j_lsho = add_joint("l_shoulder", j_spine2, shoulder_l);
    const int j_lelb = add_joint("l_elbow", j_lsho, shoulder_l + 0.258 * arm_dir_l);
    const int j_lwri = add_joint("l_wrist", j_lelb, shoulder_l + 0.505 * arm_dir_l);
    const int j_rsho = add_joint("r_shoulder", j_spine2, shoulder_r);
    const int j_relb = add_joint("r_elbow", j_rsho, shoulder_r + 0.258 * arm_dir_r);
    const int j_rwri = add_joint("r_wrist", j_relb, shoulder_r + 0.505 * arm_dir_r);
    const int j_lhip = add_joint("l_hip", j_pelvis, {0.092, 0, 0.915});
    const int j_lkne = add_joint("l_knee", j_lhip, {0.122, 0, 0.478});
    const int j_lank = add_joint("l_ankle", j_lkne, {0.149, 0, 0.110});
    const int j_rhip = add_joint("r_hip", j_pelvis, {-0.092, 0, 0.915});
    const int j_rkne = add_joint("r_knee", j_rhip, {-0.122, 0, 0.478});
    const int j_rank = add_joint("r_ankle", j_rkne, {-0.149, 0, 0.110});
    tpl.left_shoulder = j_lsho;
    tpl.right_shoulder = j_rsho;

    std::vector<SegmentDef> segs;

    // Torso: elliptical cross-sections, belly slightly forward.
    {
        SegmentDef torso;
        torso.name = "torso";
        const double rows[][4] = {
            // z, lateral radius, depth radius, forward offset
            {0.790, 0.150, 0.105, 0.000}, {0.850, 0.163, 0.114, 0.000},
            {0.905, 0.171, 0.120, 0.002}, {0.960, 0.158, 0.111, 0.005},
            {1.010, 0.146, 0.102, 0.009}, {1.065, 0.138, 0.097, 0.011},
            {1.120, 0.146, 0.102, 0.008}, {1.180, 0.155, 0.109, 0.004},
            {1.240, 0.163, 0.114, 0.002}, {1.295, 0.168, 0.118, 0.001},
            {1.350, 0.172, 0.120, 0.000}, {1.405, 0.178, 0.115, 0.000},
            {1.455, 0.165, 0.100, 0.000}, {1.500, 0.120, 0.080, 0.000},
            {1.530, 0.080, 0.060, 0.000},
        };
        for (const auto& r : rows) torso.rings.push_back({Vec3(0, r[3], r[0]), r[1], r[2]});
        torso.wobble_amp = 0.15;
        torso.wobble_freq = 4;
        torso.wobble_phase = M_PI / 4.0;
        torso.chain = {{j_pelvis, 0.915}, {j_spine1, 1.10}, {j_spine2, 1.28}, {j_neck, 1.47}};
        torso.chain_origin = Vec3::Zero();
        torso.chain_axis = Vec3::UnitZ();
        segs.push_back(std::move(torso));
    }

    // Head + neck on a vertical axis; chin/face bias forward.
    {
        SegmentDef head;
        head.name = "head";
        const double rows[][3] = {
            {1.470, 0.072, 0.000}, {1.505, 0.059, 0.001}, {1.535, 0.057, 0.002},
            {1.565, 0.060, 0.004}, {1.600, 0.077, 0.008}, {1.640, 0.089, 0.010},
            {1.680, 0.091, 0.008}, {1.710, 0.082, 0.004}, {1.732, 0.065, 0.002},
            {1.748, 0.040, 0.000},
        };
        for (const auto& r : rows) head.rings.push_back({Vec3(0, r[2], r[0]), r[1], r[1]});
        head.wobble_amp = 0.13;
        head.wobble_freq = 4;
        head.wobble_phase = 0.4;
        head.chain = {{j_neck, 1.47}, {j_head, 1.60}};
        head.chain_axis = Vec3::UnitZ();
        segs.push_back(std::move(head));
    }

    // Arms: straight axes abducted 20 degrees from vertical.
    const double arm_rows[][2] = {
        {0.030, 0.056}, {0.090, 0.052}, {0.135, 0.049}, {0.180, 0.046}, {0.225, 0.043},
        {0.258, 0.041}, {0.295, 0.043}, {0.345, 0.041}, {0.400, 0.036}, {0.455, 0.031},
        {0.505, 0.027}, {0.545, 0.030}, {0.600, 0.024},
    };
    for (int side = 0; side < 2; ++side) {
        SegmentDef arm;
        arm.name = side == 0 ? "l_arm" : "r_arm";
        const Vec3 s = side == 0 ? shoulder_l : shoulder_r;
        const Vec3 d = side == 0 ? arm_dir_l : arm_dir_r;
        for (const auto& r : arm_rows) arm.rings.push_back({s + r[0] * d, r[1], r[1]});
        arm.wobble_amp = 0.12;
        arm.wobble_freq = 4;
        arm.wobble_phase = side == 0 ? 0.9 : 2.1;
        if (side == 0) {
            arm.chain = {{j_lsho, 0.0}, {j_lelb, 0.258}, {j_lwri, 0.505}};
        } else {
            arm.chain = {{j_rsho, 0.0}, {j_relb, 0.258}, {j_rwri, 0.505}};
        }
        arm.chain_origin = s;
        arm.chain_axis = d;
        segs.push_back(std::move(arm));
    }

    // Legs: near-vertical with a forward-bent foot (toes give the facing cue).
    const double leg_rows[][4] = {
        // |x|, y, z, radius
        {0.092, 0.000, 0.880, 0.088},  {0.096, 0.000, 0.820, 0.086},
        {0.100, 0.000, 0.760, 0.081},  {0.105, 0.000, 0.700, 0.075},
        {0.110, 0.000, 0.640, 0.069},  {0.114, 0.000, 0.580, 0.063},
        {0.118, 0.000, 0.525, 0.058},  {0.122, 0.000, 0.478, 0.055},
        {0.126, -0.002, 0.430, 0.056}, {0.130, -0.005, 0.382, 0.058},
        {0.134, -0.006, 0.330, 0.053}, {0.138, -0.004, 0.270, 0.046},
        {0.142, -0.002, 0.210, 0.040}, {0.146, 0.000, 0.155, 0.036},
        {0.149, 0.000, 0.110, 0.034},  {0.150, 0.008, 0.070, 0.036},
        {0.150, 0.052, 0.044, 0.035},  {0.150, 0.105, 0.034, 0.030},
        {0.150, 0.150, 0.028, 0.022},
    };
    for (int side = 0; side < 2; ++side) {
        SegmentDef leg;
        leg.name = side == 0 ? "l_leg" : "r_leg";
        const double sx = side == 0 ? 1.0 : -1.0;
        for (const auto& r : leg_rows) {
            leg.rings.push_back({Vec3(sx * r[0], r[1], r[2]), r[3], r[3]});
        }
        leg.wobble_amp = 0.12;
        leg.wobble_freq = 4;
        leg.wobble_phase = side == 0 ? 2.8 : 1.3;
        if (side == 0) {
            leg.chain = {{j_lhip, 0.0}, {j_lkne, 0.437}, {j_lank, 0.805}};
        } else {
            leg.chain = {{j_rhip, 0.0}, {j_rkne, 0.437}, {j_rank, 0.805}};
        }
        leg.chain_origin = Vec3(0, 0, 0.915);
        leg.chain_axis = -Vec3::UnitZ();  // axial coordinate grows downward
        segs.push_back(std::move(leg));
    }

    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::vector<BuiltSegment> built;
    for (const auto& def : segs) built.push_back(build_tube(def, m, vertices, faces));

    // Station plan: segment index, center ring, Table-style acceptance limit.
    const StationPlan plan[] = {
        {"NeckCirc", 6, 1, 2},         {"ChestCirc", 15, 0, 9},
        {"NaturalWaistCirc", 12, 0, 5}, {"HipCirc", 12, 0, 2},
        {"BicepCirc", 6, 2, 2},        {"ElbowCirc", 4, 2, 5},
        {"WristCirc", 5, 2, 10},       {"ThighCirc", 6, 4, 2},
        {"KneeCirc", 4, 4, 7},         {"CalfCirc", 5, 4, 9},
        {"AnkleCirc", 4, 4, 14},
    };
    const int kPathsPerStation = 5;  // center ring +/- 2 neighbors
    for (const auto& st : plan) {
        const BuiltSegment& seg = built[st.segment];
        MeasurementSpec spec;
        spec.name = st.name;
        spec.limit_mm = st.limit_mm;
        for (int dr = -2; dr <= 2; ++dr) {
            const int ring = st.ring + dr;
            if (ring < 0 || ring >= seg.ring_count) {
                throw ParamError("template generation: station " + spec.name +
                                 " cannot place " + std::to_string(kPathsPerStation) + " rings");
            }
            MeasurementPath path;
            path.closed = true;
            for (int j = 0; j < seg.ring_size; ++j) {
                path.vertices.push_back(seg.base_vertex + ring * seg.ring_size + j);
            }
            spec.paths.push_back(std::move(path));
        }
        Station station;
        station.name = st.name;
        for (int j = 0; j < seg.ring_size; ++j) {
            station.anchors.push_back(seg.base_vertex + st.ring * seg.ring_size + j);
        }
        tpl.paths.push_back(std::move(spec));
        tpl.stations.push_back(std::move(station));
    }

    tpl.named_points["head_top"] = built[1].end_pole;
    tpl.named_points["left_toe"] = built[4].end_pole;
    tpl.named_points["right_toe"] = built[5].end_pole;

    // Skinning: per-segment joint chains blended along the axial coordinate.
    const int K = static_cast<int>(tpl.skeleton.size());
    Eigen::MatrixXd weights =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(vertices.size()), K);
    for (std::size_t si = 0; si < segs.size(); ++si) {
        const SegmentDef& def = segs[si];
        const BuiltSegment& seg = built[si];
        const int count = seg.ring_count * seg.ring_size + 2;
        for (int local = 0; local < count; ++local) {
            const int v = seg.base_vertex + local;
            const double s = (vertices[v] - def.chain_origin).dot(def.chain_axis);
            const auto& chain = def.chain;
            if (s <= chain.front().second) {
                weights(v, chain.front().first) = 1.0;
            } else if (s >= chain.back().second) {
                weights(v, chain.back().first) = 1.0;
            } else {
                for (std::size_t c = 0; c + 1 < chain.size(); ++c) {
                    if (s >= chain[c].second && s < chain[c + 1].second) {
                        const double t = smoothstep((s - chain[c].second) /
                                                    (chain[c + 1].second - chain[c].second));
                        weights(v, chain[c].first) = 1.0 - t;
                        weights(v, chain[c + 1].first) = t;
                        break;
                    }
                }
            }
        }
    }
    tpl.skin_weights = std::move(weights);

    tpl.canonical = TriMesh(std::move(vertices), std::move(faces));
    tpl.nominal_height = mesh_height(tpl.canonical);

    // Shape basis: mode 1 is global stature (uniform scaling about the ground
    // origin); remaining modes are smooth low-frequency harmonic fields.
    // Columns are orthonormalized under the flattened inner product.
    const Eigen::Index dim = static_cast<Eigen::Index>(3 * tpl.canonical.vertex_count());
    Eigen::MatrixXd basis(dim, n_modes);
    const auto& cv = tpl.canonical.vertices();
    for (std::size_t v = 0; v < cv.size(); ++v) {
        basis.block<3, 1>(static_cast<Eigen::Index>(3 * v), 0) = cv[v];
    }
    Rng rng(seed);
    for (int mode = 1; mode < n_modes; ++mode) {
        struct Harmonic {
            Vec3 k;
            double amp, phase;
        };
        Harmonic h[3][2];
        for (int c = 0; c < 3; ++c) {
            for (int t = 0; t < 2; ++t) {
                const double kz = rng.uniform(-1.0, 1.0);
                const double az = rng.uniform(0.0, 2.0 * M_PI);
                const double kr = std::sqrt(std::max(0.0, 1.0 - kz * kz));
                const Vec3 dir(kr * std::cos(az), kr * std::sin(az), kz);
                h[c][t].k = dir * rng.uniform(0.6, 2.2);
                h[c][t].amp = rng.normal();
                h[c][t].phase = rng.uniform(0.0, 2.0 * M_PI);
            }
        }
        for (std::size_t v = 0; v < cv.size(); ++v) {
            for (int c = 0; c < 3; ++c) {
                double value = 0.0;
                for (int t = 0; t < 2; ++t) {
                    value += h[c][t].amp * std::cos(h[c][t].k.dot(cv[v]) + h[c][t].phase);
                }
                basis(static_cast<Eigen::Index>(3 * v) + c, mode) = value;
            }
        }
    }
    // Modified Gram-Schmidt, two passes.
    for (int pass = 0; pass < 2; ++pass) {
        for (int c = 0; c < n_modes; ++c) {
            for (int p = 0; p < c; ++p) {
                basis.col(c) -= basis.col(p).dot(basis.col(c)) * basis.col(p);
            }
            const double norm = basis.col(c).norm();
            if (norm < 1e-12) {
                throw NumericError("template generation: degenerate shape mode " +
                                   std::to_string(c));
            }
            basis.col(c) /= norm;
        }
    }
    tpl.shape_basis = std::move(basis);
    return tpl;
}

// ---------------------------------------------------------------------------
// Template persistence: canonical.obj + basis.bin + skeleton.json + paths.json
// ---------------------------------------------------------------------------

inline void save_template(const ParametricTemplate& tpl, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_obj(tpl.canonical, dir / "canonical.obj");

    // basis.bin rows = modes, cols = 3V (vertex-major x,y,z).
    write_matrix_bin(dir / "basis.bin", tpl.shape_basis.transpose());

    nlohmann::json skel;
    skel["nominal_height"] = tpl.nominal_height;
    skel["left_shoulder"] = tpl.left_shoulder;
    skel["right_shoulder"] = tpl.right_shoulder;
    skel["joints"] = nlohmann::json::array();
    for (const Joint& j : tpl.skeleton) {
        skel["joints"].push_back(
            {{"name", j.name}, {"parent", j.parent}, {"rest", {j.rest.x(), j.rest.y(), j.rest.z()}}});
    }
    skel["stations"] = nlohmann::json::array();
    for (const Station& s : tpl.stations) {
        skel["stations"].push_back({{"name", s.name}, {"anchors", s.anchors}});
    }
    skel["named_points"] = tpl.named_points;
    {
        // Skin weights stored sparsely as (vertex, joint, weight) triples.
        nlohmann::json w = nlohmann::json::array();
        for (Eigen::Index v = 0; v < tpl.skin_weights.rows(); ++v) {
            for (Eigen::Index k = 0; k < tpl.skin_weights.cols(); ++k) {
                const double value = tpl.skin_weights(v, k);
                if (value != 0.0) w.push_back({v, k, value});
            }
        }
        skel["skin_weights"] = std::move(w);
    }
    write_file_atomic(dir / "skeleton.json", [&](std::ostream& os) { os << skel.dump(1); });

    nlohmann::json paths = nlohmann::json::array();
    for (const MeasurementSpec& spec : tpl.paths) {
        nlohmann::json entry;
        entry["name"] = spec.name;
        if (spec.limit_mm > 0) entry["limit_mm"] = spec.limit_mm;
        entry["paths"] = nlohmann::json::array();
        for (const MeasurementPath& p : spec.paths) {
            entry["paths"].push_back({{"closed", p.closed}, {"vertices", p.vertices}});
        }
        paths.push_back(std::move(entry));
    }
    write_file_atomic(dir / "paths.json", [&](std::ostream& os) { os << paths.dump(1); });
}

inline ParametricTemplate load_template(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    ParametricTemplate tpl;
    tpl.canonical = load_obj(dir / "canonical.obj");
    tpl.shape_basis = read_matrix_bin(dir / "basis.bin").transpose();
    if (tpl.shape_basis.rows() != static_cast<Eigen::Index>(3 * tpl.canonical.vertex_count())) {
        throw ParseError("basis.bin dimensions do not match canonical.obj");
    }

    nlohmann::json skel;
    try {
        skel = nlohmann::json::parse(read_file(dir / "skeleton.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("skeleton.json: " + std::string(e.what()));
    }
    try {
        tpl.nominal_height = skel.at("nominal_height").get<double>();
        tpl.left_shoulder = skel.at("left_shoulder").get<int>();
        tpl.right_shoulder = skel.at("right_shoulder").get<int>();
        for (const auto& j : skel.at("joints")) {
            Joint joint;
            joint.name = j.at("name").get<std::string>();
            joint.parent = j.at("parent").get<int>();
            joint.rest = Vec3(j.at("rest")[0].get<double>(), j.at("rest")[1].get<double>(),
                              j.at("rest")[2].get<double>());
            tpl.skeleton.push_back(std::move(joint));
        }
        for (const auto& s : skel.at("stations")) {
            Station station;
            station.name = s.at("name").get<std::string>();
            station.anchors = s.at("anchors").get<std::vector<int>>();
            tpl.stations.push_back(std::move(station));
        }
        tpl.named_points = skel.at("named_points").get<std::map<std::string, int>>();
        tpl.skin_weights = Eigen::MatrixXd::Zero(
            static_cast<Eigen::Index>(tpl.canonical.vertex_count()),
            static_cast<Eigen::Index>(tpl.skeleton.size()));
        for (const auto& w : skel.at("skin_weights")) {
            tpl.skin_weights(w[0].get<Eigen::Index>(), w[1].get<Eigen::Index>()) =
                w[2].get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("skeleton.json schema: " + std::string(e.what()));
    }

    nlohmann::json paths;
    try {
        paths = nlohmann::json::parse(read_file(dir / "paths.json"));
        for (const auto& entry : paths) {
            MeasurementSpec spec;
            spec.name = entry.at("name").get<std::string>();
            spec.limit_mm = entry.value("limit_mm", 0.0);
            for (const auto& p : entry.at("paths")) {
                MeasurementPath path;
                path.closed = p.at("closed").get<bool>();
                path.vertices = p.at("vertices").get<std::vector<int>>();
                spec.paths.push_back(std::move(path));
            }
            tpl.paths.push_back(std::move(spec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("paths.json: " + std::string(e.what()));
    }
    return tpl;
}

}  // namespace morphofit
