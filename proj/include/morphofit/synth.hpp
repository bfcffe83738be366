// synth.hpp - synthetic ground truth: body sampling from the template,
// tape-measure oracle (convex-hull cross-section perimeter), and scan
// degradation (holes, noise, rigid perturbation, unit scale).
#pragma once

#include "morphofit/core.hpp"
#include "morphofit/measure.hpp"
#include "morphofit/mesh.hpp"
#include "morphofit/obj_io.hpp"
#include "morphofit/template_model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace morphofit {

// ---------------------------------------------------------------------------
// Tape oracle. A station's cutting plane is fitted to its anchor ring (so it
// transforms with the mesh); the cross-section loop nearest the anchors is
// projected into the plane and measured as a 2D convex-hull perimeter -
// a taut tape around the body part.
// ---------------------------------------------------------------------------

namespace synth_detail {

struct SectionLoop {
    std::vector<Vec3> points;
    bool closed = false;
};

inline std::vector<SectionLoop> cross_section(const TriMesh& mesh, const Vec3& origin,
                                              const Vec3& normal, int component = -1) {
    const auto& verts = mesh.vertices();
    const auto& faces = mesh.faces();

    std::vector<double> dist(verts.size());
    for (std::size_t v = 0; v < verts.size(); ++v) dist[v] = normal.dot(verts[v] - origin);

    // Intersection point per crossing mesh edge, keyed by the undirected edge.
    struct EdgeHit {
        Vec3 point;
        int faces_seen = 0;
        int face[2] = {-1, -1};
    };
    std::map<Edge, EdgeHit> hits;
    struct FaceCross {
        Edge edge[2];
        int count = 0;
    };
    std::unordered_map<int, FaceCross> crossing;

    for (std::size_t f = 0; f < faces.size(); ++f) {
        const Face& face = faces[f];
        if (component >= 0 && mesh.component_of(face[0]) != component) continue;
        FaceCross fc;
        for (int k = 0; k < 3; ++k) {
            const int a = face[k], b = face[(k + 1) % 3];
            const double da = dist[a], db = dist[b];
            if ((da > 0) == (db > 0)) continue;
            const Edge e{std::min(a, b), std::max(a, b)};
            auto [it, inserted] = hits.try_emplace(e);
            if (inserted) {
                const double t = da / (da - db);
                it->second.point = verts[a] + t * (verts[b] - verts[a]);
            }
            if (it->second.faces_seen < 2) {
                it->second.face[it->second.faces_seen] = static_cast<int>(f);
            }
            ++it->second.faces_seen;
            if (fc.count < 2) fc.edge[fc.count] = e;
            ++fc.count;
        }
        if (fc.count == 2) crossing.emplace(static_cast<int>(f), fc);
    }

    // Chain crossing faces into loops by walking shared crossing edges.
    std::vector<SectionLoop> loops;
    std::map<Edge, bool> used;
    for (const auto& [e, hit] : hits) used[e] = false;

    for (const auto& [start_edge, start_hit] : hits) {
        if (used.at(start_edge)) continue;
        SectionLoop loop;
        Edge edge = start_edge;
        int came_from_face = -1;
        while (true) {
            used.at(edge) = true;
            loop.points.push_back(hits.at(edge).point);
            const EdgeHit& h = hits.at(edge);
            int next_face = -1;
            for (int s = 0; s < 2; ++s) {
                if (h.face[s] >= 0 && h.face[s] != came_from_face &&
                    crossing.count(h.face[s])) {
                    next_face = h.face[s];
                    break;
                }
            }
            if (next_face < 0) break;  // boundary (hole) - open chain
            const FaceCross& fc = crossing.at(next_face);
            const Edge other = (fc.edge[0] == edge) ? fc.edge[1] : fc.edge[0];
            came_from_face = next_face;
            if (other == start_edge) {
                loop.closed = true;
                break;
            }
            if (used.at(other)) break;
            edge = other;
        }
        if (loop.points.size() >= 3) loops.push_back(std::move(loop));
    }
    return loops;
}

// Andrew monotone chain in the plane spanned by (u, v); returns perimeter.
inline double convex_hull_perimeter(const std::vector<Vec3>& points, const Vec3& plane_origin,
                                    const Vec3& u, const Vec3& v) {
    std::vector<Eigen::Vector2d> pts;
    pts.reserve(points.size());
    for (const Vec3& p : points) {
        pts.emplace_back(u.dot(p - plane_origin), v.dot(p - plane_origin));
    }
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const auto& a, const auto& b) { return a == b; }),
              pts.end());
    if (pts.size() < 3) throw NumericError("tape oracle: degenerate cross-section");

    const auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a,
                          const Eigen::Vector2d& b) {
        return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
    };
    std::vector<Eigen::Vector2d> hull(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = pts.size() - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k > 1 ? k - 1 : k);
    if (hull.size() < 3) throw NumericError("tape oracle: degenerate convex hull");
    double perimeter = 0.0;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        perimeter += (hull[(i + 1) % hull.size()] - hull[i]).norm();
    }
    return perimeter;
}

}  // namespace synth_detail

/// Taut-tape ground truth at a station: perimeter of the 2D convex hull of
/// the cross-section loop nearest the station's anchor ring.
inline double tape_oracle(const TriMesh& mesh, const ParametricTemplate& tpl,
                          const std::string& station_name) {
    const Station& station = tpl.station(station_name);
    if (station.anchors.size() < 3) throw ParamError("tape_oracle: station needs >= 3 anchors");
    const int n = static_cast<int>(mesh.vertex_count());
    Vec3 centroid = Vec3::Zero();
    for (int a : station.anchors) {
        if (a < 0 || a >= n) throw ParamError("tape_oracle: anchor out of range (mesh not in template topology?)");
        centroid += mesh.vertices()[a];
    }
    centroid /= static_cast<double>(station.anchors.size());

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int a : station.anchors) {
        const Vec3 d = mesh.vertices()[a] - centroid;
        cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const Vec3 normal = eig.eigenvectors().col(0);  // smallest spread = plane normal
    const Vec3 u = eig.eigenvectors().col(2);
    const Vec3 v = eig.eigenvectors().col(1);

    // Offset the plane a hair off the anchor ring so the section crosses mesh
    // edges mid-span instead of exactly at vertices.
    const auto [lo, hi] = mesh.bounding_box();
    const Vec3 origin = centroid + normal * (1e-7 * (hi - lo).norm());

    // Body-part filter: only the anchor ring's connected component is cut, so
    // a thigh plane measures the left thigh, not the other leg or the torso.
    const int component = mesh.component_of(station.anchors[0]);
    const auto loops = synth_detail::cross_section(mesh, origin, normal, component);
    if (loops.empty()) {
        throw NumericError("tape oracle: empty intersection at station " + station_name);
    }
    const synth_detail::SectionLoop* best = nullptr;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto& loop : loops) {
        Vec3 c = Vec3::Zero();
        for (const Vec3& p : loop.points) c += p;
        c /= static_cast<double>(loop.points.size());
        const double d = (c - centroid).norm();
        if (d < best_dist) {
            best_dist = d;
            best = &loop;
        }
    }
    return synth_detail::convex_hull_perimeter(best->points, origin, u, v);
}

// ---------------------------------------------------------------------------
// Subjects and scans.
// ---------------------------------------------------------------------------

struct SyntheticSubject {
    std::string id;
    ShapeParams shape;
    PoseParams pose;
    TriMesh true_mesh;
    std::map<std::string, double> truths;  // meters, keyed by measurement name
};

struct HoleSpec {
    std::string region;      // named point on the template ("head_top", ...)
    int center_vertex = -1;  // used when region is empty
    double radius = 0.0;     // meters
};

struct ScanRecipe {
    double noise_sigma = 0.002;  // meters, along vertex normals
    std::vector<HoleSpec> holes;
    double density = 1.0;        // < 1: emit a point cloud with this vertex fraction
    bool keep_orphans = false;   // keep vertices that lost all faces
    double yaw = 0.0;            // radians about Z
    Vec3 translation = Vec3::Zero();
    double unit_scale = 1.0;     // e.g. 1000 to emit millimeters
    bool randomize_rigid = false;  // sample yaw in [-yaw, yaw], translation in the box
};

/// Default degradation mirroring scanner behavior: mm-scale noise and holes
/// at the head crown and toes.
inline ScanRecipe default_scan_recipe() {
    ScanRecipe r;
    r.noise_sigma = 0.002;
    r.holes = {{"head_top", -1, 0.10}, {"left_toe", -1, 0.055}, {"right_toe", -1, 0.055}};
    return r;
}

/// Draws a subject: seeded shape coefficients, instructed pose with jittered
/// arm abduction (within +/- 0.1 rad), and tape-oracle ground truths.
inline SyntheticSubject sample_body(const ParametricTemplate& tpl, std::uint64_t seed,
                                    double beta_sigma) {
    if (beta_sigma <= 0) throw ParamError("sample_body: beta_sigma must be positive");
    Rng rng(seed);
    SyntheticSubject subject;
    subject.shape.beta = Eigen::VectorXd(tpl.mode_count());
    for (int n = 0; n < tpl.mode_count(); ++n) subject.shape.beta[n] = rng.normal(0.0, beta_sigma);
    subject.pose = abduction_pose(tpl, rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
    subject.true_mesh = pose_mesh(blend_shape(tpl, subject.shape), tpl, subject.pose);
    for (const Station& st : tpl.stations) {
        subject.truths[st.name] = tape_oracle(subject.true_mesh, tpl, st.name);
    }
    return subject;
}

/// Degrades a subject's true mesh into a scan: faces inside holes removed,
/// vertices displaced along normals by Gaussian noise, rigid perturbation and
/// unit scale applied last.
inline TriMesh simulate_scan(const SyntheticSubject& subject, const ParametricTemplate& tpl,
                             const ScanRecipe& recipe, std::uint64_t seed) {
    if (recipe.noise_sigma < 0) throw ParamError("simulate_scan: negative noise sigma");
    if (recipe.density <= 0 || recipe.density > 1) {
        throw ParamError("simulate_scan: density must be in (0, 1]");
    }
    Rng rng(seed);
    const TriMesh& mesh = subject.true_mesh;

    std::vector<std::pair<Vec3, double>> holes;
    for (const HoleSpec& h : recipe.holes) {
        if (h.radius <= 0) throw ParamError("simulate_scan: hole radius must be positive");
        int center = h.center_vertex;
        if (!h.region.empty()) {
            const auto it = tpl.named_points.find(h.region);
            if (it == tpl.named_points.end()) {
                throw ParamError("simulate_scan: unknown hole region '" + h.region + "'");
            }
            center = it->second;
        }
        if (center < 0 || center >= static_cast<int>(mesh.vertex_count())) {
            throw ParamError("simulate_scan: hole center vertex out of range");
        }
        holes.emplace_back(mesh.vertices()[center], h.radius);
    }

    std::vector<Face> kept_faces;
    kept_faces.reserve(mesh.face_count());
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const Vec3 c = mesh.face_centroid(static_cast<int>(f));
        bool inside = false;
        for (const auto& [center, radius] : holes) {
            if ((c - center).norm() <= radius) {
                inside = true;
                break;
            }
        }
        if (!inside) kept_faces.push_back(mesh.faces()[f]);
    }
    if (mesh.face_count() > 0 &&
        kept_faces.size() < mesh.face_count() - (mesh.face_count() * 9) / 10) {
        throw ParamError("simulate_scan: holes remove more than 90% of faces");
    }

    // Noise along the true surface normals (drawn in vertex order).
    std::vector<Vec3> noisy = mesh.vertices();
    if (recipe.noise_sigma > 0) {
        for (std::size_t v = 0; v < noisy.size(); ++v) {
            noisy[v] += mesh.vertex_normals()[v] * rng.normal(0.0, recipe.noise_sigma);
        }
    }

    // Drop vertices that lost every incident face, compacting indices.
    std::vector<Vec3> out_vertices;
    std::vector<Face> out_faces;
    if (recipe.keep_orphans || kept_faces.size() == mesh.face_count()) {
        out_vertices = std::move(noisy);
        out_faces = std::move(kept_faces);
    } else {
        std::vector<int> remap(mesh.vertex_count(), -1);
        for (const Face& f : kept_faces) {
            for (int k = 0; k < 3; ++k) remap[f[k]] = 0;
        }
        int next = 0;
        for (std::size_t v = 0; v < remap.size(); ++v) {
            if (remap[v] == 0) {
                remap[v] = next++;
                out_vertices.push_back(noisy[v]);
            }
        }
        out_faces.reserve(kept_faces.size());
        for (const Face& f : kept_faces) {
            out_faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
        }
    }

    // Optional point-cloud output (vertex-only registration targets).
    if (recipe.density < 1.0) {
        std::vector<Vec3> sampled;
        sampled.reserve(out_vertices.size());
        for (const Vec3& v : out_vertices) {
            if (rng.uniform() < recipe.density) sampled.push_back(v);
        }
        if (sampled.empty()) throw ParamError("simulate_scan: density left no vertices");
        out_vertices = std::move(sampled);
        out_faces.clear();
    }

    double yaw = recipe.yaw;
    Vec3 translation = recipe.translation;
    if (recipe.randomize_rigid) {
        yaw = rng.uniform(-recipe.yaw, recipe.yaw);
        translation = Vec3(rng.uniform(-1, 1) * recipe.translation.x(),
                           rng.uniform(-1, 1) * recipe.translation.y(),
                           rng.uniform(-1, 1) * recipe.translation.z());
    }
    Eigen::Matrix3d rot = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    for (Vec3& v : out_vertices) v = (rot * v + translation) * recipe.unit_scale;

    return TriMesh(std::move(out_vertices), std::move(out_faces));
}

// ---------------------------------------------------------------------------
// Cohort persistence: subjects.csv + per-subject true/scan OBJ + recipe.json
// (+ template/ so the directory is self-contained for the pipeline).
// ---------------------------------------------------------------------------

inline nlohmann::json recipe_to_json(const ScanRecipe& r) {
    nlohmann::json j;
    j["noise_sigma"] = r.noise_sigma;
    j["holes"] = nlohmann::json::array();
    for (const HoleSpec& h : r.holes) {
        j["holes"].push_back(
            {{"region", h.region}, {"center_vertex", h.center_vertex}, {"radius", h.radius}});
    }
    j["density"] = r.density;
    j["keep_orphans"] = r.keep_orphans;
    j["yaw"] = r.yaw;
    j["translation"] = {r.translation.x(), r.translation.y(), r.translation.z()};
    j["unit_scale"] = r.unit_scale;
    j["randomize_rigid"] = r.randomize_rigid;
    return j;
}

inline ScanRecipe recipe_from_json(const nlohmann::json& j) {
    try {
        ScanRecipe r;
        r.noise_sigma = j.at("noise_sigma").get<double>();
        for (const auto& h : j.at("holes")) {
            r.holes.push_back({h.at("region").get<std::string>(), h.at("center_vertex").get<int>(),
                               h.at("radius").get<double>()});
        }
        r.density = j.at("density").get<double>();
        r.keep_orphans = j.at("keep_orphans").get<bool>();
        r.yaw = j.at("yaw").get<double>();
        r.translation = Vec3(j.at("translation")[0].get<double>(),
                             j.at("translation")[1].get<double>(),
                             j.at("translation")[2].get<double>());
        r.unit_scale = j.at("unit_scale").get<double>();
        r.randomize_rigid = j.at("randomize_rigid").get<bool>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("recipe.json: " + std::string(e.what()));
    }
}

inline std::string subject_dir_name(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "subj_%04zu", index);
    return buf;
}

struct Cohort {
    std::vector<SyntheticSubject> subjects;
    std::vector<TriMesh> scans;  // parallel to subjects
    ScanRecipe recipe;
};

/// Deterministic cohort: per-subject RNG streams forked from `seed`.
inline Cohort generate_cohort(const ParametricTemplate& tpl, int n_subjects, std::uint64_t seed,
                              double beta_sigma, const ScanRecipe& recipe) {
    if (n_subjects <= 0) throw ParamError("generate_cohort: n_subjects must be positive");
    Cohort cohort;
    cohort.recipe = recipe;
    const Rng root(seed);
    for (int i = 0; i < n_subjects; ++i) {
        const Rng stream = root.fork(static_cast<std::uint64_t>(i));
        SyntheticSubject subject =
            sample_body(tpl, stream.fork(1).next_u64(), beta_sigma);
        subject.id = subject_dir_name(static_cast<std::size_t>(i));
        cohort.scans.push_back(simulate_scan(subject, tpl, recipe, stream.fork(2).next_u64()));
        cohort.subjects.push_back(std::move(subject));
    }
    return cohort;
}

inline void save_cohort(const Cohort& cohort, const ParametricTemplate& tpl,
                        const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_template(tpl, dir / "template");
    write_file_atomic(dir / "recipe.json",
                      [&](std::ostream& os) { os << recipe_to_json(cohort.recipe).dump(1); });

    std::vector<std::string> names;
    for (const Station& st : tpl.stations) names.push_back(st.name);
    write_file_atomic(dir / "subjects.csv", [&](std::ostream& os) {
        os << "id";
        const int modes = tpl.mode_count();
        for (int n = 0; n < modes; ++n) os << ",beta_" << n;
        for (const auto& name : names) os << ',' << name << "_mm";
        os << '\n';
        char buf[64];
        for (const SyntheticSubject& s : cohort.subjects) {
            os << s.id;
            for (int n = 0; n < modes; ++n) {
                std::snprintf(buf, sizeof(buf), "%.9g", s.shape.beta[n]);
                os << ',' << buf;
            }
            for (const auto& name : names) {
                std::snprintf(buf, sizeof(buf), "%.9g", s.truths.at(name) * 1000.0);
                os << ',' << buf;
            }
            os << '\n';
        }
    });

    for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
        const fs::path sdir = dir / cohort.subjects[i].id;
        save_obj(cohort.subjects[i].true_mesh, sdir / "true.obj");
        save_obj(cohort.scans[i], sdir / "scan.obj");
    }
}

/// Truths and scan paths as the pipeline consumes them (true meshes stay on
/// disk; the registration pipeline never looks at them).
struct CohortIndex {
    std::vector<std::string> ids;
    std::vector<std::filesystem::path> scan_paths;
    std::vector<std::map<std::string, double>> truths;  // meters
    std::vector<std::string> measurement_names;
};

inline CohortIndex load_cohort_index(const std::filesystem::path& dir) {
    CohortIndex index;
    std::ifstream is(dir / "subjects.csv");
    if (!is) throw IoError("cannot open: " + (dir / "subjects.csv").string());
    std::string line;
    if (!std::getline(is, line)) throw ParseError("subjects.csv: empty");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.empty() || header[0] != "id") throw ParseError("subjects.csv: bad header");
    const std::string suffix = "_mm";
    std::vector<std::size_t> truth_cols;
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (header[c].size() > suffix.size() &&
            header[c].compare(header[c].size() - suffix.size(), suffix.size(), suffix) == 0) {
            truth_cols.push_back(c);
            index.measurement_names.push_back(
                header[c].substr(0, header[c].size() - suffix.size()));
        }
    }
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size()) {
            throw ParseError("subjects.csv: line " + std::to_string(line_no) +
                             ": wrong column count");
        }
        index.ids.push_back(cells[0]);
        index.scan_paths.push_back(dir / cells[0] / "scan.obj");
        std::map<std::string, double> truths;
        for (std::size_t t = 0; t < truth_cols.size(); ++t) {
            truths[index.measurement_names[t]] = std::stod(cells[truth_cols[t]]) / 1000.0;
        }
        index.truths.push_back(std::move(truths));
    }
    if (index.ids.empty()) throw ParseError("subjects.csv: no subjects");
    return index;
}

}  // namespace morphofit
