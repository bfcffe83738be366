// Temporary probe for generator tuning (not part of the suite).
#include "morphofit/morphofit.hpp"

#include <cstdio>
#include <map>

using namespace morphofit;

int main() {
    const auto tpl = generate_synthetic_template(1, 10, 18);
    const TriMesh& mesh = tpl.canonical;
    std::printf("V=%zu F=%zu E=%zu components=%d height=%.4f\n", mesh.vertex_count(),
                mesh.face_count(), mesh.edge_count(), mesh.component_count(),
                tpl.nominal_height);

    // Euler characteristic per component.
    std::map<int, std::array<long, 3>> comp;  // V, E, F
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) comp[mesh.component_of(static_cast<int>(v))][0]++;
    for (const auto& e : mesh.edges()) comp[mesh.component_of(e.first)][1]++;
    for (const auto& f : mesh.faces()) comp[mesh.component_of(f[0])][2]++;
    for (const auto& [c, vef] : comp) {
        std::printf("component %d: V=%ld E=%ld F=%ld chi=%ld\n", c, vef[0], vef[1], vef[2],
                    vef[0] - vef[1] + vef[2]);
    }

    // Outward normals: signed volume per component should be positive.
    std::map<int, double> vol;
    for (const auto& f : mesh.faces()) {
        const Vec3 &a = mesh.vertices()[f[0]], &b = mesh.vertices()[f[1]], &c = mesh.vertices()[f[2]];
        vol[mesh.component_of(f[0])] += a.dot(b.cross(c)) / 6.0;
    }
    for (const auto& [c, v] : vol) std::printf("component %d signed volume %.6f\n", c, v);

    // Gram orthonormality error.
    const Eigen::MatrixXd gram = tpl.shape_basis.transpose() * tpl.shape_basis;
    std::printf("gram error %.3e\n",
                (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).norm());

    // Tape oracle vs ring path margin on the canonical mesh and random subjects.
    for (const auto& st : tpl.stations) {
        const double tape = tape_oracle(mesh, tpl, st.name);
        const auto& spec = tpl.spec(st.name);
        const double center_path = path_length(mesh, spec.paths[2]);
        std::printf("%-18s tape=%.4f path=%.4f margin=%+.3f%%\n", st.name.c_str(), tape,
                    center_path, 100.0 * (center_path - tape) / tape);
    }
    int violations = 0, checks = 0;
    for (int s = 0; s < 30; ++s) {
        const auto subject = sample_body(tpl, 1000 + s, 0.6);
        for (const auto& st : tpl.stations) {
            const double tape = subject.truths.at(st.name);
            for (const auto& p : tpl.spec(st.name).paths) {
                const double path = path_length(subject.true_mesh, p);
                ++checks;
                if (tape > path) ++violations;
            }
        }
    }
    std::printf("tape<=path violations: %d / %d\n", violations, checks);

    // Stature: height strictly increasing in beta1.
    for (double b : {-3.0, 0.0, 3.0}) {
        ShapeParams sp;
        sp.beta = Eigen::VectorXd::Zero(tpl.mode_count());
        sp.beta[0] = b;
        std::printf("beta1=%+.0f height=%.4f\n", b, mesh_height(blend_shape(tpl, sp)));
    }

    // Facing detection on degraded scans across subjects.
    int facing_fail = 0;
    for (int s = 0; s < 40; ++s) {
        auto subject = sample_body(tpl, 5000 + s, 0.6);
        ScanRecipe recipe = default_scan_recipe();
        recipe.yaw = M_PI;
        recipe.translation = Vec3(0.5, 0.5, 0.5);
        recipe.unit_scale = 1000.0;
        recipe.randomize_rigid = true;
        const TriMesh scan = simulate_scan(subject, tpl, recipe, 999 + s);
        const auto [norm, report] = normalize_scan(scan);
        // Recover what the facing should be: the scan was yawed by `yaw`;
        // normalize should rotate by -yaw (mod 2pi).
        // Instead check the normalized mesh itself: toes forward.
        std::vector<double> band_y;
        const auto [lo, hi] = norm.bounding_box();
        for (const Vec3& v : norm.vertices()) {
            if (v.z() < lo.z() + 0.14 * (hi.z() - lo.z())) band_y.push_back(v.y());
        }
        std::sort(band_y.begin(), band_y.end());
        const double med = band_y[band_y.size() / 2];
        const double front = band_y[band_y.size() * 98 / 100] - med;
        const double back = med - band_y[band_y.size() * 2 / 100];
        if (front < back) ++facing_fail;
    }
    std::printf("facing failures: %d / 40\n", facing_fail);

    // Hole fraction with the default recipe.
    {
        auto subject = sample_body(tpl, 42, 0.6);
        const TriMesh scan = simulate_scan(subject, tpl, default_scan_recipe(), 7);
        std::printf("faces kept %zu / %zu (%.1f%% removed)\n", scan.face_count(),
                    subject.true_mesh.face_count(),
                    100.0 * (1.0 - double(scan.face_count()) / subject.true_mesh.face_count()));
    }
    return 0;
}
