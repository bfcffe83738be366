#include "morphofit/morphofit.hpp"
#include <chrono>
#include <cstdio>
using namespace morphofit;
int main(int argc, char** argv) {
    const int count = argc > 1 ? std::atoi(argv[1]) : 3;
    const auto tpl = generate_synthetic_template(1, 10, 18);
    PipelineConfig config;
    ScanRecipe recipe = default_scan_recipe();
    recipe.yaw = M_PI; recipe.translation = Vec3(0.5, 0.5, 0.5);
    recipe.unit_scale = 1000.0; recipe.randomize_rigid = true;
    for (int s = 0; s < count; ++s) {
        const auto t0 = std::chrono::steady_clock::now();
        auto subject = sample_body(tpl, 100 + s, 0.6);
        const TriMesh scan = simulate_scan(subject, tpl, recipe, 200 + s);
        const auto outcome = register_scan(tpl, scan, config);
        // distance of active deformed vertices to the TRUE surface in the
        // normalized frame
        const TriMesh true_aligned = apply_alignment(subject.true_mesh, outcome.alignment);
        const SurfaceIndex true_index(true_aligned);
        const auto corr = find_correspondences(outcome.registration.deformed,
                                               ScanTarget(outcome.normalized_scan, true),
                                               config.nricp);
        double sum = 0, active = 0;
        for (Eigen::Index i = 0; i < corr.weights.size(); ++i) {
            if (corr.weights[i] == 0) continue;
            sum += true_index.nearest(outcome.registration.deformed.vertices()[i]).distance;
            active += 1;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("subject %d: true-surface mean %.3f mm (scan-mean %.3f mm, active %.0f%%), "
                    "beta1 %.2f arm %.2f, trace rows %zu, %.1f s\n",
                    s, 1000 * sum / active, 1000 * outcome.final_mean_active_distance,
                    100 * corr.active_fraction(), outcome.alignment.estimated_beta1,
                    outcome.alignment.estimated_arm_angle,
                    outcome.registration.trace.rows.size(), secs);
    }
    return 0;
}
