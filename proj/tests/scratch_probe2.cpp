#include "morphofit/morphofit.hpp"
#include <cstdio>
using namespace morphofit;
int main() {
    const auto tpl = generate_synthetic_template(1, 10, 18);
    // center-ring-only tape<=path check over random subjects
    int violations = 0, checks = 0; double worst = 1e9;
    for (int s = 0; s < 60; ++s) {
        const auto subject = sample_body(tpl, 1000 + s, 0.6);
        for (const auto& st : tpl.stations) {
            const double tape = subject.truths.at(st.name);
            const double path = path_length(subject.true_mesh, tpl.spec(st.name).paths[2]);
            ++checks;
            const double margin = (path - tape) / tape;
            worst = std::min(worst, margin);
            if (tape > path) ++violations;
        }
    }
    std::printf("center-ring tape<=path violations: %d / %d, worst margin %+.4f%%\n",
                violations, checks, 100.0 * worst);

    // facing failure diagnosis
    for (int s = 0; s < 40; ++s) {
        auto subject = sample_body(tpl, 5000 + s, 0.6);
        ScanRecipe recipe = default_scan_recipe();
        recipe.yaw = M_PI; recipe.translation = Vec3(0.5, 0.5, 0.5);
        recipe.unit_scale = 1000.0; recipe.randomize_rigid = true;
        const TriMesh scan = simulate_scan(subject, tpl, recipe, 999 + s);
        const auto [norm, report] = normalize_scan(scan);
        std::vector<double> band_y;
        const auto [lo, hi] = norm.bounding_box();
        for (const Vec3& v : norm.vertices())
            if (v.z() < lo.z() + 0.14 * (hi.z() - lo.z())) band_y.push_back(v.y());
        std::sort(band_y.begin(), band_y.end());
        const double med = band_y[band_y.size() / 2];
        const double front = band_y[band_y.size() * 98 / 100] - med;
        const double back = med - band_y[band_y.size() * 2 / 100];
        if (front < back)
            std::printf("FAIL seed %d: front %.4f back %.4f band %zu\n", s, front, back, band_y.size());
    }
    return 0;
}
