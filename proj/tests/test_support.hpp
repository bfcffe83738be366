// Shared fixtures and independent geometric oracles for the test suites.
#pragma once

#include <catch2/catch_amalgamated.hpp>

#include "morphofit/mesh.hpp"

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

namespace test_support {

using morphofit::Face;
using morphofit::TriMesh;
using morphofit::Vec3;

inline std::filesystem::path temp_dir(const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() / ("morphofit_test_" + tag);
    std::filesystem::create_directories(dir);
    return dir;
}

inline TriMesh unit_cube() {
    std::vector<Vec3> v = {
        {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
        {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
    };
    std::vector<Face> f = {
        {0, 2, 1}, {0, 3, 2},  // bottom (z=0), outward -z
        {4, 5, 6}, {4, 6, 7},  // top
        {0, 1, 5}, {0, 5, 4},  // y=0
        {2, 3, 7}, {2, 7, 6},  // y=1
        {1, 2, 6}, {1, 6, 5},  // x=1
        {3, 0, 4}, {3, 4, 7},  // x=0
    };
    return TriMesh(std::move(v), std::move(f));
}

/// Closed axis-aligned tube (cylinder along +z), m segments, r rings.
inline TriMesh tube(int m, int rings, double radius, double height, double jitter = 0.0,
                    unsigned jitter_seed = 0) {
    std::mt19937 gen(jitter_seed);
    std::uniform_real_distribution<double> uni(-jitter, jitter);
    std::vector<Vec3> v;
    std::vector<Face> f;
    for (int r = 0; r < rings; ++r) {
        const double z = height * r / (rings - 1);
        for (int j = 0; j < m; ++j) {
            const double phi = 2 * M_PI * j / m;
            Vec3 p(radius * std::cos(phi), radius * std::sin(phi), z);
            if (jitter > 0) p += Vec3(uni(gen), uni(gen), uni(gen));
            v.push_back(p);
        }
    }
    const auto idx = [m](int r, int j) { return r * m + (j % m); };
    for (int r = 0; r + 1 < rings; ++r) {
        for (int j = 0; j < m; ++j) {
            f.push_back({idx(r, j), idx(r, j + 1), idx(r + 1, j + 1)});
            f.push_back({idx(r, j), idx(r + 1, j + 1), idx(r + 1, j)});
        }
    }
    const int bottom = static_cast<int>(v.size());
    v.emplace_back(0, 0, -0.1 * radius);
    const int top = static_cast<int>(v.size());
    v.emplace_back(0, 0, height + 0.1 * radius);
    for (int j = 0; j < m; ++j) {
        f.push_back({bottom, idx(0, j + 1), idx(0, j)});
        f.push_back({top, idx(rings - 1, j), idx(rings - 1, j + 1)});
    }
    return TriMesh(std::move(v), std::move(f));
}

/// Independent closest-point-on-triangle: projection onto the supporting
/// plane when the projection is inside, otherwise the best of the three
/// segment projections. Different construction than the library routine.
inline Vec3 oracle_closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                       const Vec3& c) {
    const Vec3 n = (b - a).cross(c - a);
    Vec3 best;
    double best_d2 = std::numeric_limits<double>::infinity();
    if (n.squaredNorm() > 1e-30) {
        const Vec3 proj = p - n.dot(p - a) / n.squaredNorm() * n;
        // inside test via same-side cross products
        const double s1 = n.dot((b - a).cross(proj - a));
        const double s2 = n.dot((c - b).cross(proj - b));
        const double s3 = n.dot((a - c).cross(proj - c));
        if (s1 >= 0 && s2 >= 0 && s3 >= 0) {
            best = proj;
            best_d2 = (p - proj).squaredNorm();
        }
    }
    const Vec3 segs[3][2] = {{a, b}, {b, c}, {c, a}};
    for (const auto& seg : segs) {
        const Vec3 d = seg[1] - seg[0];
        const double t = std::clamp(d.dot(p - seg[0]) / d.squaredNorm(), 0.0, 1.0);
        const Vec3 q = seg[0] + t * d;
        const double d2 = (p - q).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = q;
        }
    }
    return best;
}

/// Exhaustive nearest-point scan over all faces (distance + lowest face tie).
inline std::pair<double, int> oracle_nearest(const TriMesh& mesh, const Vec3& q) {
    double best_d2 = std::numeric_limits<double>::infinity();
    int best_face = -1;
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const auto& face = mesh.faces()[f];
        const Vec3 p = oracle_closest_on_triangle(q, mesh.vertices()[face[0]],
                                                  mesh.vertices()[face[1]], mesh.vertices()[face[2]]);
        const double d2 = (q - p).squaredNorm();
        if (d2 < best_d2 - 1e-24) {
            best_d2 = d2;
            best_face = static_cast<int>(f);
        }
    }
    return {std::sqrt(best_d2), best_face};
}

}  // namespace test_support
