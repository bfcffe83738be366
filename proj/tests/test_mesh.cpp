#include "test_support.hpp"

#include "morphofit/mesh.hpp"
#include "morphofit/nearest.hpp"
#include "morphofit/obj_io.hpp"

#include <fstream>
#include <random>

using namespace morphofit;
using test_support::oracle_nearest;
using test_support::temp_dir;
using test_support::tube;
using test_support::unit_cube;

namespace {

std::filesystem::path write_text(const std::string& name, const std::string& content) {
    const auto path = temp_dir("mesh") / name;
    std::ofstream os(path);
    os << content;
    return path;
}

}  // namespace

TEST_CASE("cube OBJ loads with expected counts", "[mesh][obj]") {
    const TriMesh cube = unit_cube();
    const auto path = temp_dir("mesh") / "cube.obj";
    save_obj(cube, path);
    const TriMesh loaded = load_obj(path);
    CHECK(loaded.vertex_count() == 8);
    CHECK(loaded.face_count() == 12);
    CHECK(loaded.edge_count() == 18);
    // V - E + F = 2 for a closed genus-0 surface
    CHECK(8 - 18 + 12 == 2);
    CHECK(loaded.component_count() == 1);
}

TEST_CASE("obj parser handles slash syntax, quads and comments", "[mesh][obj]") {
    const auto path = write_text("slashes.obj",
                                 "# comment line\n"
                                 "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
                                 "vn 0 0 1\nvt 0.5 0.5\n"
                                 "f 1/1/1 2/1/1 3/1/1 4/1/1\n");
    const TriMesh mesh = load_obj(path);
    CHECK(mesh.vertex_count() == 4);
    CHECK(mesh.face_count() == 2);  // quad fan-triangulated
}

TEST_CASE("obj parser rejects bad face records with a line number", "[mesh][obj]") {
    const auto zero = write_text("zero_index.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n");
    CHECK_THROWS_MATCHES(load_obj(zero), ParseError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("line 4")));

    const auto range = write_text("oob.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
    CHECK_THROWS_AS(load_obj(range), ParseError);

    const auto empty = write_text("novert.obj", "# nothing\n");
    CHECK_THROWS_AS(load_obj(empty), ParseError);

    const auto degen = write_text("degen.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n");
    CHECK_THROWS_AS(load_obj(degen), ParseError);
}

TEST_CASE("obj negative indices resolve relative to defined vertices", "[mesh][obj]") {
    const auto path = write_text("neg.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n");
    const TriMesh mesh = load_obj(path);
    REQUIRE(mesh.face_count() == 1);
    CHECK(mesh.faces()[0] == Face{0, 1, 2});
}

TEST_CASE("obj round trip preserves geometry and connectivity", "[mesh][obj]") {
    const TriMesh mesh = tube(12, 6, 0.37, 1.21, 0.02, 5);
    const auto path = temp_dir("mesh") / "tube.obj";
    save_obj(mesh, path);
    const TriMesh loaded = load_obj(path);
    REQUIRE(loaded.vertex_count() == mesh.vertex_count());
    REQUIRE(loaded.faces() == mesh.faces());
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
        CHECK((loaded.vertices()[v] - mesh.vertices()[v]).norm() < 1e-7);
    }
}

TEST_CASE("point clouds save as vertices only", "[mesh][obj]") {
    const TriMesh cloud(std::vector<Vec3>{{0, 0, 0}, {1.5, 2.5, 3.5}}, {});
    const auto path = temp_dir("mesh") / "cloud.obj";
    save_obj(cloud, path);
    std::ifstream is(path);
    std::string line;
    int v_lines = 0, f_lines = 0;
    while (std::getline(is, line)) {
        if (line.rfind("v ", 0) == 0) ++v_lines;
        if (line.rfind("f ", 0) == 0) ++f_lines;
    }
    CHECK(v_lines == 2);
    CHECK(f_lines == 0);
    CHECK(load_obj(path).vertex_count() == 2);
}

TEST_CASE("save_obj refuses non-finite vertices", "[mesh][obj]") {
    std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, std::nan(""), 0}};
    const TriMesh bad(std::move(v), {Face{0, 1, 2}});
    CHECK_THROWS_AS(save_obj(bad, temp_dir("mesh") / "nan.obj"), IoError);
}

TEST_CASE("scanner-scale mesh parses", "[mesh][obj][slow]") {
    // ~57k vertices / ~114k faces, the size produced by the scanner.
    const TriMesh big = tube(200, 285, 0.4, 1.8);
    CHECK(big.vertex_count() == 57002);
    CHECK(big.face_count() == 114000);
    const auto path = temp_dir("mesh") / "big.obj";
    save_obj(big, path);
    const TriMesh loaded = load_obj(path);
    CHECK(loaded.vertex_count() == big.vertex_count());
    CHECK(loaded.face_count() == big.face_count());
}

TEST_CASE("incidence matrix rows sum to zero with one +1 and one -1", "[mesh][topology]") {
    const TriMesh mesh = tube(10, 5, 0.3, 1.0, 0.01, 2);
    const auto m = mesh.incidence_matrix();
    REQUIRE(m.rows() == static_cast<Eigen::Index>(mesh.edge_count()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        int plus = 0, minus = 0, nnz = 0;
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double v = m.coeff(r, c);
            if (v == 1.0) ++plus;
            if (v == -1.0) ++minus;
            if (v != 0.0) ++nnz;
        }
        CHECK(plus == 1);
        CHECK(minus == 1);
        CHECK(nnz == 2);
        const auto& edge = mesh.edges()[static_cast<std::size_t>(r)];
        CHECK(edge.first < edge.second);
        CHECK(m.coeff(r, edge.first) == 1.0);
        CHECK(m.coeff(r, edge.second) == -1.0);
    }
}

TEST_CASE("adjacency is symmetric", "[mesh][topology]") {
    const TriMesh mesh = tube(14, 7, 0.5, 1.3, 0.03, 9);
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
        for (int j : mesh.neighbors()[i]) {
            const auto& back = mesh.neighbors()[static_cast<std::size_t>(j)];
            CHECK(std::find(back.begin(), back.end(), static_cast<int>(i)) != back.end());
        }
    }
}

TEST_CASE("mesh construction validates faces", "[mesh]") {
    std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    CHECK_THROWS_AS(TriMesh(v, {Face{0, 1, 3}}), ParamError);
    CHECK_THROWS_AS(TriMesh(v, {Face{0, 1, 1}}), ParamError);
}

TEST_CASE("nearest point at a vertex has distance zero", "[mesh][nearest]") {
    const TriMesh mesh = unit_cube();
    const SurfaceIndex index(mesh);
    const SurfaceHit hit = index.nearest(Vec3(1, 1, 1));
    CHECK(hit.distance == Catch::Approx(0.0).margin(1e-15));
    CHECK((hit.point - Vec3(1, 1, 1)).norm() < 1e-15);
}

TEST_CASE("nearest point above a horizontal triangle centroid", "[mesh][nearest]") {
    std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    const TriMesh tri(std::move(v), {Face{0, 1, 2}});
    const SurfaceIndex index(tri);
    const Vec3 centroid(1.0 / 3, 1.0 / 3, 0);
    const double h = 0.73;
    const SurfaceHit hit = index.nearest(centroid + Vec3(0, 0, h));
    CHECK(hit.distance == Catch::Approx(h).epsilon(1e-12));
    CHECK((hit.point - centroid).norm() < 1e-12);
    CHECK(hit.barycentric.sum() == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("nearest queries match the exhaustive oracle", "[mesh][nearest][oracle]") {
    // 500-face tube: 2 * 10 * (25 - 1) side faces + 2 * 10 cap faces.
    const TriMesh mesh = tube(10, 25, 0.45, 1.7, 0.04, 11);
    REQUIRE(mesh.face_count() == 500);
    const SurfaceIndex index(mesh);
    std::mt19937 gen(1234);
    std::uniform_real_distribution<double> uni(-1.2, 2.2);
    for (int k = 0; k < 1000; ++k) {
        const Vec3 q(uni(gen), uni(gen), uni(gen));
        const SurfaceHit hit = index.nearest(q);
        const auto [oracle_dist, oracle_face] = oracle_nearest(mesh, q);
        REQUIRE(hit.distance == Catch::Approx(oracle_dist).margin(1e-10));
        // metric lower bound against every vertex
        // (cheap spot check on a handful of vertices)
        for (std::size_t v = 0; v < mesh.vertex_count(); v += 37) {
            CHECK(hit.distance <= (q - mesh.vertices()[v]).norm() + 1e-12);
        }
    }
}

TEST_CASE("nearest ties break to the lowest face index", "[mesh][nearest]") {
    // Two triangles sharing the edge x in [0,1], y=0; query on the shared edge.
    std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0.5, 1, 0}, {0.5, -1, 0}};
    const TriMesh mesh(std::move(v), {Face{0, 1, 2}, Face{0, 3, 1}});
    const SurfaceIndex index(mesh);
    const SurfaceHit hit = index.nearest(Vec3(0.5, 0, 0.9));
    CHECK(hit.face_index == 0);
    CHECK(hit.distance == Catch::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("surface index requires faces", "[mesh][nearest]") {
    const TriMesh cloud(std::vector<Vec3>{{0, 0, 0}}, {});
    CHECK_THROWS_AS(SurfaceIndex(cloud), ParamError);
}

TEST_CASE("with_vertices shares topology and recomputes normals", "[mesh]") {
    const TriMesh mesh = unit_cube();
    std::vector<Vec3> moved = mesh.vertices();
    for (Vec3& v : moved) v *= 2.0;
    const TriMesh scaled = mesh.with_vertices(std::move(moved));
    CHECK(&scaled.faces() == &mesh.faces());  // shared topology
    CHECK(scaled.edge_count() == mesh.edge_count());
    // normals unchanged under uniform scaling
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        CHECK((scaled.face_normals()[f] - mesh.face_normals()[f]).norm() < 1e-12);
    }
    CHECK_THROWS_AS(mesh.with_vertices(std::vector<Vec3>{{0, 0, 0}}), ParamError);
}
