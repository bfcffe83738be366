// obj_io.hpp - Wavefront OBJ load/save for triangle meshes.
//
// Parsing rules: `v x y z` and `f i j k ...` records; `i/t/n` slash syntax is
// accepted with everything beyond the vertex index discarded; polygons with
// more than three vertices are fan-triangulated; stored normals/texcoords are
// ignored (normals are recomputed from geometry). Negative indices are
// resolved relative to the vertices defined so far, index 0 is an error.
#pragma once

#include "morphofit/core.hpp"
#include "morphofit/mesh.hpp"

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

namespace morphofit {

namespace detail {

inline ParseError obj_error(const std::filesystem::path& path, std::size_t line,
                            const std::string& what) {
    return ParseError(path.string() + ": line " + std::to_string(line) + ": " + what);
}

inline int parse_face_index(std::string_view token, std::size_t defined_vertices,
                            const std::filesystem::path& path, std::size_t line) {
    const std::size_t slash = token.find('/');
    const std::string_view head = (slash == std::string_view::npos) ? token : token.substr(0, slash);
    long idx = 0;
    const auto res = std::from_chars(head.data(), head.data() + head.size(), idx);
    if (res.ec != std::errc() || res.ptr != head.data() + head.size()) {
        throw obj_error(path, line, "bad face index '" + std::string(token) + "'");
    }
    if (idx == 0) throw obj_error(path, line, "face index 0 (OBJ indices are 1-based)");
    long resolved = idx > 0 ? idx - 1 : static_cast<long>(defined_vertices) + idx;
    if (resolved < 0 || resolved >= static_cast<long>(defined_vertices)) {
        throw obj_error(path, line, "face index " + std::to_string(idx) + " out of range (" +
                                        std::to_string(defined_vertices) + " vertices defined)");
    }
    return static_cast<int>(resolved);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace detail

inline TriMesh load_obj(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path.string());

    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto tokens = detail::split_ws(line);
        if (tokens.empty() || tokens[0][0] == '#') continue;
        if (tokens[0] == "v") {
            if (tokens.size() < 4) throw detail::obj_error(path, line_no, "vertex needs 3 coordinates");
            Vec3 v;
            for (int k = 0; k < 3; ++k) {
                const auto t = tokens[k + 1];
                double value = 0.0;
                const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
                if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
                    throw detail::obj_error(path, line_no, "bad vertex coordinate '" + std::string(t) + "'");
                }
                v[k] = value;
            }
            vertices.push_back(v);
        } else if (tokens[0] == "f") {
            if (tokens.size() < 4) throw detail::obj_error(path, line_no, "face needs >= 3 vertices");
            std::vector<int> poly;
            poly.reserve(tokens.size() - 1);
            for (std::size_t k = 1; k < tokens.size(); ++k) {
                poly.push_back(detail::parse_face_index(tokens[k], vertices.size(), path, line_no));
            }
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) {  // fan triangulation
                const Face f{poly[0], poly[k], poly[k + 1]};
                if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
                    throw detail::obj_error(path, line_no, "degenerate face (repeated vertex index)");
                }
                faces.push_back(f);
            }
        }
        // vn/vt/o/g/s/usemtl/mtllib records are ignored.
    }
    if (vertices.empty()) throw ParseError(path.string() + ": no vertices (empty mesh)");
    return TriMesh(std::move(vertices), std::move(faces));
}

/// Writes `v` lines with >= 9 significant digits, then `f` lines (1-based).
/// Point clouds (no faces) emit vertices only. Non-finite vertices are refused.
inline void save_obj(const TriMesh& mesh, const std::filesystem::path& path) {
    if (!mesh.has_finite_vertices()) {
        throw IoError("refusing to write mesh with non-finite vertices to " + path.string());
    }
    write_file_atomic(path, [&](std::ostream& os) {
        char buf[128];
        for (const Vec3& v : mesh.vertices()) {
            std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
            os << buf;
        }
        for (const Face& f : mesh.faces()) {
            os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
        }
    });
}

}  // namespace morphofit
