// mesh.hpp - triangle mesh with derived topology (edges, neighbor sets,
// node-arc incidence, normals, connected components).
#pragma once

#include "morphofit/core.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <memory>
#include <utility>
#include <vector>

namespace morphofit {

using Face = std::array<int, 3>;
using Edge = std::pair<int, int>;  // first < second

/// Result of a nearest-point-on-surface query.
struct SurfaceHit {
    Vec3 point = Vec3::Zero();   ///< closest point on the surface
    int face_index = -1;         ///< face containing the point (-1: vertex target)
    double distance = 0.0;       ///< Euclidean distance from the query
    Vec3 barycentric = Vec3::Zero();  ///< barycentric coords in the hit face
};

namespace detail {

// Topology is immutable and position-independent, so meshes that share
// connectivity (template deformations) share one instance.
struct Topology {
    std::vector<Face> faces;
    std::vector<Edge> edges;                    // unique undirected, lower index first
    std::vector<std::vector<int>> neighbors;    // sorted vertex adjacency
    std::vector<int> component_of_vertex;       // -1 for isolated vertices
    int component_count = 0;

    Topology(std::size_t vertex_count, std::vector<Face> f) : faces(std::move(f)) {
        const int n = static_cast<int>(vertex_count);
        edges.reserve(faces.size() * 3);
        for (std::size_t fi = 0; fi < faces.size(); ++fi) {
            const Face& face = faces[fi];
            for (int k = 0; k < 3; ++k) {
                if (face[k] < 0 || face[k] >= n) {
                    throw ParamError("face " + std::to_string(fi) + " references vertex " +
                                     std::to_string(face[k]) + " outside [0, " +
                                     std::to_string(n) + ")");
                }
            }
            if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
                throw ParamError("face " + std::to_string(fi) + " is degenerate");
            }
            for (int k = 0; k < 3; ++k) {
                const int a = face[k], b = face[(k + 1) % 3];
                edges.emplace_back(std::min(a, b), std::max(a, b));
            }
        }
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

        neighbors.assign(vertex_count, {});
        for (const Edge& e : edges) {
            neighbors[e.first].push_back(e.second);
            neighbors[e.second].push_back(e.first);
        }
        for (auto& nb : neighbors) std::sort(nb.begin(), nb.end());

        // Connected components over the edge graph (isolated vertices -> -1).
        component_of_vertex.assign(vertex_count, -1);
        std::vector<int> stack;
        for (int seed = 0; seed < n; ++seed) {
            if (component_of_vertex[seed] != -1 || neighbors[seed].empty()) continue;
            const int comp = component_count++;
            stack.push_back(seed);
            component_of_vertex[seed] = comp;
            while (!stack.empty()) {
                const int v = stack.back();
                stack.pop_back();
                for (int w : neighbors[v]) {
                    if (component_of_vertex[w] == -1) {
                        component_of_vertex[w] = comp;
                        stack.push_back(w);
                    }
                }
            }
        }
    }
};

}  // namespace detail

/// Immutable triangle mesh. Derived structures are built on construction and
/// never go stale; position-only updates go through with_vertices().
class TriMesh {
public:
    TriMesh() = default;

    TriMesh(std::vector<Vec3> vertices, std::vector<Face> faces)
        : vertices_(std::move(vertices)),
          topo_(std::make_shared<detail::Topology>(vertices_.size(), std::move(faces))) {
        compute_normals();
    }

    /// Same connectivity, new vertex positions (normals recomputed).
    TriMesh with_vertices(std::vector<Vec3> vertices) const {
        if (vertices.size() != vertices_.size()) {
            throw ParamError("with_vertices: vertex count mismatch");
        }
        TriMesh m;
        m.vertices_ = std::move(vertices);
        m.topo_ = topo_;
        m.compute_normals();
        return m;
    }

    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<Face>& faces() const { return topo_->faces; }
    const std::vector<Edge>& edges() const { return topo_->edges; }
    const std::vector<std::vector<int>>& neighbors() const { return topo_->neighbors; }
    const std::vector<Vec3>& face_normals() const { return face_normals_; }
    const std::vector<Vec3>& vertex_normals() const { return vertex_normals_; }

    std::size_t vertex_count() const { return vertices_.size(); }
    std::size_t face_count() const { return topo_ ? topo_->faces.size() : 0; }
    std::size_t edge_count() const { return topo_ ? topo_->edges.size() : 0; }

    int component_count() const { return topo_->component_count; }
    int component_of(int vertex) const { return topo_->component_of_vertex[vertex]; }

    /// Node-arc incidence matrix M (edges x vertices): +1 at the lower vertex
    /// index of each edge, -1 at the higher one.
    Eigen::SparseMatrix<double> incidence_matrix() const {
        const auto& e = edges();
        Eigen::SparseMatrix<double> m(static_cast<Eigen::Index>(e.size()),
                                      static_cast<Eigen::Index>(vertices_.size()));
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(e.size() * 2);
        for (std::size_t r = 0; r < e.size(); ++r) {
            trips.emplace_back(static_cast<int>(r), e[r].first, 1.0);
            trips.emplace_back(static_cast<int>(r), e[r].second, -1.0);
        }
        m.setFromTriplets(trips.begin(), trips.end());
        return m;
    }

    std::pair<Vec3, Vec3> bounding_box() const {
        if (vertices_.empty()) throw ParamError("bounding_box: empty mesh");
        Vec3 lo = vertices_[0], hi = vertices_[0];
        for (const Vec3& v : vertices_) {
            lo = lo.cwiseMin(v);
            hi = hi.cwiseMax(v);
        }
        return {lo, hi};
    }

    Vec3 face_centroid(int f) const {
        const Face& face = faces()[f];
        return (vertices_[face[0]] + vertices_[face[1]] + vertices_[face[2]]) / 3.0;
    }

    bool has_finite_vertices() const {
        for (const Vec3& v : vertices_) {
            if (!v.allFinite()) return false;
        }
        return true;
    }

private:
    void compute_normals() {
        if (!topo_) return;
        const auto& faces = topo_->faces;
        face_normals_.assign(faces.size(), Vec3::Zero());
        vertex_normals_.assign(vertices_.size(), Vec3::Zero());
        for (std::size_t f = 0; f < faces.size(); ++f) {
            const Vec3& a = vertices_[faces[f][0]];
            const Vec3& b = vertices_[faces[f][1]];
            const Vec3& c = vertices_[faces[f][2]];
            const Vec3 cross = (b - a).cross(c - a);  // 2x area-weighted normal
            const double len = cross.norm();
            if (len > 1e-30) face_normals_[f] = cross / len;
            for (int k = 0; k < 3; ++k) vertex_normals_[faces[f][k]] += cross;
        }
        for (Vec3& vn : vertex_normals_) {
            const double len = vn.norm();
            if (len > 1e-30) vn /= len;
        }
    }

    std::vector<Vec3> vertices_;
    std::shared_ptr<const detail::Topology> topo_;
    std::vector<Vec3> face_normals_;
    std::vector<Vec3> vertex_normals_;
};

}  // namespace morphofit
