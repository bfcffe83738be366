// nearest.hpp - nearest-point queries: closest point on a triangle, an AABB
// tree over mesh faces, and a kd-tree over raw points (vertex-only targets).
#pragma once

#include "morphofit/core.hpp"
#include "morphofit/mesh.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

namespace morphofit {

/// Closest point on triangle abc to p, with barycentric coordinates.
/// Region-based projection (faces, edges, vertices of the triangle).
inline std::pair<Vec3, Vec3> closest_point_on_triangle(const Vec3& p, const Vec3& a,
                                                       const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return {a, Vec3(1, 0, 0)};

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return {b, Vec3(0, 1, 0)};

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return {a + v * ab, Vec3(1 - v, v, 0)};
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return {c, Vec3(0, 0, 1)};

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return {a + w * ac, Vec3(1 - w, 0, w)};
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return {b + w * (c - b), Vec3(0, 1 - w, w)};
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return {a + ab * v + ac * w, Vec3(1 - v - w, v, w)};
}

/// Static AABB tree over the faces of a mesh. The mesh must outlive the index.
/// Queries are read-only and safe to run concurrently.
class SurfaceIndex {
public:
    explicit SurfaceIndex(const TriMesh& mesh) : mesh_(&mesh) {
        if (mesh.face_count() == 0) {
            throw ParamError("SurfaceIndex: mesh has no faces");
        }
        const std::size_t nf = mesh.face_count();
        face_order_.resize(nf);
        std::iota(face_order_.begin(), face_order_.end(), 0);
        boxes_.resize(nf);
        centroids_.resize(nf);
        for (std::size_t f = 0; f < nf; ++f) {
            const Face& face = mesh.faces()[f];
            Vec3 lo = mesh.vertices()[face[0]], hi = lo;
            for (int k = 1; k < 3; ++k) {
                lo = lo.cwiseMin(mesh.vertices()[face[k]]);
                hi = hi.cwiseMax(mesh.vertices()[face[k]]);
            }
            boxes_[f] = {lo, hi};
            centroids_[f] = (lo + hi) * 0.5;
        }
        nodes_.reserve(2 * nf / kLeafSize + 2);
        build(0, nf);
    }

    /// Globally nearest point on the triangulated surface; exact ties broken
    /// by the lowest face index.
    SurfaceHit nearest(const Vec3& query) const {
        Best best;
        search(0, query, best);
        SurfaceHit hit;
        hit.face_index = best.face;
        hit.point = best.point;
        hit.distance = std::sqrt(best.dist2);
        hit.barycentric = best.bary;
        return hit;
    }

    const TriMesh& mesh() const { return *mesh_; }

private:
    static constexpr std::size_t kLeafSize = 4;

    struct Box {
        Vec3 lo, hi;
    };
    struct Node {
        Box box;
        std::size_t begin = 0, end = 0;  // leaf: face_order_ range
        int left = -1, right = -1;
    };
    struct Best {
        double dist2 = std::numeric_limits<double>::infinity();
        int face = -1;
        Vec3 point = Vec3::Zero();
        Vec3 bary = Vec3::Zero();
    };

    int build(std::size_t begin, std::size_t end) {
        Node node;
        node.box = boxes_[face_order_[begin]];
        for (std::size_t i = begin + 1; i < end; ++i) {
            node.box.lo = node.box.lo.cwiseMin(boxes_[face_order_[i]].lo);
            node.box.hi = node.box.hi.cwiseMax(boxes_[face_order_[i]].hi);
        }
        const int idx = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        if (end - begin <= kLeafSize) {
            nodes_[idx].begin = begin;
            nodes_[idx].end = end;
            return idx;
        }
        int axis = 0;
        const Vec3 extent = node.box.hi - node.box.lo;
        if (extent[1] > extent[axis]) axis = 1;
        if (extent[2] > extent[axis]) axis = 2;
        const std::size_t mid = (begin + end) / 2;
        std::nth_element(face_order_.begin() + begin, face_order_.begin() + mid,
                         face_order_.begin() + end, [&](std::size_t fa, std::size_t fb) {
                             if (centroids_[fa][axis] != centroids_[fb][axis]) {
                                 return centroids_[fa][axis] < centroids_[fb][axis];
                             }
                             return fa < fb;
                         });
        const int l = build(begin, mid);
        const int r = build(mid, end);
        nodes_[idx].left = l;
        nodes_[idx].right = r;
        return idx;
    }

    static double box_dist2(const Box& b, const Vec3& q) {
        double d2 = 0.0;
        for (int k = 0; k < 3; ++k) {
            const double lo = b.lo[k] - q[k];
            const double hi = q[k] - b.hi[k];
            const double d = std::max({lo, hi, 0.0});
            d2 += d * d;
        }
        return d2;
    }

    void search(int node_idx, const Vec3& q, Best& best) const {
        const Node& node = nodes_[node_idx];
        if (node.left < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const std::size_t f = face_order_[i];
                if (box_dist2(boxes_[f], q) > best.dist2) continue;
                const Face& face = mesh_->faces()[f];
                const auto [point, bary] = closest_point_on_triangle(
                    q, mesh_->vertices()[face[0]], mesh_->vertices()[face[1]],
                    mesh_->vertices()[face[2]]);
                const double d2 = (q - point).squaredNorm();
                if (d2 < best.dist2 ||
                    (d2 == best.dist2 && static_cast<int>(f) < best.face)) {
                    best.dist2 = d2;
                    best.face = static_cast<int>(f);
                    best.point = point;
                    best.bary = bary;
                }
            }
            return;
        }
        const double dl = box_dist2(nodes_[node.left].box, q);
        const double dr = box_dist2(nodes_[node.right].box, q);
        const int first = dl <= dr ? node.left : node.right;
        const int second = dl <= dr ? node.right : node.left;
        const double dfirst = std::min(dl, dr), dsecond = std::max(dl, dr);
        if (dfirst <= best.dist2) search(first, q, best);
        if (dsecond <= best.dist2) search(second, q, best);
    }

    const TriMesh* mesh_;
    std::vector<std::size_t> face_order_;
    std::vector<Box> boxes_;
    std::vector<Vec3> centroids_;
    std::vector<Node> nodes_;
};

inline SurfaceHit nearest_surface_point(const Vec3& query, const SurfaceIndex& index) {
    return index.nearest(query);
}

/// kd-tree over a point set; used for vertex-only correspondence targets.
class PointIndex {
public:
    explicit PointIndex(const std::vector<Vec3>& points) : points_(&points) {
        if (points.empty()) throw ParamError("PointIndex: empty point set");
        order_.resize(points.size());
        std::iota(order_.begin(), order_.end(), 0);
        nodes_.reserve(points.size() / kLeafSize * 2 + 2);
        build(0, points.size());
    }

    /// Index and distance of the nearest point; ties -> lowest point index.
    std::pair<int, double> nearest(const Vec3& q) const {
        Best best;
        search(0, q, best);
        return {best.index, std::sqrt(best.dist2)};
    }

private:
    static constexpr std::size_t kLeafSize = 8;
    struct Node {
        Vec3 lo, hi;
        std::size_t begin = 0, end = 0;
        int left = -1, right = -1;
    };
    struct Best {
        double dist2 = std::numeric_limits<double>::infinity();
        int index = -1;
    };

    int build(std::size_t begin, std::size_t end) {
        Node node;
        node.lo = node.hi = (*points_)[order_[begin]];
        for (std::size_t i = begin + 1; i < end; ++i) {
            node.lo = node.lo.cwiseMin((*points_)[order_[i]]);
            node.hi = node.hi.cwiseMax((*points_)[order_[i]]);
        }
        const int idx = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        if (end - begin <= kLeafSize) {
            nodes_[idx].begin = begin;
            nodes_[idx].end = end;
            return idx;
        }
        int axis = 0;
        const Vec3 extent = node.hi - node.lo;
        if (extent[1] > extent[axis]) axis = 1;
        if (extent[2] > extent[axis]) axis = 2;
        const std::size_t mid = (begin + end) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::size_t ia, std::size_t ib) {
                             if ((*points_)[ia][axis] != (*points_)[ib][axis]) {
                                 return (*points_)[ia][axis] < (*points_)[ib][axis];
                             }
                             return ia < ib;
                         });
        const int l = build(begin, mid);
        const int r = build(mid, end);
        nodes_[idx].left = l;
        nodes_[idx].right = r;
        return idx;
    }

    static double box_dist2(const Node& n, const Vec3& q) {
        double d2 = 0.0;
        for (int k = 0; k < 3; ++k) {
            const double d = std::max({n.lo[k] - q[k], q[k] - n.hi[k], 0.0});
            d2 += d * d;
        }
        return d2;
    }

    void search(int node_idx, const Vec3& q, Best& best) const {
        const Node& node = nodes_[node_idx];
        if (node.left < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const std::size_t p = order_[i];
                const double d2 = (q - (*points_)[p]).squaredNorm();
                if (d2 < best.dist2 || (d2 == best.dist2 && static_cast<int>(p) < best.index)) {
                    best.dist2 = d2;
                    best.index = static_cast<int>(p);
                }
            }
            return;
        }
        const double dl = box_dist2(nodes_[node.left], q);
        const double dr = box_dist2(nodes_[node.right], q);
        const int first = dl <= dr ? node.left : node.right;
        const int second = dl <= dr ? node.right : node.left;
        if (std::min(dl, dr) <= best.dist2) search(first, q, best);
        if (std::max(dl, dr) <= best.dist2) search(second, q, best);
    }

    const std::vector<Vec3>* points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

}  // namespace morphofit
