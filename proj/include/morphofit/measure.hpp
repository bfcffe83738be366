// measure.hpp - circumference-path features: polyline lengths of fixed vertex
// loops on meshes in template topology.
#pragma once

#include "morphofit/core.hpp"
#include "morphofit/mesh.hpp"
#include "morphofit/template_model.hpp"

#include <vector>

namespace morphofit {

/// Ordered path lengths (meters) for one measurement on one subject.
using FeatureVector = std::vector<double>;

/// Polyline length through the listed vertices; closed paths add the segment
/// back to the first vertex. Consecutive vertices need not be mesh-adjacent.
inline double path_length(const TriMesh& mesh, const std::vector<int>& path, bool closed) {
    if (closed && path.size() < 3) {
        throw ParamError("path_length: closed path needs >= 3 vertices");
    }
    if (!closed && path.size() < 2) {
        throw ParamError("path_length: open path needs >= 2 vertices");
    }
    const auto& verts = mesh.vertices();
    const int n = static_cast<int>(mesh.vertex_count());
    for (int v : path) {
        if (v < 0 || v >= n) {
            throw ParamError("path_length: vertex index " + std::to_string(v) +
                             " out of range for mesh with " + std::to_string(n) +
                             " vertices (not a registered mesh in template topology?)");
        }
    }
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
        total += (verts[path[k + 1]] - verts[path[k]]).norm();
    }
    if (closed) total += (verts[path.front()] - verts[path.back()]).norm();
    return total;
}

inline double path_length(const TriMesh& mesh, const MeasurementPath& path) {
    return path_length(mesh, path.vertices, path.closed);
}

/// All C path lengths of one measurement, in spec order. The mesh must be in
/// template topology (registration output), so this is pure index lookup.
inline FeatureVector extract_features(const TriMesh& mesh, const MeasurementSpec& spec) {
    FeatureVector features;
    features.reserve(spec.paths.size());
    for (const MeasurementPath& p : spec.paths) {
        features.push_back(path_length(mesh, p));
    }
    return features;
}

/// Features for every measurement of the template, keyed by spec name.
inline std::map<std::string, FeatureVector> extract_all_features(
    const TriMesh& mesh, const ParametricTemplate& tpl) {
    std::map<std::string, FeatureVector> out;
    for (const MeasurementSpec& spec : tpl.paths) {
        out[spec.name] = extract_features(mesh, spec);
    }
    return out;
}

inline void write_features_csv(const std::filesystem::path& path,
                               const std::vector<std::pair<std::string, std::map<std::string, FeatureVector>>>&
                                   per_subject) {
    write_file_atomic(path, [&](std::ostream& os) {
        os << "subject_id,measurement,c_index,length_m\n";
        char buf[64];
        for (const auto& [subject, features] : per_subject) {
            for (const auto& [name, vec] : features) {
                for (std::size_t c = 0; c < vec.size(); ++c) {
                    std::snprintf(buf, sizeof(buf), "%.9g", vec[c]);
                    os << subject << ',' << name << ',' << c << ',' << buf << '\n';
                }
            }
        }
    });
}

}  // namespace morphofit
