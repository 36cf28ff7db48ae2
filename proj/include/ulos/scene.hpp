#pragma once

// Ground-truth geometry oracle. A scene is a list of strictly nested closed
// surfaces M_1..M_n inside a domain box; the region between consecutive
// surfaces carries a weak/strong interaction label that fixes the sign of the
// unified signed distance field. The conventional SDF of the outermost
// surface doubles as the line-of-sight (vision) prior.

#include "ulos/common.hpp"

#include <json.hpp>

#include <array>
#include <memory>
#include <optional>
#include <sstream>

namespace ulos {

enum class Interaction { weak, strong };

inline Interaction interaction_from_string(const std::string& s) {
    if (s == "weak") return Interaction::weak;
    if (s == "strong") return Interaction::strong;
    throw ConfigError("unknown interaction label: " + s);
}

// ---------------------------------------------------------------------------
// Triangle mesh (innermost-object import, ASCII PLY)

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> tris;
    std::vector<double> cum_area;  // cumulative triangle areas for sampling
    double total_area = 0.0;
    Aabb bbox;

    void finalize() {
        if (vertices.empty() || tris.empty()) throw InvalidPrimitive("mesh: empty geometry");
        bbox.lo = bbox.hi = vertices[0];
        for (const auto& v : vertices) {
            bbox.lo = bbox.lo.cwiseMin(v);
            bbox.hi = bbox.hi.cwiseMax(v);
        }
        cum_area.resize(tris.size());
        total_area = 0.0;
        for (std::size_t t = 0; t < tris.size(); ++t) {
            const Vec3& a = vertices[tris[t][0]];
            const Vec3& b = vertices[tris[t][1]];
            const Vec3& c = vertices[tris[t][2]];
            total_area += 0.5 * (b - a).cross(c - a).norm();
            cum_area[t] = total_area;
        }
        if (!(total_area > 0.0)) throw InvalidPrimitive("mesh: degenerate (zero area)");
    }
};

namespace detail {

// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + w * (c - b);
    }
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

// Ray/triangle intersection test (Moller-Trumbore), t > eps only.
inline bool ray_hits_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                              const Vec3& c, double& t_out) {
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 pv = d.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-14) return false;
    const double inv = 1.0 / det;
    const Vec3 tv = o - a;
    const double u = tv.dot(pv) * inv;
    if (u < 0.0 || u > 1.0) return false;
    const Vec3 qv = tv.cross(e1);
    const double v = d.dot(qv) * inv;
    if (v < 0.0 || u + v > 1.0) return false;
    const double t = e2.dot(qv) * inv;
    if (t <= 1e-12) return false;
    t_out = t;
    return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One closed bounding surface with a conventional SDF (negative inside).

struct Surface {
    enum class Kind { sphere, box, mesh };

    Kind kind = Kind::sphere;
    Vec3 center{0, 0, 0};
    double radius = 0.0;
    Vec3 half_extents{0, 0, 0};
    std::shared_ptr<const TriMesh> mesh;

    double sdf(const Vec3& x) const {
        switch (kind) {
            case Kind::sphere:
                return (x - center).norm() - radius;
            case Kind::box: {
                const Vec3 q = (x - center).cwiseAbs() - half_extents;
                const Vec3 outside = q.cwiseMax(0.0);
                const double out_d = outside.norm();
                const double in_d = std::min(q.maxCoeff(), 0.0);
                return out_d + in_d;
            }
            case Kind::mesh:
                return mesh_sdf(x);
        }
        return 0.0;
    }

    // Outward unit normal of the nearest face. Box edges and corners use the
    // axis-priority tie-break (x over y over z) so tests are reproducible.
    Vec3 outward_normal(const Vec3& x) const {
        switch (kind) {
            case Kind::sphere: {
                const Vec3 d = x - center;
                const double n = d.norm();
                return n > 1e-12 ? Vec3(d / n) : Vec3(1, 0, 0);
            }
            case Kind::box: {
                const Vec3 rel = x - center;
                const Vec3 q = rel.cwiseAbs() - half_extents;
                int axis = 0;
                for (int a = 1; a < 3; ++a)
                    if (q[a] > q[axis]) axis = a;  // strict: ties keep lower axis
                Vec3 n = Vec3::Zero();
                n[axis] = rel[axis] >= 0.0 ? 1.0 : -1.0;
                return n;
            }
            case Kind::mesh: {
                Vec3 cp;
                nearest_mesh_point(x, cp);
                Vec3 d = x - cp;
                const double dn = d.norm();
                if (dn > 1e-9) {
                    d /= dn;
                    return mesh_contains(x) ? Vec3(-d) : d;
                }
                // On the surface: use the face normal of the nearest triangle.
                const Vec3 fn = nearest_face_normal(x);
                return mesh_contains(x + 1e-6 * fn) ? Vec3(-fn) : fn;
            }
        }
        return Vec3(1, 0, 0);
    }

    Aabb bbox() const {
        switch (kind) {
            case Kind::sphere:
                return {center - Vec3::Constant(radius), center + Vec3::Constant(radius)};
            case Kind::box:
                return {center - half_extents, center + half_extents};
            case Kind::mesh:
                return {center + mesh->bbox.lo, center + mesh->bbox.hi};
        }
        return {};
    }

    // Deterministic covering samples used for nesting verification.
    void coverage_samples(std::vector<Vec3>& out) const {
        switch (kind) {
            case Kind::sphere: {
                const int n = 512;  // Fibonacci lattice
                const double ga = kPi * (3.0 - std::sqrt(5.0));
                for (int i = 0; i < n; ++i) {
                    const double z = 1.0 - 2.0 * (i + 0.5) / n;
                    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
                    const double th = ga * i;
                    out.push_back(center + radius * Vec3(r * std::cos(th), r * std::sin(th), z));
                }
                break;
            }
            case Kind::box: {
                const int g = 9;
                for (int axis = 0; axis < 3; ++axis)
                    for (int side = -1; side <= 1; side += 2)
                        for (int i = 0; i < g; ++i)
                            for (int j = 0; j < g; ++j) {
                                Vec3 p;
                                p[axis] = side * half_extents[axis];
                                const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
                                p[a1] = half_extents[a1] * (2.0 * i / (g - 1) - 1.0);
                                p[a2] = half_extents[a2] * (2.0 * j / (g - 1) - 1.0);
                                out.push_back(center + p);
                            }
                break;
            }
            case Kind::mesh:
                for (const auto& v : mesh->vertices) out.push_back(center + v);
                for (const auto& t : mesh->tris)
                    out.push_back(center + (mesh->vertices[t[0]] + mesh->vertices[t[1]] +
                                            mesh->vertices[t[2]]) / 3.0);
                break;
        }
    }

    // Uniform-by-area random surface samples.
    void area_samples(int n, Rng& rng, std::vector<Vec3>& out) const {
        switch (kind) {
            case Kind::sphere:
                for (int i = 0; i < n; ++i) {
                    const double z = rng.uniform(-1.0, 1.0);
                    const double th = rng.uniform(0.0, 2.0 * kPi);
                    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
                    out.push_back(center + radius * Vec3(r * std::cos(th), r * std::sin(th), z));
                }
                break;
            case Kind::box: {
                const Vec3& h = half_extents;
                const double area_x = 4.0 * h.y() * h.z();
                const double area_y = 4.0 * h.x() * h.z();
                const double area_z = 4.0 * h.x() * h.y();
                const double total = 2.0 * (area_x + area_y + area_z);
                for (int i = 0; i < n; ++i) {
                    double u = rng.uniform() * total;
                    int axis = 0;
                    double face2 = 2.0 * area_x;
                    if (u >= face2) {
                        u -= face2;
                        axis = 1;
                        face2 = 2.0 * area_y;
                        if (u >= face2) {
                            u -= face2;
                            axis = 2;
                        }
                    }
                    const int side = rng.uniform() < 0.5 ? -1 : 1;
                    Vec3 p;
                    p[axis] = side * h[axis];
                    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
                    p[a1] = rng.uniform(-h[a1], h[a1]);
                    p[a2] = rng.uniform(-h[a2], h[a2]);
                    out.push_back(center + p);
                }
                break;
            }
            case Kind::mesh:
                for (int i = 0; i < n; ++i) {
                    const double u = rng.uniform() * mesh->total_area;
                    const auto it = std::lower_bound(mesh->cum_area.begin(), mesh->cum_area.end(), u);
                    const std::size_t t = std::min<std::size_t>(
                        static_cast<std::size_t>(it - mesh->cum_area.begin()), mesh->tris.size() - 1);
                    double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
                    const Vec3& a = mesh->vertices[mesh->tris[t][0]];
                    const Vec3& b = mesh->vertices[mesh->tris[t][1]];
                    const Vec3& c = mesh->vertices[mesh->tris[t][2]];
                    out.push_back(center + (1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
                }
                break;
        }
    }

private:
    double mesh_sdf(const Vec3& x) const {
        const Vec3 q = x - center;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& t : mesh->tris) {
            const Vec3 cp = detail::closest_point_on_triangle(q, mesh->vertices[t[0]],
                                                              mesh->vertices[t[1]], mesh->vertices[t[2]]);
            best = std::min(best, (q - cp).squaredNorm());
        }
        const double d = std::sqrt(best);
        return mesh_contains(x) ? -d : d;
    }

    void nearest_mesh_point(const Vec3& x, Vec3& cp_out) const {
        const Vec3 q = x - center;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& t : mesh->tris) {
            const Vec3 cp = detail::closest_point_on_triangle(q, mesh->vertices[t[0]],
                                                              mesh->vertices[t[1]], mesh->vertices[t[2]]);
            const double d2 = (q - cp).squaredNorm();
            if (d2 < best) {
                best = d2;
                cp_out = cp + center;
            }
        }
    }

    Vec3 nearest_face_normal(const Vec3& x) const {
        const Vec3 q = x - center;
        double best = std::numeric_limits<double>::infinity();
        Vec3 n(1, 0, 0);
        for (const auto& t : mesh->tris) {
            const Vec3& a = mesh->vertices[t[0]];
            const Vec3& b = mesh->vertices[t[1]];
            const Vec3& c = mesh->vertices[t[2]];
            const Vec3 cp = detail::closest_point_on_triangle(q, a, b, c);
            const double d2 = (q - cp).squaredNorm();
            if (d2 < best) {
                best = d2;
                n = (b - a).cross(c - a).normalized();
            }
        }
        return n;
    }

    // Sign by ray parity; a second skew direction breaks edge-grazing cases.
    bool mesh_contains(const Vec3& x) const {
        static const Vec3 dirs[2] = {Vec3(0.57735026, 0.70710678, 0.40824829).normalized(),
                                     Vec3(-0.33046262, 0.91894263, 0.21512217).normalized()};
        const Vec3 q = x - center;
        for (const auto& dir : dirs) {
            int crossings = 0;
            bool clean = true;
            for (const auto& t : mesh->tris) {
                double th;
                if (detail::ray_hits_triangle(q, dir, mesh->vertices[t[0]], mesh->vertices[t[1]],
                                              mesh->vertices[t[2]], th)) {
                    ++crossings;
                    if (th < 1e-9) clean = false;
                }
            }
            if (clean) return crossings % 2 == 1;
        }
        return false;
    }
};

// ---------------------------------------------------------------------------
// Scene

struct RegionInfo {
    int index = 0;  // x lies in R_{index, index+1}; index == n means int(M_n)
    Interaction interaction = Interaction::weak;
};

struct ULoSScene {
    static constexpr double kEpsBoundary = 1e-6;  // m
    static constexpr double kEpsSurface = 1e-3;   // m

    std::vector<Surface> surfaces;           // M_1 .. M_n (outer to inner)
    std::vector<Interaction> region_labels;  // size n+1; label of R_{i,i+1}, [n] = int(M_n)
    Aabb domain;

    int n_surfaces() const { return static_cast<int>(surfaces.size()); }

    void check_in_domain(const Vec3& x) const {
        if (!domain.contains(x))
            throw OutOfDomain("point outside the scene domain");
    }

    double sign_of(int region) const {
        return region_labels[static_cast<std::size_t>(region)] == Interaction::strong ? -1.0 : 1.0;
    }

    // Region index = number of surfaces containing x.
    int region_index_raw(const Vec3& x) const {
        int idx = 0;
        for (const auto& s : surfaces)
            if (s.sdf(x) < 0.0) ++idx;
        return idx;
    }

    // Unified SDF: sign from the region's interaction label, magnitude the
    // distance to the nearest of the region's one or two bounding surfaces.
    double ulos_sdf(const Vec3& x) const {
        check_in_domain(x);
        const int n = n_surfaces();
        int region = 0;
        double dist = std::numeric_limits<double>::infinity();
        for (int k = 0; k < n; ++k) {
            const double f = surfaces[static_cast<std::size_t>(k)].sdf(x);
            if (f < 0.0) ++region;
        }
        // Bounding surfaces of region i are M_i (outer, if i >= 1) and
        // M_{i+1} (inner, if i < n).
        if (region >= 1) dist = std::min(dist, std::abs(surfaces[static_cast<std::size_t>(region - 1)].sdf(x)));
        if (region < n) dist = std::min(dist, std::abs(surfaces[static_cast<std::size_t>(region)].sdf(x)));
        return sign_of(region) * dist;
    }

    // Conventional SDF of the outermost surface; the stand-in for a
    // vision-pretrained prior. Equals ulos_sdf on R_{0,1}.
    double los_sdf(const Vec3& x) const {
        check_in_domain(x);
        return surfaces.front().sdf(x);
    }

    RegionInfo region_of(const Vec3& x) const {
        check_in_domain(x);
        for (const auto& s : surfaces)
            if (std::abs(s.sdf(x)) < kEpsBoundary)
                throw OnBoundary("point is on a layer boundary");
        const int idx = region_index_raw(x);
        return {idx, region_labels[static_cast<std::size_t>(idx)]};
    }

    int nearest_surface(const Vec3& x) const {
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int k = 0; k < n_surfaces(); ++k) {
            const double d = std::abs(surfaces[static_cast<std::size_t>(k)].sdf(x));
            if (d < bd) {
                bd = d;
                best = k;
            }
        }
        return best;
    }

    // Unit normal of the nearest bounding surface, oriented toward the
    // weak-interaction side.
    Vec3 surface_normal(const Vec3& x) const {
        check_in_domain(x);
        if (std::abs(ulos_sdf(x)) >= kEpsSurface)
            throw NotNearSurface("surface_normal: point is not within eps_surface of a boundary");
        return oriented_normal(x);
    }

    // Same orientation rule without the proximity precondition; this is the
    // (unit) gradient of ulos_sdf away from boundaries.
    Vec3 oriented_normal(const Vec3& x) const {
        const int k = nearest_surface(x);
        const Surface& s = surfaces[static_cast<std::size_t>(k)];
        const Vec3 n_out = s.outward_normal(x);
        const Interaction outside = region_labels[static_cast<std::size_t>(k)];
        const Interaction inside = region_labels[static_cast<std::size_t>(k + 1)];
        if (outside == Interaction::weak) return n_out;
        if (inside == Interaction::weak) return -n_out;
        return n_out;
    }

    // Bounding box of the hidden object region (innermost surface plus a
    // pad), used as the default isosurface crop.
    Aabb object_crop_box(double pad = 0.02) const {
        Aabb b = surfaces.back().bbox();
        b.lo -= Vec3::Constant(pad);
        b.hi += Vec3::Constant(pad);
        b.lo = b.lo.cwiseMax(domain.lo);
        b.hi = b.hi.cwiseMin(domain.hi);
        return b;
    }

    // Random uniform-by-area points on surface k (0-based).
    std::vector<Vec3> sample_surface(int k, int n, Rng& rng) const {
        std::vector<Vec3> out;
        out.reserve(static_cast<std::size_t>(n));
        surfaces[static_cast<std::size_t>(k)].area_samples(n, rng, out);
        return out;
    }
};

// ---------------------------------------------------------------------------
// PLY import (ASCII, positions only)

inline std::shared_ptr<TriMesh> load_ply(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open PLY file: " + path);
    std::string line;
    std::getline(is, line);
    if (line.rfind("ply", 0) != 0) throw IoError("not a PLY file: " + path);

    int n_vertex = 0, n_face = 0;
    int x_idx = -1, y_idx = -1, z_idx = -1, vprop = 0;
    bool in_vertex = false;
    while (std::getline(is, line)) {
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt != "ascii") throw IoError("only ASCII PLY is supported: " + path);
        } else if (tok == "element") {
            std::string name;
            int count;
            ss >> name >> count;
            if (name == "vertex") {
                n_vertex = count;
                in_vertex = true;
            } else {
                if (name == "face") n_face = count;
                in_vertex = false;
            }
        } else if (tok == "property" && in_vertex) {
            std::string type, name;
            ss >> type >> name;
            if (name == "x") x_idx = vprop;
            if (name == "y") y_idx = vprop;
            if (name == "z") z_idx = vprop;
            ++vprop;
        } else if (tok == "end_header") {
            break;
        }
    }
    if (n_vertex <= 0 || n_face <= 0 || x_idx < 0 || y_idx < 0 || z_idx < 0)
        throw IoError("PLY missing vertex/face data: " + path);

    auto mesh = std::make_shared<TriMesh>();
    mesh->vertices.reserve(static_cast<std::size_t>(n_vertex));
    std::vector<double> props(static_cast<std::size_t>(vprop));
    for (int i = 0; i < n_vertex; ++i) {
        for (int p = 0; p < vprop; ++p)
            if (!(is >> props[static_cast<std::size_t>(p)])) throw IoError("PLY vertex read failed");
        mesh->vertices.emplace_back(props[static_cast<std::size_t>(x_idx)],
                                    props[static_cast<std::size_t>(y_idx)],
                                    props[static_cast<std::size_t>(z_idx)]);
    }
    for (int i = 0; i < n_face; ++i) {
        int cnt;
        if (!(is >> cnt) || cnt < 3) throw IoError("PLY face read failed");
        std::vector<int> idx(static_cast<std::size_t>(cnt));
        for (int j = 0; j < cnt; ++j) is >> idx[static_cast<std::size_t>(j)];
        for (int j = 2; j < cnt; ++j)  // fan triangulation
            mesh->tris.push_back({idx[0], idx[static_cast<std::size_t>(j - 1)], idx[static_cast<std::size_t>(j)]});
    }
    mesh->finalize();
    return mesh;
}

inline void save_ply(const std::string& path, const std::vector<Vec3>& vertices,
                     const std::vector<std::array<int, 3>>& tris = {}) {
    auto os = open_out(path);
    os << "ply\nformat ascii 1.0\nelement vertex " << vertices.size()
       << "\nproperty float x\nproperty float y\nproperty float z\nelement face " << tris.size()
       << "\nproperty list uchar int vertex_indices\nend_header\n";
    for (const auto& v : vertices) os << v.x() << " " << v.y() << " " << v.z() << "\n";
    for (const auto& t : tris) os << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
}

// ---------------------------------------------------------------------------
// Scene construction from a JSON description.
//
// {
//   "domain": {"min": [..], "max": [..]},            (optional)
//   "layers": [
//     {"kind": "box_shell", "center": [..], "half_extents": [..],
//      "thickness": 0.01, "interaction": "strong"},
//     {"kind": "sphere", "center": [..], "radius": 0.05},
//     {"kind": "box",    "center": [..], "half_extents": [..]},
//     {"kind": "mesh",   "path": "obj.ply", "center": [..], "scale": 1.0}
//   ]
// }
//
// A box_shell expands into two nested surfaces (outer and inner wall); the
// wall region takes the layer's interaction, the cavity behind it is air.
// Mesh layers are only accepted as the innermost object.

inline Vec3 vec3_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-element array");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline ULoSScene build_scene(const nlohmann::json& cfg, const std::string& base_dir = ".") {
    if (!cfg.contains("layers") || !cfg["layers"].is_array() || cfg["layers"].empty())
        throw ConfigError("scene: need at least one layer");

    ULoSScene scene;
    scene.region_labels.push_back(Interaction::weak);  // R_{0,1} is air

    const auto& layers = cfg["layers"];
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const auto& layer = layers[li];
        const std::string kind = layer.value("kind", "");
        const Interaction inter =
            interaction_from_string(layer.value("interaction", std::string("strong")));
        const Vec3 center = layer.contains("center") ? vec3_from_json(layer["center"]) : Vec3::Zero();
        const bool last = li + 1 == layers.size();

        if (kind == "sphere") {
            const double r = layer.value("radius", 0.0);
            if (!(r > 0.0)) throw InvalidPrimitive("sphere: radius must be positive");
            Surface s;
            s.kind = Surface::Kind::sphere;
            s.center = center;
            s.radius = r;
            scene.surfaces.push_back(s);
        } else if (kind == "box") {
            const Vec3 h = vec3_from_json(layer.at("half_extents"));
            if (!(h.minCoeff() > 0.0)) throw InvalidPrimitive("box: half extents must be positive");
            Surface s;
            s.kind = Surface::Kind::box;
            s.center = center;
            s.half_extents = h;
            scene.surfaces.push_back(s);
        } else if (kind == "box_shell") {
            const Vec3 h = vec3_from_json(layer.at("half_extents"));
            const double t = layer.value("thickness", 0.0);
            if (!(h.minCoeff() > 0.0)) throw InvalidPrimitive("box_shell: half extents must be positive");
            if (!(t > 0.0) || t >= h.minCoeff())
                throw InvalidPrimitive("box_shell: thickness must lie in (0, min half extent)");
            Surface outer, inner;
            outer.kind = inner.kind = Surface::Kind::box;
            outer.center = inner.center = center;
            outer.half_extents = h;
            inner.half_extents = h - Vec3::Constant(t);
            scene.surfaces.push_back(outer);
            scene.region_labels.push_back(inter);               // wall material
            scene.surfaces.push_back(inner);
            scene.region_labels.push_back(Interaction::weak);   // cavity air
            continue;
        } else if (kind == "mesh") {
            if (!last) throw ConfigError("mesh layers are only supported as the innermost object");
            const std::string rel = layer.at("path").get<std::string>();
            const std::string path = rel.front() == '/' ? rel : base_dir + "/" + rel;
            auto mesh = load_ply(path);
            const double scale = layer.value("scale", 1.0);
            if (scale != 1.0) {
                auto scaled = std::make_shared<TriMesh>(*mesh);
                for (auto& v : scaled->vertices) v *= scale;
                scaled->finalize();
                mesh = scaled;
            }
            Surface s;
            s.kind = Surface::Kind::mesh;
            s.center = center;
            s.mesh = mesh;
            scene.surfaces.push_back(s);
        } else {
            throw ConfigError("scene: unknown layer kind '" + kind + "'");
        }

        // Region enclosed by a solid surface: the material itself when it is
        // the innermost layer; an air gap toward the next layer when marked
        // hollow. Box shells handled above (wall + cavity).
        const bool hollow = layer.value("hollow", false);
        scene.region_labels.push_back(!last && hollow ? Interaction::weak : inter);
    }

    // Domain box: explicit, or the outermost bbox grown by 60 %.
    if (cfg.contains("domain")) {
        scene.domain.lo = vec3_from_json(cfg["domain"]["min"]);
        scene.domain.hi = vec3_from_json(cfg["domain"]["max"]);
    } else {
        const Aabb b = scene.surfaces.front().bbox();
        const Vec3 pad = 0.6 * b.half_extent().maxCoeff() * Vec3::Ones();
        scene.domain = {b.lo - pad, b.hi + pad};
    }

    // Verify strict nesting by sampling: every covering sample of surface
    // k+1 must be strictly inside surface k, and surface 1 inside the domain.
    {
        std::vector<Vec3> samples;
        scene.surfaces.front().coverage_samples(samples);
        for (const auto& p : samples)
            if (!scene.domain.contains(p))
                throw NestingViolation("outermost layer exceeds the domain box");
        for (std::size_t k = 0; k + 1 < scene.surfaces.size(); ++k) {
            samples.clear();
            scene.surfaces[k + 1].coverage_samples(samples);
            for (const auto& p : samples)
                if (!(scene.surfaces[k].sdf(p) < 0.0))
                    throw NestingViolation("layer " + std::to_string(k + 2) +
                                           " is not strictly inside layer " + std::to_string(k + 1));
        }
    }
    return scene;
}

inline ULoSScene load_scene_file(const std::string& path) {
    auto is = open_in(path);
    nlohmann::json j;
    is >> j;
    const auto slash = path.find_last_of('/');
    return build_scene(j, slash == std::string::npos ? std::string(".") : path.substr(0, slash));
}

}  // namespace ulos
