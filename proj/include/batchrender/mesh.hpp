#pragma once
// Immutable triangle meshes: built-in primitives and a small OBJ reader.
//
// All primitives are centred on the origin with unit extent and outward
// counter-clockwise winding, so scale tensors map directly to world size.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "batchrender/error.hpp"
#include "batchrender/math.hpp"

namespace batchrender {

struct MeshVertex {
  Vec3 position;
  Vec3 normal;
};

using Triangle = std::array<std::uint32_t, 3>;

class MeshAsset {
 public:
  MeshAsset(std::string name, std::vector<MeshVertex> vertices, std::vector<Triangle> triangles)
      : name_(std::move(name)), vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
    validate();
  }

  const std::string& name() const { return name_; }
  const std::vector<MeshVertex>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }

 private:
  void validate() const {
    if (triangles_.empty()) throw ValueError(fmt::format("mesh '{}' has no triangles", name_));
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
      for (std::uint32_t idx : triangles_[t]) {
        if (idx >= vertices_.size())
          throw ValueError(fmt::format("mesh '{}': triangle {} references vertex {} of {}", name_,
                                       t, idx, vertices_.size()));
      }
    }
    for (std::size_t v = 0; v < vertices_.size(); ++v) {
      const auto& vert = vertices_[v];
      if (!vert.position.finite() || !vert.normal.finite())
        throw ValueError(fmt::format("mesh '{}': vertex {} is not finite", name_, v));
      if (std::abs(length(vert.normal) - 1.0) > 1e-3)
        throw ValueError(fmt::format("mesh '{}': normal of vertex {} is not unit length", name_, v));
    }
  }

  std::string name_;
  std::vector<MeshVertex> vertices_;
  std::vector<Triangle> triangles_;
};

using MeshPtr = std::shared_ptr<const MeshAsset>;

namespace mesh {

namespace detail {

// Appends a planar quad a-b-c-d (counter-clockwise seen from the normal side).
inline void add_quad(std::vector<MeshVertex>& verts, std::vector<Triangle>& tris, const Vec3& a,
                     const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& n) {
  const auto base = static_cast<std::uint32_t>(verts.size());
  verts.push_back({a, n});
  verts.push_back({b, n});
  verts.push_back({c, n});
  verts.push_back({d, n});
  tris.push_back({base, base + 1, base + 2});
  tris.push_back({base, base + 2, base + 3});
}

}  // namespace detail

// Axis-aligned cube of side 1, flat face normals.
inline MeshPtr unit_cube() {
  std::vector<MeshVertex> v;
  std::vector<Triangle> t;
  const real h = 0.5;
  using detail::add_quad;
  add_quad(v, t, {h, -h, -h}, {h, h, -h}, {h, h, h}, {h, -h, h}, {1, 0, 0});
  add_quad(v, t, {-h, h, -h}, {-h, -h, -h}, {-h, -h, h}, {-h, h, h}, {-1, 0, 0});
  add_quad(v, t, {h, h, -h}, {-h, h, -h}, {-h, h, h}, {h, h, h}, {0, 1, 0});
  add_quad(v, t, {-h, -h, -h}, {h, -h, -h}, {h, -h, h}, {-h, -h, h}, {0, -1, 0});
  add_quad(v, t, {-h, -h, h}, {h, -h, h}, {h, h, h}, {-h, h, h}, {0, 0, 1});
  add_quad(v, t, {-h, h, -h}, {h, h, -h}, {h, -h, -h}, {-h, -h, -h}, {0, 0, -1});
  return std::make_shared<const MeshAsset>("cube", std::move(v), std::move(t));
}

// Unit square in the XY plane at z = 0, facing +Z.
inline MeshPtr plane() {
  std::vector<MeshVertex> v;
  std::vector<Triangle> t;
  detail::add_quad(v, t, {-0.5, -0.5, 0}, {0.5, -0.5, 0}, {0.5, 0.5, 0}, {-0.5, 0.5, 0}, {0, 0, 1});
  return std::make_shared<const MeshAsset>("plane", std::move(v), std::move(t));
}

// Sphere of radius 0.5. `segments` around Z, `rings` from pole to pole.
inline MeshPtr uv_sphere(int segments = 16, int rings = 8) {
  if (segments < 3 || rings < 2)
    throw ValueError(fmt::format("uv_sphere needs segments >= 3 and rings >= 2, got {} and {}",
                                 segments, rings));
  std::vector<MeshVertex> v;
  std::vector<Triangle> t;
  const real pi = std::numbers::pi_v<real>;
  for (int ring = 0; ring <= rings; ++ring) {
    const real theta = pi * ring / rings;  // from +Z down to -Z
    for (int seg = 0; seg <= segments; ++seg) {
      const real phi = 2 * pi * seg / segments;
      const Vec3 n{std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
      v.push_back({n * 0.5, normalize(n)});
    }
  }
  const auto stride = static_cast<std::uint32_t>(segments + 1);
  for (int ring = 0; ring < rings; ++ring) {
    for (int seg = 0; seg < segments; ++seg) {
      const std::uint32_t a = ring * stride + seg;
      const std::uint32_t b = a + stride;
      // Skip the degenerate triangle at each pole.
      if (ring != 0) t.push_back({a, b, a + 1});
      if (ring != rings - 1) t.push_back({a + 1, b, b + 1});
    }
  }
  return std::make_shared<const MeshAsset>("sphere", std::move(v), std::move(t));
}

// Capped cylinder of radius 0.5 along Z, z in [-0.5, 0.5].
inline MeshPtr cylinder(int segments = 16) {
  if (segments < 3) throw ValueError(fmt::format("cylinder needs segments >= 3, got {}", segments));
  std::vector<MeshVertex> v;
  std::vector<Triangle> t;
  const real pi = std::numbers::pi_v<real>;
  auto ring_point = [&](int seg, real z) {
    const real phi = 2 * pi * seg / segments;
    return Vec3{0.5 * std::cos(phi), 0.5 * std::sin(phi), z};
  };
  for (int seg = 0; seg < segments; ++seg) {
    const real mid = 2 * pi * (seg + 0.5) / segments;
    const Vec3 n{std::cos(mid), std::sin(mid), 0};
    detail::add_quad(v, t, ring_point(seg, -0.5), ring_point(seg + 1, -0.5), ring_point(seg + 1, 0.5),
                     ring_point(seg, 0.5), n);
  }
  for (real z : {0.5, -0.5}) {
    const Vec3 n{0, 0, z > 0 ? 1.0 : -1.0};
    const auto centre = static_cast<std::uint32_t>(v.size());
    v.push_back({{0, 0, z}, n});
    for (int seg = 0; seg < segments; ++seg) v.push_back({ring_point(seg, z), n});
    for (int seg = 0; seg < segments; ++seg) {
      const std::uint32_t a = centre + 1 + seg;
      const std::uint32_t b = centre + 1 + (seg + 1) % segments;
      if (z > 0)
        t.push_back({centre, a, b});
      else
        t.push_back({centre, b, a});
    }
  }
  return std::make_shared<const MeshAsset>("cylinder", std::move(v), std::move(t));
}

// Minimal Wavefront OBJ subset: `v`, `vn` and `f` records. Faces may use
// v, v/vt, v//vn or v/vt/vn references (negative indices allowed) and are
// fan-triangulated, so they must be convex. Texture coordinates, groups and
// materials are ignored. Faces without normals get their geometric normal.
inline MeshPtr load_obj(std::istream& in, std::string name = "obj") {
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;
  std::vector<MeshVertex> verts;
  std::vector<Triangle> tris;

  auto resolve = [](long idx, std::size_t count, int line_no, const char* kind) -> std::size_t {
    long resolved = idx > 0 ? idx - 1 : static_cast<long>(count) + idx;
    if (idx == 0 || resolved < 0 || resolved >= static_cast<long>(count))
      throw ValueError(fmt::format("OBJ line {}: {} index {} out of range", line_no, kind, idx));
    return static_cast<std::size_t>(resolved);
  };

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v" || tag == "vn") {
      Vec3 p;
      if (!(ls >> p.x >> p.y >> p.z))
        throw ValueError(fmt::format("OBJ line {}: malformed '{}' record", line_no, tag));
      (tag == "v" ? positions : normals).push_back(p);
    } else if (tag == "f") {
      std::vector<std::pair<std::size_t, long>> corners;  // position, normal (-1 if absent)
      std::string ref;
      while (ls >> ref) {
        const auto s1 = ref.find('/');
        const long vi = std::stol(ref.substr(0, s1));
        long ni = -1;
        if (s1 != std::string::npos) {
          const auto s2 = ref.find('/', s1 + 1);
          if (s2 != std::string::npos && s2 + 1 < ref.size())
            ni = static_cast<long>(resolve(std::stol(ref.substr(s2 + 1)), normals.size(), line_no, "normal"));
        }
        corners.emplace_back(resolve(vi, positions.size(), line_no, "vertex"), ni);
      }
      if (corners.size() < 3)
        throw ValueError(fmt::format("OBJ line {}: face needs at least 3 vertices", line_no));
      const Vec3 geometric = normalize(cross(positions[corners[1].first] - positions[corners[0].first],
                                             positions[corners[2].first] - positions[corners[0].first]));
      const auto base = static_cast<std::uint32_t>(verts.size());
      for (const auto& [pi, ni] : corners) {
        Vec3 n = ni >= 0 ? normalize(normals[static_cast<std::size_t>(ni)]) : geometric;
        if (length(n) == 0) n = {0, 0, 1};
        verts.push_back({positions[pi], n});
      }
      for (std::uint32_t k = 1; k + 1 < corners.size(); ++k) tris.push_back({base, base + k, base + k + 1});
    }
  }
  return std::make_shared<const MeshAsset>(std::move(name), std::move(verts), std::move(tris));
}

inline MeshPtr load_obj_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open OBJ file '{}'", path));
  return load_obj(in, path);
}

}  // namespace mesh
}  // namespace batchrender
