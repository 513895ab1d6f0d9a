#pragma once
// Reference triangle pipeline used by the software backend.
//
// Per triangle: clip-space transform, clipping against all six frustum
// planes, perspective divide, viewport mapping into a W x H tile, back-face
// culling, then scan conversion with the top-left fill rule at pixel centres
// (i + 0.5, j + 0.5), a strict less-than depth test and flat shading.
//
// Coordinates are always computed in tile-local pixels and only then shifted
// by an integer tile offset, so a scene rendered alone and the same scene
// rendered inside an atlas produce identical bytes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "batchrender/batch_state.hpp"
#include "batchrender/math.hpp"
#include "batchrender/mesh.hpp"
#include "batchrender/renderer.hpp"
#include "batchrender/tiling.hpp"

namespace batchrender {

// Round half away from zero of 255 * clamp(v, 0, 1).
inline std::uint8_t quantize_unit(real v) {
  const real c = std::clamp(v, real{0}, real{1});
  return static_cast<std::uint8_t>(std::lround(255.0 * c));
}

inline std::array<std::uint8_t, 4> quantize_rgba(const Rgba& c) {
  return {quantize_unit(c.r), quantize_unit(c.g), quantize_unit(c.b), quantize_unit(c.a)};
}

// Colour (RGBA8) plus 32-bit depth, top-left origin.
struct RenderTarget {
  Image color;
  std::vector<float> depth;

  int width() const { return color.width; }
  int height() const { return color.height; }

  // Reuses storage when the size is unchanged.
  void reset(int w, int h, const std::array<std::uint8_t, 4>& clear) {
    if (color.width != w || color.height != h) color = Image(w, h);
    // Fill the first row, then replicate it.
    std::uint8_t* px = color.rgba.data();
    const std::size_t row = static_cast<std::size_t>(w) * 4;
    for (std::size_t p = 0; p < row; p += 4) {
      px[p] = clear[0];
      px[p + 1] = clear[1];
      px[p + 2] = clear[2];
      px[p + 3] = clear[3];
    }
    for (int y = 1; y < h; ++y) std::memcpy(px + static_cast<std::size_t>(y) * row, px, row);
    depth.assign(static_cast<std::size_t>(w) * h, 1.0f);
  }
};

// Tile-local viewport: a W x H frame written at an integer offset. Writes are
// scissored to the tile.
struct TileViewport {
  int width = 0;
  int height = 0;
  int offset_x = 0;
  int offset_y = 0;
};

// Shaded colour of one triangle from its world-space normal.
inline std::array<std::uint8_t, 4> shade_flat(const Rgba& color, const Vec3& world_normal, const ShadingConfig& shading) {
  real intensity = 1;
  if (shading.mode == ShadingMode::Lambert)
    intensity = shading.ambient + shading.diffuse * std::max(real{0}, dot(world_normal, shading.light_dir));
  return {quantize_unit(color.r * intensity), quantize_unit(color.g * intensity), quantize_unit(color.b * intensity),
          quantize_unit(color.a)};
}

class TrianglePipeline {
 public:
  struct Instance {
    const MeshAsset* mesh = nullptr;
    Mat4 mvp;
    Mat3 normal_matrix;
    Rgba color;
    bool cull_back_faces = true;
  };

  void draw(RenderTarget& target, const TileViewport& vp, const Instance& inst, const ShadingConfig& shading) {
    const auto& verts = inst.mesh->vertices();
    clip_.resize(verts.size());
    for (std::size_t k = 0; k < verts.size(); ++k) {
      const Vec3& p = verts[k].position;
      clip_[k] = inst.mvp * Vec4{p.x, p.y, p.z, 1};
    }
    for (const Triangle& tri : inst.mesh->triangles()) {
      const Vec3& p0 = verts[tri[0]].position;
      const Vec3 n = normalize(inst.normal_matrix * cross(verts[tri[1]].position - p0, verts[tri[2]].position - p0));
      draw_triangle(target, vp, {clip_[tri[0]], clip_[tri[1]], clip_[tri[2]]}, shade_flat(inst.color, n, shading),
                    inst.cull_back_faces);
    }
  }

 private:
  struct ScreenVertex {
    real x, y, z;
  };

  static real plane_distance(const Vec4& v, int plane) {
    switch (plane) {
      case 0: return v.w + v.x;
      case 1: return v.w - v.x;
      case 2: return v.w + v.y;
      case 3: return v.w - v.y;
      case 4: return v.w + v.z;
      default: return v.w - v.z;
    }
  }

  // Sutherland-Hodgman in homogeneous clip space. Result stays in poly_.
  void clip_polygon() {
    for (int plane = 0; plane < 6; ++plane) {
      scratch_.clear();
      const std::size_t n = poly_.size();
      for (std::size_t k = 0; k < n; ++k) {
        const Vec4& a = poly_[k];
        const Vec4& b = poly_[(k + 1) % n];
        const real da = plane_distance(a, plane);
        const real db = plane_distance(b, plane);
        if (da >= 0) scratch_.push_back(a);
        if ((da >= 0) != (db >= 0)) {
          const real t = da / (da - db);
          scratch_.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.z + t * (b.z - a.z),
                              a.w + t * (b.w - a.w)});
        }
      }
      poly_.swap(scratch_);
      if (poly_.size() < 3) return;
    }
  }

  void draw_triangle(RenderTarget& target, const TileViewport& vp, const std::array<Vec4, 3>& clip,
                     const std::array<std::uint8_t, 4>& rgba, bool cull) {
    poly_.assign(clip.begin(), clip.end());
    bool inside = true;
    for (int plane = 0; plane < 6 && inside; ++plane)
      for (const Vec4& v : clip) inside = inside && plane_distance(v, plane) >= 0;
    if (!inside) clip_polygon();
    if (poly_.size() < 3) return;

    screen_.clear();
    for (const Vec4& v : poly_) {
      if (!(v.w > 0)) return;
      const real inv_w = 1.0 / v.w;
      screen_.push_back({(v.x * inv_w + 1) * 0.5 * vp.width, (1 - v.y * inv_w) * 0.5 * vp.height,
                         (v.z * inv_w + 1) * 0.5});
    }

    // Shoelace area in y-down pixel space; front faces (counter-clockwise on
    // screen) come out negative.
    real area = 0;
    for (std::size_t k = 0; k < screen_.size(); ++k) {
      const ScreenVertex& a = screen_[k];
      const ScreenVertex& b = screen_[(k + 1) % screen_.size()];
      area += a.x * b.y - b.x * a.y;
    }
    if (area == 0 || (cull && area > 0)) return;

    for (std::size_t k = 1; k + 1 < screen_.size(); ++k)
      raster(target, vp, screen_[0], screen_[k], screen_[k + 1], rgba);
  }

  static real edge(const ScreenVertex& p, const ScreenVertex& q, real x, real y) {
    return (q.x - p.x) * (y - p.y) - (q.y - p.y) * (x - p.x);
  }

  // Edges of a clockwise-on-screen triangle: top edges run exactly
  // horizontally to the right, left edges run upwards.
  static bool top_left(const ScreenVertex& p, const ScreenVertex& q) {
    const real dx = q.x - p.x, dy = q.y - p.y;
    return (dy == 0 && dx > 0) || dy < 0;
  }

  static void raster(RenderTarget& target, const TileViewport& vp, ScreenVertex a, ScreenVertex b, ScreenVertex c,
                     const std::array<std::uint8_t, 4>& rgba) {
    real area = edge(a, b, c.x, c.y);
    if (area == 0) return;
    if (area < 0) {
      std::swap(b, c);
      area = -area;
    }
    const real min_x = std::min({a.x, b.x, c.x}), max_x = std::max({a.x, b.x, c.x});
    const real min_y = std::min({a.y, b.y, c.y}), max_y = std::max({a.y, b.y, c.y});
    const int x_begin = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
    const int x_end = std::min(vp.width - 1, static_cast<int>(std::floor(max_x - 0.5)));
    const int y_begin = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
    const int y_end = std::min(vp.height - 1, static_cast<int>(std::floor(max_y - 0.5)));

    const bool tl_ab = top_left(a, b), tl_bc = top_left(b, c), tl_ca = top_left(c, a);
    const real inv_area = 1.0 / area;
    for (int y = y_begin; y <= y_end; ++y) {
      const real py = y + 0.5;
      const std::size_t row = static_cast<std::size_t>(vp.offset_y + y) * target.width();
      for (int x = x_begin; x <= x_end; ++x) {
        const real px = x + 0.5;
        const real e_bc = edge(b, c, px, py);
        const real e_ca = edge(c, a, px, py);
        const real e_ab = edge(a, b, px, py);
        if (e_bc < 0 || e_ca < 0 || e_ab < 0) continue;
        if ((e_bc == 0 && !tl_bc) || (e_ca == 0 && !tl_ca) || (e_ab == 0 && !tl_ab)) continue;
        const real z = (e_bc * a.z + e_ca * b.z + e_ab * c.z) * inv_area;
        const auto depth = static_cast<float>(z);
        const std::size_t idx = row + static_cast<std::size_t>(vp.offset_x + x);
        if (!(depth < target.depth[idx])) continue;
        target.depth[idx] = depth;
        std::uint8_t* out = target.color.rgba.data() + idx * 4;
        out[0] = rgba[0];
        out[1] = rgba[1];
        out[2] = rgba[2];
        out[3] = rgba[3];
      }
    }
  }

  std::vector<Vec4> clip_;
  std::vector<Vec4> poly_;
  std::vector<Vec4> scratch_;
  std::vector<ScreenVertex> screen_;
};

}  // namespace batchrender
