#pragma once
// Transform algebra shared by every backend.
//
// Conventions (fixed for the whole library):
//   * Z-up, right-handed world.
//   * Orientation is heading/pitch/roll in degrees, R = Rz(h) * Rx(p) * Ry(r).
//   * Mat4 is column-major: column k occupies elements 4k..4k+3. Packed
//     matrix buffers use the same order.
//   * Vectors are columns multiplied on the right.
//   * Projection targets NDC x, y, z in [-1, 1], view space looks down -Z.

#include <array>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "batchrender/error.hpp"

namespace batchrender {

using real = double;

struct Vec3 {
  real x = 0, y = 0, z = 0;

  constexpr Vec3() = default;
  constexpr Vec3(real x_, real y_, real z_) : x(x_), y(y_), z(z_) {}

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(real s) const { return {x * s, y * s, z * s}; }
  constexpr bool operator==(const Vec3&) const = default;

  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

constexpr real dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline real length(const Vec3& v) { return std::sqrt(dot(v, v)); }

// Returns the zero vector for zero-length input.
inline Vec3 normalize(const Vec3& v) {
  const real len = length(v);
  return len > 0 ? v * (1.0 / len) : Vec3{};
}

struct Vec4 {
  real x = 0, y = 0, z = 0, w = 0;
  constexpr bool operator==(const Vec4&) const = default;
};

struct Mat4 {
  std::array<real, 16> m{};

  static constexpr Mat4 identity() {
    Mat4 r;
    r.m[0] = r.m[5] = r.m[10] = r.m[15] = 1;
    return r;
  }

  constexpr real& operator()(int row, int col) { return m[col * 4 + row]; }
  constexpr real operator()(int row, int col) const { return m[col * 4 + row]; }

  constexpr Mat4 operator*(const Mat4& o) const {
    Mat4 r;
    for (int c = 0; c < 4; ++c) {
      for (int row = 0; row < 4; ++row) {
        real acc = 0;
        for (int k = 0; k < 4; ++k) acc += (*this)(row, k) * o(k, c);
        r(row, c) = acc;
      }
    }
    return r;
  }

  constexpr Vec4 operator*(const Vec4& v) const {
    return {m[0] * v.x + m[4] * v.y + m[8] * v.z + m[12] * v.w,
            m[1] * v.x + m[5] * v.y + m[9] * v.z + m[13] * v.w,
            m[2] * v.x + m[6] * v.y + m[10] * v.z + m[14] * v.w,
            m[3] * v.x + m[7] * v.y + m[11] * v.z + m[15] * v.w};
  }

  // Affine point transform (w = 1, no divide).
  constexpr Vec3 transform_point(const Vec3& p) const {
    const Vec4 r = (*this) * Vec4{p.x, p.y, p.z, 1};
    return {r.x, r.y, r.z};
  }

  constexpr Mat4 transposed() const {
    Mat4 r;
    for (int c = 0; c < 4; ++c)
      for (int row = 0; row < 4; ++row) r(row, c) = (*this)(c, row);
    return r;
  }

  bool finite() const {
    for (real v : m)
      if (!std::isfinite(v)) return false;
    return true;
  }

  constexpr bool operator==(const Mat4&) const = default;
};

// Row-major 3x3, used only for normal transforms.
struct Mat3 {
  std::array<real, 9> m{};
  constexpr real operator()(int row, int col) const { return m[row * 3 + col]; }
  constexpr Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
};

struct CameraPose {
  Vec3 position;
  Vec3 hpr;  // degrees
  constexpr bool operator==(const CameraPose&) const = default;
};

struct ProjectionParams {
  real fov_y_deg = 60;
  real aspect = 1;
  real near = 0.1;
  real far = 1000;

  void validate() const {
    if (!(fov_y_deg > 0 && fov_y_deg < 180))
      throw ValueError(fmt::format("fov_y_deg must lie in (0, 180), got {}", fov_y_deg));
    if (!(aspect > 0) || !std::isfinite(aspect))
      throw ValueError(fmt::format("aspect must be > 0, got {}", aspect));
    if (!(near > 0) || !std::isfinite(near))
      throw ValueError(fmt::format("near must be > 0, got {}", near));
    if (!(far > near) || !std::isfinite(far))
      throw ValueError(fmt::format("far must be > near ({}), got {}", near, far));
  }

  constexpr bool operator==(const ProjectionParams&) const = default;
};

// Linear clip-space adjustment squeezing a scene's NDC square into its tile.
struct ClipRemap {
  real scale_x = 1, scale_y = 1;
  real offset_x = 0, offset_y = 0;
  constexpr bool operator==(const ClipRemap&) const = default;
};

constexpr real deg_to_rad(real deg) { return deg * (std::numbers::pi_v<real> / 180.0); }

namespace detail {

inline void require_finite(const Vec3& v, const char* what) {
  if (!v.finite())
    throw ValueError(fmt::format("{} must be finite, got ({}, {}, {})", what, v.x, v.y, v.z));
}

}  // namespace detail

inline Mat4 rotation_from_hpr(const Vec3& hpr) {
  detail::require_finite(hpr, "hpr");
  const real ch = std::cos(deg_to_rad(hpr.x)), sh = std::sin(deg_to_rad(hpr.x));
  const real cp = std::cos(deg_to_rad(hpr.y)), sp = std::sin(deg_to_rad(hpr.y));
  const real cr = std::cos(deg_to_rad(hpr.z)), sr = std::sin(deg_to_rad(hpr.z));

  // Rz(h) * Rx(p) * Ry(r), expanded.
  Mat4 r = Mat4::identity();
  r(0, 0) = ch * cr - sh * sp * sr;
  r(0, 1) = -sh * cp;
  r(0, 2) = ch * sr + sh * sp * cr;
  r(1, 0) = sh * cr + ch * sp * sr;
  r(1, 1) = ch * cp;
  r(1, 2) = sh * sr - ch * sp * cr;
  r(2, 0) = -cp * sr;
  r(2, 1) = sp;
  r(2, 2) = cp * cr;
  return r;
}

inline Mat4 compose_trs(const Vec3& position, const Vec3& hpr, const Vec3& scale) {
  detail::require_finite(position, "position");
  detail::require_finite(scale, "scale");
  if (!(scale.x > 0 && scale.y > 0 && scale.z > 0))
    throw ValueError(
        fmt::format("scale components must be > 0, got ({}, {}, {})", scale.x, scale.y, scale.z));
  Mat4 m = rotation_from_hpr(hpr);
  for (int row = 0; row < 3; ++row) {
    m(row, 0) *= scale.x;
    m(row, 1) *= scale.y;
    m(row, 2) *= scale.z;
  }
  m(0, 3) = position.x;
  m(1, 3) = position.y;
  m(2, 3) = position.z;
  return m;
}

inline Mat4 compose_trs(const Vec3& position, const Vec3& hpr, real scale) {
  return compose_trs(position, hpr, Vec3{scale, scale, scale});
}

// World (Z-up) to view basis: view_x = world_x, view_y = world_z,
// view_z = -world_y.
constexpr Mat4 world_to_view_basis() {
  Mat4 b;
  b(0, 0) = 1;
  b(1, 2) = 1;
  b(2, 1) = -1;
  b(3, 3) = 1;
  return b;
}

inline Mat4 view_from_camera(const CameraPose& pose) {
  detail::require_finite(pose.position, "camera position");
  const Mat4 rot_t = rotation_from_hpr(pose.hpr).transposed();
  Mat4 inv_t = Mat4::identity();
  inv_t(0, 3) = -pose.position.x;
  inv_t(1, 3) = -pose.position.y;
  inv_t(2, 3) = -pose.position.z;
  return world_to_view_basis() * rot_t * inv_t;
}

inline Mat4 perspective_projection(const ProjectionParams& p) {
  p.validate();
  const real f = 1.0 / std::tan(deg_to_rad(p.fov_y_deg) / 2);
  Mat4 r;
  r(0, 0) = f / p.aspect;
  r(1, 1) = f;
  r(2, 2) = -(p.far + p.near) / (p.far - p.near);
  r(2, 3) = -2 * p.far * p.near / (p.far - p.near);
  r(3, 2) = -1;
  return r;
}

// Tile (row, col) of a rows x cols grid; row 0 is the top of the atlas.
inline ClipRemap clip_remap_for_tile(int rows, int cols, int row, int col) {
  if (rows < 1 || cols < 1 || row < 0 || row >= rows || col < 0 || col >= cols)
    throw LayoutError(fmt::format("tile ({}, {}) outside a {}x{} grid", row, col, rows, cols));
  ClipRemap r;
  r.scale_x = 1.0 / cols;
  r.scale_y = 1.0 / rows;
  r.offset_x = -1.0 + (2.0 * col + 1.0) / cols;
  r.offset_y = 1.0 - (2.0 * row + 1.0) / rows;
  return r;
}

constexpr Vec4 apply_clip_remap(const Vec4& clip, const ClipRemap& remap) {
  return {clip.x * remap.scale_x + clip.w * remap.offset_x,
          clip.y * remap.scale_y + clip.w * remap.offset_y, clip.z, clip.w};
}

// Inverse-transpose of the upper 3x3 of `model`. Falls back to zeros for a
// singular block (cannot happen for TRS with positive scale).
inline Mat3 normal_matrix(const Mat4& model) {
  const real a = model(0, 0), b = model(0, 1), c = model(0, 2);
  const real d = model(1, 0), e = model(1, 1), f = model(1, 2);
  const real g = model(2, 0), h = model(2, 1), i = model(2, 2);
  const real co00 = e * i - f * h, co01 = -(d * i - f * g), co02 = d * h - e * g;
  const real co10 = -(b * i - c * h), co11 = a * i - c * g, co12 = -(a * h - b * g);
  const real co20 = b * f - c * e, co21 = -(a * f - c * d), co22 = a * e - b * d;
  const real det = a * co00 + b * co01 + c * co02;
  if (det == 0) return {};
  const real inv = 1.0 / det;
  // inverse = adj / det with adj = cofactor^T, so inverse^T = cofactor / det.
  return Mat3{{co00 * inv, co01 * inv, co02 * inv, co10 * inv, co11 * inv, co12 * inv, co20 * inv,
               co21 * inv, co22 * inv}};
}

}  // namespace batchrender
