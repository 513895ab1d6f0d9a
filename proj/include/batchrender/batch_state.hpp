#pragma once
// Tensor-shaped state of S parallel scenes.
//
// Each model group owns per-instance tensors whose leading dimensions are
// S x I (unshared) or I (shared across every scene). Tensors are replaced
// wholesale; every successful update bumps a generation counter that the
// backends use to decide when packed matrices must be re-uploaded.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "batchrender/error.hpp"
#include "batchrender/math.hpp"
#include "batchrender/mesh.hpp"
#include "batchrender/tensor.hpp"

namespace batchrender {

struct Rgba {
  real r = 0, g = 0, b = 0, a = 1;
  constexpr bool operator==(const Rgba&) const = default;
};

struct GroupSpec {
  std::string name;
  MeshPtr mesh;
  int instances_per_scene = 1;
  bool shared = false;
  bool cull_back_faces = true;
};

struct BatchSpec {
  int scene_count = 1;
  std::vector<GroupSpec> groups;
  Rgba clear_color{0, 0, 0, 1};
  // Used only for the default projection aspect ratio.
  int frame_width = 64;
  int frame_height = 64;
};

namespace detail {

// Generations are drawn from one process-wide sequence, so two states only
// share a generation when one is an unmodified copy of the other.
inline std::uint64_t next_generation() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

inline void require_finite_tensor(const Tensor& t, const std::string& what) {
  for (std::size_t k = 0; k < t.values.size(); ++k) {
    if (!std::isfinite(t.values[k]))
      throw ValueError(fmt::format("{}: element {} is not finite", what, k));
  }
}

}  // namespace detail

class BatchState {
 public:
  explicit BatchState(const BatchSpec& spec) : scene_count_(spec.scene_count), clear_color_(spec.clear_color) {
    if (spec.scene_count < 1) throw ValueError("scene_count must be ≥ 1");
    if (spec.frame_width < 1 || spec.frame_height < 1)
      throw ValueError(fmt::format("frame size must be positive, got {}x{}", spec.frame_width, spec.frame_height));
    check_color(spec.clear_color, "clear_color");
    groups_.reserve(spec.groups.size());
    for (std::size_t g = 0; g < spec.groups.size(); ++g) {
      const GroupSpec& gs = spec.groups[g];
      const std::string label = gs.name.empty() ? fmt::format("group {}", g) : fmt::format("group '{}'", gs.name);
      if (!gs.mesh) throw ValueError(fmt::format("{}: mesh is missing", label));
      if (gs.instances_per_scene < 1)
        throw ValueError(fmt::format("{}: instances_per_scene must be ≥ 1, got {}", label, gs.instances_per_scene));
      const Shape lead = leading_shape(gs);
      Group group{gs,
                  label,
                  Tensor(with_tail(lead, 3), 0.0),
                  Tensor(with_tail(lead, 3), 0.0),
                  Tensor(with_tail(lead, 1), 1.0),
                  Tensor(with_tail(lead, 4), 1.0)};
      group.transform_generation = detail::next_generation();
      group.color_generation = detail::next_generation();
      groups_.push_back(std::move(group));
    }
    ProjectionParams proj;
    proj.aspect = static_cast<real>(spec.frame_width) / spec.frame_height;
    cameras_.assign(static_cast<std::size_t>(scene_count_), CameraPose{});
    projections_.assign(static_cast<std::size_t>(scene_count_), proj);
    camera_generation_ = detail::next_generation();
  }

  int scene_count() const { return scene_count_; }
  std::size_t group_count() const { return groups_.size(); }
  const GroupSpec& group(std::size_t g) const { return at(g).spec; }
  const Rgba& clear_color() const { return clear_color_; }

  int instances_per_scene(std::size_t g) const { return at(g).spec.instances_per_scene; }
  // Number of stored transforms: I when shared, S*I otherwise.
  std::size_t stored_instances(std::size_t g) const {
    const auto& gr = at(g);
    const auto i = static_cast<std::size_t>(gr.spec.instances_per_scene);
    return gr.spec.shared ? i : i * static_cast<std::size_t>(scene_count_);
  }
  // Row of scene `s`, instance `i` in the group's tensors.
  std::size_t storage_index(std::size_t g, int s, int i) const {
    const auto& gr = at(g);
    return gr.spec.shared ? static_cast<std::size_t>(i)
                          : static_cast<std::size_t>(s) * gr.spec.instances_per_scene + i;
  }

  const Tensor& positions(std::size_t g) const { return at(g).positions; }
  const Tensor& hprs(std::size_t g) const { return at(g).hprs; }
  const Tensor& scales(std::size_t g) const { return at(g).scales; }
  const Tensor& colors(std::size_t g) const { return at(g).colors; }
  const std::vector<CameraPose>& cameras() const { return cameras_; }
  const std::vector<ProjectionParams>& projections() const { return projections_; }

  std::uint64_t transform_generation(std::size_t g) const { return at(g).transform_generation; }
  std::uint64_t color_generation(std::size_t g) const { return at(g).color_generation; }
  std::uint64_t camera_generation() const { return camera_generation_; }

  // Expected tensor shape for a per-instance field with `width` components.
  Shape expected_shape(std::size_t g, std::size_t width) const { return with_tail(leading_shape(at(g).spec), width); }

  void set_instance_transforms(std::size_t g, Tensor positions, Tensor hprs, Tensor scales) {
    Group& gr = at(g);
    check_shape(gr, positions, 3, "positions");
    check_shape(gr, hprs, 3, "hprs");
    const Shape lead = leading_shape(gr.spec);
    if (scales.shape != with_tail(lead, 1) && scales.shape != with_tail(lead, 3))
      throw ShapeError(fmt::format("{} scales: expected shape {} (or {}), got {}", gr.label,
                                   shape_string(with_tail(lead, 1)), shape_string(with_tail(lead, 3)),
                                   shape_string(scales.shape)));
    detail::require_finite_tensor(positions, gr.label + " positions");
    detail::require_finite_tensor(hprs, gr.label + " hprs");
    detail::require_finite_tensor(scales, gr.label + " scales");
    for (std::size_t k = 0; k < scales.values.size(); ++k) {
      if (!(scales.values[k] > 0))
        throw ValueError(fmt::format("{} scales: element {} must be > 0, got {}", gr.label, k, scales.values[k]));
    }
    gr.positions = std::move(positions);
    gr.hprs = std::move(hprs);
    gr.scales = std::move(scales);
    gr.transform_generation = detail::next_generation();
  }

  void set_instance_colors(std::size_t g, Tensor colors) {
    Group& gr = at(g);
    check_shape(gr, colors, 4, "colors");
    detail::require_finite_tensor(colors, gr.label + " colors");
    for (std::size_t k = 0; k < colors.values.size(); ++k) {
      const real c = colors.values[k];
      if (c < 0 || c > 1)
        throw ValueError(fmt::format("{} colors: element {} = {} outside [0, 1]", gr.label, k, c));
    }
    gr.colors = std::move(colors);
    gr.color_generation = detail::next_generation();
  }

  void set_cameras(std::vector<CameraPose> poses, std::vector<ProjectionParams> projections) {
    const auto s = static_cast<std::size_t>(scene_count_);
    if (poses.size() != s || projections.size() != s)
      throw ShapeError(fmt::format("set_cameras: expected {} poses and {} projections, got {} and {}", s, s,
                                   poses.size(), projections.size()));
    for (std::size_t k = 0; k < s; ++k) {
      if (!poses[k].position.finite() || !poses[k].hpr.finite())
        throw ValueError(fmt::format("set_cameras: pose {} is not finite", k));
      projections[k].validate();
    }
    cameras_ = std::move(poses);
    projections_ = std::move(projections);
    camera_generation_ = detail::next_generation();
  }

  // Model matrix of the instance stored at `storage_index`.
  Mat4 model_matrix(std::size_t g, std::size_t storage_index) const {
    const Group& gr = at(g);
    const real* p = gr.positions.row(storage_index);
    const real* h = gr.hprs.row(storage_index);
    const real* sc = gr.scales.row(storage_index);
    const Vec3 scale = gr.scales.row_width() == 1 ? Vec3{sc[0], sc[0], sc[0]} : Vec3{sc[0], sc[1], sc[2]};
    return compose_trs({p[0], p[1], p[2]}, {h[0], h[1], h[2]}, scale);
  }

  Rgba instance_color(std::size_t g, std::size_t storage_index) const {
    const real* c = at(g).colors.row(storage_index);
    return {c[0], c[1], c[2], c[3]};
  }

  Mat4 view_projection(int s) const {
    const auto k = static_cast<std::size_t>(s);
    return perspective_projection(projections_.at(k)) * view_from_camera(cameras_.at(k));
  }

 private:
  struct Group {
    GroupSpec spec;
    std::string label;
    Tensor positions, hprs, scales, colors;
    std::uint64_t transform_generation = 0;
    std::uint64_t color_generation = 0;
  };

  Shape leading_shape(const GroupSpec& gs) const {
    const auto i = static_cast<std::size_t>(gs.instances_per_scene);
    return gs.shared ? Shape{i} : Shape{static_cast<std::size_t>(scene_count_), i};
  }

  static Shape with_tail(Shape s, std::size_t width) {
    s.push_back(width);
    return s;
  }

  void check_shape(const Group& gr, const Tensor& t, std::size_t width, const char* field) const {
    const Shape expected = with_tail(leading_shape(gr.spec), width);
    if (t.shape != expected)
      throw ShapeError(fmt::format("{} {}: expected shape {}, got {}", gr.label, field, shape_string(expected),
                                   shape_string(t.shape)));
    if (t.values.size() != shape_volume(t.shape))
      throw ShapeError(fmt::format("{} {}: tensor holds {} values for shape {}", gr.label, field, t.values.size(),
                                   shape_string(t.shape)));
  }

  static void check_color(const Rgba& c, const char* what) {
    for (real v : {c.r, c.g, c.b, c.a}) {
      if (!(v >= 0 && v <= 1)) throw ValueError(fmt::format("{}: component {} outside [0, 1]", what, v));
    }
  }

  const Group& at(std::size_t g) const {
    if (g >= groups_.size())
      throw ValueError(fmt::format("group id {} out of range ({} groups)", g, groups_.size()));
    return groups_[g];
  }
  Group& at(std::size_t g) { return const_cast<Group&>(std::as_const(*this).at(g)); }

  int scene_count_;
  Rgba clear_color_;
  std::vector<Group> groups_;
  std::vector<CameraPose> cameras_;
  std::vector<ProjectionParams> projections_;
  std::uint64_t camera_generation_ = 0;
};

inline BatchState create_batch(const BatchSpec& spec) { return BatchState(spec); }

// Packed per-instance model matrices (16 column-major reals each, ordered by
// global instance id g = s*I + i, or i for shared groups) and per-scene
// view-projection matrices.
struct MatrixBuffer {
  int scene_count = 0;
  int instances_per_scene = 0;
  bool shared = false;
  std::vector<real> model_matrices;
  std::vector<real> view_projections;

  Mat4 model(std::size_t storage_index) const { return load(model_matrices, storage_index); }
  Mat4 view_projection(int s) const { return load(view_projections, static_cast<std::size_t>(s)); }

  // Storage row used by scene `s`, instance `i`.
  std::size_t storage_index(int s, int i) const {
    return shared ? static_cast<std::size_t>(i) : static_cast<std::size_t>(s) * instances_per_scene + i;
  }

 private:
  static Mat4 load(const std::vector<real>& buf, std::size_t k) {
    Mat4 m;
    std::copy_n(buf.begin() + static_cast<std::ptrdiff_t>(16 * k), 16, m.m.begin());
    return m;
  }
};

inline std::vector<real> pack_view_projections(const BatchState& state) {
  std::vector<real> out;
  out.reserve(16 * static_cast<std::size_t>(state.scene_count()));
  for (int s = 0; s < state.scene_count(); ++s) {
    const Mat4 vp = state.view_projection(s);
    out.insert(out.end(), vp.m.begin(), vp.m.end());
  }
  return out;
}

inline MatrixBuffer pack_model_matrices(const BatchState& state, std::size_t g) {
  MatrixBuffer buf;
  buf.scene_count = state.scene_count();
  buf.instances_per_scene = state.instances_per_scene(g);
  buf.shared = state.group(g).shared;
  const std::size_t n = state.stored_instances(g);
  buf.model_matrices.reserve(16 * n);
  for (std::size_t k = 0; k < n; ++k) {
    const Mat4 m = state.model_matrix(g, k);
    buf.model_matrices.insert(buf.model_matrices.end(), m.m.begin(), m.m.end());
  }
  buf.view_projections = pack_view_projections(state);
  return buf;
}

}  // namespace batchrender
