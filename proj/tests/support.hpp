#pragma once
// Shared fixtures for the unit tests and the acceptance binary.

#include <cstdint>
#include <random>
#include <vector>

#include "batchrender/batch_state.hpp"
#include "batchrender/mesh.hpp"

namespace testing_support {

using namespace batchrender;

struct RandomBatchOptions {
  int scenes = 4;
  int instances = 8;
  int width = 64;
  int height = 64;
  bool include_shared = true;
  // Put the shared plane group first instead of last.
  bool shared_first = false;
};

inline std::vector<MeshPtr> all_primitives() {
  return {mesh::unit_cube(), mesh::uv_sphere(12, 6), mesh::cylinder(10), mesh::plane()};
}

// One group per primitive mesh, instances scattered in front of cameras that
// jitter around (0, -6, 1.5) looking slightly down. With `include_shared`,
// the plane group is shared across scenes.
inline BatchState random_batch(std::uint64_t seed, const RandomBatchOptions& o) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<real> u(-1, 1), unit(0, 1);
  BatchSpec spec;
  spec.scene_count = o.scenes;
  spec.frame_width = o.width;
  spec.frame_height = o.height;
  spec.clear_color = {unit(rng) * 0.3, unit(rng) * 0.3, 0.3 + unit(rng) * 0.5, 1};
  const auto meshes = all_primitives();
  const char* names[] = {"cube", "sphere", "cylinder", "plane"};
  const std::size_t order[2][4] = {{0, 1, 2, 3}, {3, 0, 1, 2}};
  for (std::size_t m : order[o.shared_first ? 1 : 0]) {
    const bool shared = o.include_shared && m == 3;
    spec.groups.push_back({names[m], meshes[m], o.instances, shared, m != 3});
  }
  BatchState st = create_batch(spec);
  for (std::size_t g = 0; g < st.group_count(); ++g) {
    Tensor pos(st.expected_shape(g, 3)), hpr(st.expected_shape(g, 3)), scale(st.expected_shape(g, 3)),
        color(st.expected_shape(g, 4));
    for (std::size_t k = 0; k < st.stored_instances(g); ++k) {
      pos.values[3 * k] = 3.5 * u(rng);
      pos.values[3 * k + 1] = 3.0 * u(rng);
      pos.values[3 * k + 2] = 1.5 * u(rng);
      for (int c = 0; c < 3; ++c) {
        hpr.values[3 * k + c] = 180 * u(rng);
        scale.values[3 * k + c] = 0.2 + 0.9 * unit(rng);
      }
      for (int c = 0; c < 3; ++c) color.values[4 * k + c] = unit(rng);
      color.values[4 * k + 3] = 1;
    }
    st.set_instance_transforms(g, std::move(pos), std::move(hpr), std::move(scale));
    st.set_instance_colors(g, std::move(color));
  }
  std::vector<CameraPose> cams;
  std::vector<ProjectionParams> projs;
  for (int s = 0; s < o.scenes; ++s) {
    cams.push_back({{0.5 * u(rng), -6 + u(rng), 1.5 + 0.5 * u(rng)}, {10 * u(rng), -12 + 5 * u(rng), 5 * u(rng)}});
    ProjectionParams p;
    p.fov_y_deg = 50 + 20 * unit(rng);
    p.aspect = static_cast<real>(o.width) / o.height;
    projs.push_back(p);
  }
  st.set_cameras(std::move(cams), std::move(projs));
  return st;
}

inline std::size_t differing_bytes(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  std::size_t n = 0;
  for (std::size_t k = 0; k < a.size(); ++k) n += a[k] != b[k];
  return n;
}

}  // namespace testing_support
