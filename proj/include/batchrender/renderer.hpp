#pragma once
// Pieces shared by every backend: counters, shading parameters and the
// frame-producing interface the environment layer drives.

#include <cmath>
#include <cstdint>
#include <string>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "batchrender/batch_state.hpp"
#include "batchrender/error.hpp"
#include "batchrender/math.hpp"
#include "batchrender/tiling.hpp"

namespace batchrender {

// Work counters. `matrix_uploads` counts reals (16 per matrix) handed to the
// pipeline; the instanced paths only count a group when its transform
// generation changed since the previous upload.
struct RenderStats {
  std::uint64_t target_binds = 0;
  std::uint64_t draw_calls = 0;
  std::uint64_t instances_drawn = 0;
  std::uint64_t matrix_uploads = 0;
  std::uint64_t frames_produced = 0;

  RenderStats& operator+=(const RenderStats& o) {
    target_binds += o.target_binds;
    draw_calls += o.draw_calls;
    instances_drawn += o.instances_drawn;
    matrix_uploads += o.matrix_uploads;
    frames_produced += o.frames_produced;
    return *this;
  }
  friend RenderStats operator+(RenderStats a, const RenderStats& b) { return a += b; }
  friend RenderStats operator-(const RenderStats& a, const RenderStats& b) {
    return {a.target_binds - b.target_binds, a.draw_calls - b.draw_calls, a.instances_drawn - b.instances_drawn,
            a.matrix_uploads - b.matrix_uploads, a.frames_produced - b.frames_produced};
  }
  bool operator==(const RenderStats&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RenderStats, target_binds, draw_calls, instances_drawn, matrix_uploads,
                                   frames_produced)

enum class ShadingMode { Unlit, Lambert };

struct ShadingConfig {
  ShadingMode mode = ShadingMode::Lambert;
  // Direction towards the light, world space.
  Vec3 light_dir{-0.5774, -0.5774, -0.5774};
  real ambient = 0.2;
  real diffuse = 0.8;

  void validate() const {
    if (std::abs(length(light_dir) - 1.0) > 1e-4)
      throw ValueError(fmt::format("light_dir must be unit length, |l| = {}", length(light_dir)));
    if (ambient < 0 || diffuse < 0 || ambient + diffuse > 1)
      throw ValueError(fmt::format("need ambient, diffuse >= 0 and ambient + diffuse <= 1, got {} and {}",
                                   ambient, diffuse));
  }
};

// Rendering strategy, ordered as the cumulative optimisation stages.
enum class RenderPath { Naive, Tiled, Instanced };

inline std::string to_string(RenderPath p) {
  switch (p) {
    case RenderPath::Naive: return "naive";
    case RenderPath::Tiled: return "tiled";
    case RenderPath::Instanced: return "instanced";
  }
  return "?";
}

inline RenderStats expected_stats(RenderPath path, const BatchState& state) {
  RenderStats st;
  std::uint64_t per_scene_instances = 0;
  for (std::size_t g = 0; g < state.group_count(); ++g)
    per_scene_instances += static_cast<std::uint64_t>(state.instances_per_scene(g));
  const auto scenes = static_cast<std::uint64_t>(state.scene_count());
  st.instances_drawn = scenes * per_scene_instances;
  st.frames_produced = scenes;
  st.target_binds = path == RenderPath::Naive ? scenes : 1;
  st.draw_calls = path == RenderPath::Instanced ? state.group_count() : scenes * per_scene_instances;
  return st;
}

// Anything that turns a BatchState into a top-left-origin frame batch.
class FrameRenderer {
 public:
  virtual ~FrameRenderer() = default;
  virtual void render_frames(const BatchState& state, const TileLayout& layout, FrameBatch& out) = 0;
  virtual RenderStats stats() const = 0;
  virtual RenderPath path() const = 0;
  virtual std::string name() const = 0;
};

}  // namespace batchrender
