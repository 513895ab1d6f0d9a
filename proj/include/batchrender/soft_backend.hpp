#pragma once
// Deterministic software backend.
//
// Three strategies mirror the cumulative optimisation stages:
//   naive     - one fresh W x H target per scene, one draw per instance;
//   tiled     - one atlas target, per-scene integer viewport offsets plus a
//               scissor, still one draw per instance;
//   instanced - one atlas target, one logical draw per model group covering
//               every instance of every scene, fed from packed matrices that
//               are re-packed only when the group's transforms change.
// All three produce byte-identical frames.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "batchrender/batch_state.hpp"
#include "batchrender/raster.hpp"
#include "batchrender/renderer.hpp"
#include "batchrender/tiling.hpp"

namespace batchrender {

struct SoftRendererOptions {
  // Worker threads for the instanced path. Tiles are write-disjoint, so the
  // output does not depend on this value.
  int threads = 1;
};

class SoftRenderer {
 public:
  explicit SoftRenderer(ShadingConfig shading = {}, SoftRendererOptions options = {})
      : shading_(shading), options_(options) {
    shading_.validate();
    if (options_.threads < 1) throw ValueError(fmt::format("threads must be ≥ 1, got {}", options_.threads));
  }

  const ShadingConfig& shading() const { return shading_; }
  // Session totals; monotone.
  const RenderStats& stats() const { return totals_; }
  // The atlas written by the last tiled or instanced render. Instanced
  // renders keep their tiles tile-major and assemble the atlas on first
  // access; its depth plane is only meaningful after render_tiled.
  const RenderTarget& target() const {
    if (tiles_pending_) assemble_atlas();
    return atlas_;
  }

  RenderStats render_naive(const BatchState& state, int width, int height, FrameBatch& out) {
    if (width < 1 || height < 1) throw ValueError(fmt::format("frame size must be positive, got {}x{}", width, height));
    if (out.scenes != state.scene_count() || out.width != width || out.height != height)
      out = FrameBatch(state.scene_count(), height, width);
    RenderStats st;
    const auto clear = quantize_rgba(state.clear_color());
    const TileViewport vp{width, height, 0, 0};
    for (int s = 0; s < state.scene_count(); ++s) {
      RenderTarget target;
      target.reset(width, height, clear);
      ++st.target_binds;
      const Mat4 view_proj = state.view_projection(s);
      st.matrix_uploads += 16;
      for (std::size_t g = 0; g < state.group_count(); ++g) {
        for (int i = 0; i < state.instances_per_scene(g); ++i) {
          draw_one(pipeline_, target, vp, state, g, state.storage_index(g, s, i), view_proj);
          ++st.draw_calls;
          ++st.instances_drawn;
          st.matrix_uploads += 16;
        }
      }
      std::copy(target.color.rgba.begin(), target.color.rgba.end(), out.frame(s).begin());
      ++st.frames_produced;
    }
    totals_ += st;
    return st;
  }

  FrameBatch render_naive(const BatchState& state, int width, int height) {
    FrameBatch out;
    render_naive(state, width, height, out);
    return out;
  }

  RenderStats render_tiled(const BatchState& state, const TileLayout& layout) {
    begin_atlas(state, layout);
    RenderStats st;
    st.target_binds = 1;
    for (int s = 0; s < state.scene_count(); ++s) {
      const TileViewport vp = viewport(layout, s);
      const Mat4 view_proj = state.view_projection(s);
      st.matrix_uploads += 16;
      for (std::size_t g = 0; g < state.group_count(); ++g) {
        for (int i = 0; i < state.instances_per_scene(g); ++i) {
          draw_one(pipeline_, atlas_, vp, state, g, state.storage_index(g, s, i), view_proj);
          ++st.draw_calls;
          ++st.instances_drawn;
          st.matrix_uploads += 16;
        }
      }
    }
    totals_ += st;
    return st;
  }

  RenderStats render_instanced(const BatchState& state, const TileLayout& layout) {
    check_layout(state, layout);
    RenderStats st;
    st.target_binds = 1;
    if (camera_generation_ != state.camera_generation() || view_projections_.size() != layout.scene_count * 16u) {
      view_projections_ = pack_view_projections(state);
      camera_generation_ = state.camera_generation();
      st.matrix_uploads += view_projections_.size();
    }
    groups_.resize(state.group_count());
    for (std::size_t g = 0; g < state.group_count(); ++g) {
      GroupUpload& up = groups_[g];
      if (up.generation != state.transform_generation(g) || up.mesh != state.group(g).mesh.get()) {
        up.generation = state.transform_generation(g);
        up.mesh = state.group(g).mesh.get();
        const std::size_t n = state.stored_instances(g);
        up.models.resize(n);
        up.normals.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
          up.models[k] = state.model_matrix(g, k);
          up.normals[k] = normal_matrix(up.models[k]);
        }
        st.matrix_uploads += 16 * n;
      }
      ++st.draw_calls;
      st.instances_drawn += static_cast<std::uint64_t>(state.scene_count()) * state.instances_per_scene(g);
    }
    execute_instanced(state, layout);
    totals_ += st;
    return st;
  }

  // Host readback: partitions the atlas into a contiguous frame batch.
  RenderStats readback(const RenderTarget& target, const TileLayout& layout, FrameBatch& out) {
    partition_atlas_into(target.color, layout, out);
    RenderStats st;
    st.frames_produced = static_cast<std::uint64_t>(layout.scene_count);
    totals_ += st;
    return st;
  }

  FrameBatch readback(const RenderTarget& target, const TileLayout& layout) {
    FrameBatch out;
    readback(target, layout, out);
    return out;
  }

  // Reads back the last tiled or instanced render. Instanced tiles are
  // already contiguous per scene, so no atlas is assembled.
  RenderStats readback(const TileLayout& layout, FrameBatch& out) {
    if (!tiles_pending_ || layout != tiles_layout_) return readback(target(), layout, out);
    if (out.scenes != layout.scene_count || out.width != layout.tile_width || out.height != layout.tile_height)
      out = FrameBatch(layout.scene_count, layout.tile_height, layout.tile_width);
    for (int s = 0; s < layout.scene_count; ++s)
      std::memcpy(out.frame(s).data(), tiles_[static_cast<std::size_t>(s)].data(), out.frame_bytes());
    RenderStats st;
    st.frames_produced = static_cast<std::uint64_t>(layout.scene_count);
    totals_ += st;
    return st;
  }

 private:
  struct GroupUpload {
    std::uint64_t generation = 0;
    const MeshAsset* mesh = nullptr;
    std::vector<Mat4> models;
    std::vector<Mat3> normals;
  };

  static TileViewport viewport(const TileLayout& layout, int s) {
    const PixelRect r = tile_rect(layout, s);
    return {r.width, r.height, r.x0, r.y0};
  }

  static void check_layout(const BatchState& state, const TileLayout& layout) {
    if (layout.scene_count != state.scene_count())
      throw LayoutError(fmt::format("layout covers {} scenes but the batch has {}", layout.scene_count,
                                    state.scene_count()));
  }

  void begin_atlas(const BatchState& state, const TileLayout& layout) {
    check_layout(state, layout);
    tiles_pending_ = false;
    atlas_clear_ = quantize_rgba(state.clear_color());
    atlas_.reset(layout.atlas_width(), layout.atlas_height(), atlas_clear_);
  }

  // Copies the per-scene instanced output into the row-major atlas. Blank
  // tiles are never drawn, so they only need clearing when the atlas is
  // resized or the clear colour changes.
  void assemble_atlas() const {
    const TileLayout& l = tiles_layout_;
    if (atlas_.width() != l.atlas_width() || atlas_.height() != l.atlas_height() || atlas_clear_ != tiles_clear_) {
      atlas_clear_ = tiles_clear_;
      atlas_.reset(l.atlas_width(), l.atlas_height(), atlas_clear_);
    }
    const std::size_t row_bytes = static_cast<std::size_t>(l.tile_width) * 4;
    const std::size_t stride = static_cast<std::size_t>(atlas_.width()) * 4;
    for (int s = 0; s < l.scene_count; ++s) {
      const PixelRect r = tile_rect(l, s);
      const std::uint8_t* src = tiles_[static_cast<std::size_t>(s)].data();
      std::uint8_t* dst = atlas_.color.rgba.data() + static_cast<std::size_t>(r.y0) * stride + r.x0 * 4u;
      for (int y = 0; y < r.height; ++y) std::memcpy(dst + y * stride, src + y * row_bytes, row_bytes);
    }
    tiles_pending_ = false;
  }

  void draw_one(TrianglePipeline& pipe, RenderTarget& target, const TileViewport& vp, const BatchState& state,
                std::size_t g, std::size_t k, const Mat4& view_proj) const {
    const Mat4 model = state.model_matrix(g, k);
    pipe.draw(target, vp,
              {state.group(g).mesh.get(), view_proj * model, normal_matrix(model), state.instance_color(g, k),
               state.group(g).cull_back_faces},
              shading_);
  }

  // Leading shared groups draw the same instances in every scene, so scenes
  // whose view-projection matches bit for bit get identical pixels and depth
  // from them. Their raster is kept and reused as the tile's starting point.
  struct SharedPrefix {
    RenderTarget tile;
    std::array<real, 16> view_proj{};
    bool valid = false;
  };

  void draw_groups(TrianglePipeline& pipe, RenderTarget& target, const BatchState& state, const Mat4& view_proj,
                   int s, std::size_t g_begin, std::size_t g_end) {
    const TileViewport vp{target.width(), target.height(), 0, 0};
    for (std::size_t g = g_begin; g < g_end; ++g) {
      const GroupSpec& spec = state.group(g);
      const GroupUpload& up = groups_[g];
      for (int i = 0; i < spec.instances_per_scene; ++i) {
        const std::size_t k = state.storage_index(g, s, i);
        pipe.draw(target, vp,
                  {spec.mesh.get(), view_proj * up.models[k], up.normals[k], state.instance_color(g, k),
                   spec.cull_back_faces},
                  shading_);
      }
    }
  }

  // The per-group instanced draws are executed binned by tile: each tile is
  // rendered into a contiguous scratch target whose colour plane is the
  // scene's own buffer, receiving its instances of every group in group
  // order. Per-pixel results match group-major execution because tiles never
  // overlap; contiguous tiles avoid the cache-set aliasing of power-of-two
  // atlas strides.
  void draw_scene_range(TrianglePipeline& pipe, RenderTarget& scratch, SharedPrefix& prefix,
                        const BatchState& state, const TileLayout& layout, int s_begin, int s_end) {
    const auto clear = quantize_rgba(state.clear_color());
    const int w = layout.tile_width, h = layout.tile_height;
    std::size_t lead = 0;
    while (lead < state.group_count() && state.group(lead).shared) ++lead;
    for (int s = s_begin; s < s_end; ++s) {
      auto& tile = tiles_[static_cast<std::size_t>(s)];
      tile.resize(FrameBatch::frame_bytes(h, w));
      scratch.color.width = w;
      scratch.color.height = h;
      scratch.color.rgba.swap(tile);
      Mat4 view_proj;
      std::copy_n(view_projections_.begin() + 16 * s, 16, view_proj.m.begin());
      if (lead == 0) {
        scratch.reset(w, h, clear);
      } else {
        if (!prefix.valid || std::memcmp(prefix.view_proj.data(), view_proj.m.data(), sizeof(real) * 16) != 0) {
          prefix.tile.reset(w, h, clear);
          draw_groups(pipe, prefix.tile, state, view_proj, s, 0, lead);
          std::copy_n(view_proj.m.begin(), 16, prefix.view_proj.begin());
          prefix.valid = true;
        }
        std::memcpy(scratch.color.rgba.data(), prefix.tile.color.rgba.data(), scratch.color.rgba.size());
        scratch.depth = prefix.tile.depth;
      }
      draw_groups(pipe, scratch, state, view_proj, s, lead, state.group_count());
      scratch.color.rgba.swap(tile);
    }
  }

  void execute_instanced(const BatchState& state, const TileLayout& layout) {
    const int scenes = state.scene_count();
    tiles_.resize(static_cast<std::size_t>(scenes));
    tiles_layout_ = layout;
    tiles_clear_ = quantize_rgba(state.clear_color());
    tiles_pending_ = true;
    const int workers = std::min(options_.threads, scenes);
    scratch_.resize(static_cast<std::size_t>(workers));
    prefixes_.resize(static_cast<std::size_t>(workers));
    for (SharedPrefix& p : prefixes_) p.valid = false;
    if (workers <= 1) {
      draw_scene_range(pipeline_, scratch_[0], prefixes_[0], state, layout, 0, scenes);
      return;
    }
    thread_pipelines_.resize(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
      const int begin = scenes * t / workers;
      const int end = scenes * (t + 1) / workers;
      pool.emplace_back([this, &state, &layout, t, begin, end] {
        const auto k = static_cast<std::size_t>(t);
        draw_scene_range(thread_pipelines_[k], scratch_[k], prefixes_[k], state, layout, begin, end);
      });
    }
    for (auto& th : pool) th.join();
  }

  ShadingConfig shading_;
  SoftRendererOptions options_;
  RenderStats totals_;
  mutable RenderTarget atlas_;
  mutable std::array<std::uint8_t, 4> atlas_clear_{};
  mutable bool tiles_pending_ = false;
  std::vector<std::vector<std::uint8_t>> tiles_;
  TileLayout tiles_layout_;
  std::array<std::uint8_t, 4> tiles_clear_{};
  TrianglePipeline pipeline_;
  std::vector<TrianglePipeline> thread_pipelines_;
  std::vector<RenderTarget> scratch_;
  std::vector<SharedPrefix> prefixes_;
  std::vector<GroupUpload> groups_;
  std::vector<real> view_projections_;
  std::uint64_t camera_generation_ = 0;
};

// FrameRenderer adapter: render with the chosen strategy, then read back.
class SoftFrameRenderer final : public FrameRenderer {
 public:
  explicit SoftFrameRenderer(RenderPath path, ShadingConfig shading = {}, SoftRendererOptions options = {})
      : path_(path), renderer_(shading, options) {}

  void render_frames(const BatchState& state, const TileLayout& layout, FrameBatch& out) override {
    switch (path_) {
      case RenderPath::Naive:
        renderer_.render_naive(state, layout.tile_width, layout.tile_height, out);
        return;
      case RenderPath::Tiled:
        renderer_.render_tiled(state, layout);
        break;
      case RenderPath::Instanced:
        renderer_.render_instanced(state, layout);
        break;
    }
    renderer_.readback(layout, out);
  }

  RenderStats stats() const override { return renderer_.stats(); }
  RenderPath path() const override { return path_; }
  std::string name() const override { return "soft/" + to_string(path_); }
  SoftRenderer& renderer() { return renderer_; }

 private:
  RenderPath path_;
  SoftRenderer renderer_;
};

}  // namespace batchrender
