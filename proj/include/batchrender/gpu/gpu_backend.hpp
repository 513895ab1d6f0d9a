#pragma once
// Hardware backend driver, written against gpu::Device.
//
// Instanced path: per-scene view-projections and clip remaps are uploaded
// once per camera generation, each group's packed float32 model matrices once
// per transform generation, and every group is one instanced draw covering
// all of its instances in all scenes. The vertex stage places each scene in
// its tile through the clip remap; the scissor keeps fragments inside it.
//
// Frames either stay on the device (copied into one pre-allocated buffer and
// exposed through DLPack) or are read back once to host memory.
//
// Synchronisation: render() calls Device::finish() before returning, so a
// returned handle always refers to completed frames. A handle stays valid
// until it is released or the next render() overwrites the shared buffer.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "batchrender/batch_state.hpp"
#include "batchrender/error.hpp"
#include "batchrender/gpu/device.hpp"
#include "batchrender/gpu/dlpack.hpp"
#include "batchrender/raster.hpp"
#include "batchrender/renderer.hpp"
#include "batchrender/tiling.hpp"

namespace batchrender::gpu {

enum class FramePath { DeviceResident, HostCopy };

struct FrameHandle {
  std::uint64_t id = 0;
  FramePath path = FramePath::HostCopy;
  int scenes = 0;
  int height = 0;
  int width = 0;
};

struct GpuRenderResult {
  FrameHandle handle;
  RenderStats stats;
};

class GpuRenderer {
 public:
  GpuRenderer(std::unique_ptr<Device> device, ShadingConfig shading = {}, RenderPath path = RenderPath::Instanced)
      : device_(std::move(device)), shading_(shading), path_(path) {
    if (!device_) throw BackendUnavailable("hardware backend unavailable: no device");
    shading_.validate();
    shading_uniforms_.lambert = shading_.mode == ShadingMode::Lambert;
    shading_uniforms_.light_dir = {static_cast<float>(shading_.light_dir.x), static_cast<float>(shading_.light_dir.y),
                                   static_cast<float>(shading_.light_dir.z)};
    shading_uniforms_.ambient = static_cast<float>(shading_.ambient);
    shading_uniforms_.diffuse = static_cast<float>(shading_.diffuse);
  }

  // Probes for a hardware device; throws BackendUnavailable when none exists
  // so callers can fall back to the software backend.
  static GpuRenderer create_hardware(ShadingConfig shading = {}, RenderPath path = RenderPath::Instanced) {
    auto device = probe_hardware_device();
    if (!device)
      throw BackendUnavailable("hardware backend unavailable: no GPU device found; use the soft backend instead");
    return GpuRenderer(std::move(device), shading, path);
  }

  Device& device() { return *device_; }
  const RenderStats& stats() const { return totals_; }
  RenderPath path() const { return path_; }
  std::uint64_t frame_buffer_allocations() const { return frame_buffer_allocations_; }

  GpuRenderResult render(const BatchState& state, const TileLayout& layout, FramePath frame_path) {
    if (layout.scene_count != state.scene_count())
      throw LayoutError(fmt::format("layout covers {} scenes but the batch has {}", layout.scene_count,
                                    state.scene_count()));
    if (frame_path == FramePath::DeviceResident) {
      if (!device_->info().supports_device_resident)
        throw BackendUnavailable(fmt::format(
            "device-resident frames are not supported on device '{}'; use FramePath::HostCopy", device_->info().name));
      if (path_ == RenderPath::Naive)
        throw ValueError("the naive path renders one target per scene and only supports FramePath::HostCopy");
    }
    RenderStats st;
    switch (path_) {
      case RenderPath::Naive: render_naive(state, layout, st); break;
      case RenderPath::Tiled: render_tiled(state, layout, st); break;
      case RenderPath::Instanced: render_instanced(state, layout, st); break;
    }
    if (path_ != RenderPath::Naive) {
      if (frame_path == FramePath::DeviceResident)
        copy_to_device_frames(layout);
      else
        read_back_atlas(layout);
    }
    device_->finish();
    st.frames_produced = static_cast<std::uint64_t>(layout.scene_count);
    totals_ += st;

    current_ = {++render_counter_, frame_path, layout.scene_count, layout.tile_height, layout.tile_width};
    released_ = false;
    return {current_, st};
  }

  // Contiguous host copy of the frames behind `handle`.
  void export_frames(const FrameHandle& handle, FrameBatch& out) const {
    require_valid(handle);
    if (handle.path == FramePath::HostCopy) {
      out = host_frames_;
      return;
    }
    if (out.scenes != handle.scenes || out.height != handle.height || out.width != handle.width)
      out = FrameBatch(handle.scenes, handle.height, handle.width);
    device_->download(frame_buffer_, std::as_writable_bytes(std::span(out.data)));
  }

  FrameBatch export_frames(const FrameHandle& handle) const {
    FrameBatch out;
    export_frames(handle, out);
    return out;
  }

  void release(const FrameHandle& handle) {
    require_valid(handle);
    released_ = true;
  }

  bool valid(const FrameHandle& handle) const {
    return !released_ && handle.id != 0 && handle.id == current_.id;
  }

  // DLPack view of device-resident frames (uint8, S x H x W x 4). The
  // returned tensor borrows the renderer's frame buffer; call its deleter
  // when done.
  dlpack::DLManagedTensor* to_dlpack(const FrameHandle& handle) {
    require_valid(handle);
    if (handle.path != FramePath::DeviceResident)
      throw ValueError("only device-resident frames can be exported through DLPack");
    struct Context {
      std::int64_t shape[4];
      dlpack::DLManagedTensor tensor;
    };
    auto* ctx = new Context{{handle.scenes, handle.height, handle.width, 4}, {}};
    const DeviceInfo info = device_->info();
    ctx->tensor.dl_tensor = {device_->native_pointer(frame_buffer_),
                             {info.dl_device_type, info.device_id},
                             4,
                             {dlpack::kDLUInt, 8, 1},
                             ctx->shape,
                             nullptr,
                             0};
    ctx->tensor.manager_ctx = ctx;
    ctx->tensor.deleter = [](dlpack::DLManagedTensor* self) { delete static_cast<Context*>(self->manager_ctx); };
    return &ctx->tensor;
  }

 private:
  struct GroupBuffers {
    BufferId models = 0;
    BufferId colors = 0;
    std::size_t rows = 0;
    std::uint64_t transform_generation = 0;
    std::uint64_t color_generation = 0;
  };

  void require_valid(const FrameHandle& handle) const {
    if (!valid(handle))
      throw ValueError(fmt::format("frame handle {} is no longer valid (released or superseded by a later render)",
                                   handle.id));
  }

  static void append_matrix(std::vector<float>& out, const Mat4& m) {
    for (real v : m.m) out.push_back(static_cast<float>(v));
  }

  template <typename T>
  void upload(BufferId id, const std::vector<T>& data) {
    device_->upload(id, std::as_bytes(std::span(data)));
  }

  BufferId ensure_buffer(BufferId id, std::size_t bytes) {
    if (id != 0 && device_->buffer_size(id) >= bytes) return id;
    if (id != 0) device_->destroy_buffer(id);
    return device_->create_buffer(bytes);
  }

  void set_uniforms(const BatchState& state, const TileLayout& layout) {
    scratch_.clear();
    for (int s = 0; s < state.scene_count(); ++s) append_matrix(scratch_, state.view_projection(s));
    remaps_.clear();
    scissors_.clear();
    for (int s = 0; s < layout.scene_count; ++s) {
      const TileSlot slot = tile_slot(layout, s);
      remaps_.insert(remaps_.end(), {static_cast<float>(slot.remap.scale_x), static_cast<float>(slot.remap.scale_y),
                                     static_cast<float>(slot.remap.offset_x), static_cast<float>(slot.remap.offset_y)});
      scissors_.insert(scissors_.end(), {slot.rect.x0, layout.atlas_height() - slot.rect.y0 - slot.rect.height,
                                         slot.rect.width, slot.rect.height});
    }
    device_->set_scene_uniforms({scratch_, remaps_, scissors_});
  }

  // Uploads one instance into the single-row staging buffers.
  void stage_instance(const BatchState& state, std::size_t g, std::size_t k) {
    staging_models_ = ensure_buffer(staging_models_, 16 * sizeof(float));
    staging_colors_ = ensure_buffer(staging_colors_, 4 * sizeof(float));
    scratch_.clear();
    append_matrix(scratch_, state.model_matrix(g, k));
    upload(staging_models_, scratch_);
    const Rgba c = state.instance_color(g, k);
    const std::vector<float> rgba{static_cast<float>(c.r), static_cast<float>(c.g), static_cast<float>(c.b),
                                  static_cast<float>(c.a)};
    upload(staging_colors_, rgba);
  }

  void draw_single(const BatchState& state, std::size_t g, std::uint32_t scene) {
    InstancedDraw d;
    d.mesh = state.group(g).mesh.get();
    d.models = staging_models_;
    d.colors = staging_colors_;
    d.instance_count = 1;
    d.instances_per_scene = 1;
    d.first_scene = scene;
    d.shared = true;
    d.cull_back_faces = state.group(g).cull_back_faces;
    device_->draw_instanced(d, shading_uniforms_);
  }

  void render_naive(const BatchState& state, const TileLayout& layout, RenderStats& st) {
    const TileLayout single{1, 1, 1, layout.tile_width, layout.tile_height};
    if (host_frames_.scenes != layout.scene_count || host_frames_.height != layout.tile_height ||
        host_frames_.width != layout.tile_width)
      host_frames_ = FrameBatch(layout.scene_count, layout.tile_height, layout.tile_width);
    const auto clear = quantize_rgba(state.clear_color());
    for (int s = 0; s < state.scene_count(); ++s) {
      device_->bind_target(layout.tile_width, layout.tile_height, clear);
      ++st.target_binds;
      scratch_.clear();
      append_matrix(scratch_, state.view_projection(s));
      identity_remap_ = {1, 1, 0, 0};
      const std::vector<std::int32_t> full{0, 0, layout.tile_width, layout.tile_height};
      device_->set_scene_uniforms({scratch_, identity_remap_, full});
      st.matrix_uploads += 16;
      for (std::size_t g = 0; g < state.group_count(); ++g) {
        for (int i = 0; i < state.instances_per_scene(g); ++i) {
          stage_instance(state, g, state.storage_index(g, s, i));
          draw_single(state, g, 0);
          ++st.draw_calls;
          ++st.instances_drawn;
          st.matrix_uploads += 16;
        }
      }
      read_back_atlas_into_frame(single, s);
    }
  }

  void render_tiled(const BatchState& state, const TileLayout& layout, RenderStats& st) {
    device_->bind_target(layout.atlas_width(), layout.atlas_height(), quantize_rgba(state.clear_color()));
    st.target_binds = 1;
    set_uniforms(state, layout);
    st.matrix_uploads += 16 * static_cast<std::uint64_t>(state.scene_count());
    for (int s = 0; s < state.scene_count(); ++s) {
      for (std::size_t g = 0; g < state.group_count(); ++g) {
        for (int i = 0; i < state.instances_per_scene(g); ++i) {
          stage_instance(state, g, state.storage_index(g, s, i));
          draw_single(state, g, static_cast<std::uint32_t>(s));
          ++st.draw_calls;
          ++st.instances_drawn;
          st.matrix_uploads += 16;
        }
      }
    }
  }

  void render_instanced(const BatchState& state, const TileLayout& layout, RenderStats& st) {
    device_->bind_target(layout.atlas_width(), layout.atlas_height(), quantize_rgba(state.clear_color()));
    st.target_binds = 1;
    if (camera_generation_ != state.camera_generation() || !(uniform_layout_ == layout)) {
      set_uniforms(state, layout);
      camera_generation_ = state.camera_generation();
      uniform_layout_ = layout;
      st.matrix_uploads += 16 * static_cast<std::uint64_t>(state.scene_count());
    }
    groups_.resize(state.group_count());
    for (std::size_t g = 0; g < state.group_count(); ++g) {
      GroupBuffers& gb = groups_[g];
      const std::size_t rows = state.stored_instances(g);
      if (gb.rows != rows) {
        gb.models = ensure_buffer(gb.models, rows * 16 * sizeof(float));
        gb.colors = ensure_buffer(gb.colors, rows * 4 * sizeof(float));
        gb.rows = rows;
        gb.transform_generation = gb.color_generation = 0;
      }
      if (gb.transform_generation != state.transform_generation(g)) {
        scratch_.clear();
        for (std::size_t k = 0; k < rows; ++k) append_matrix(scratch_, state.model_matrix(g, k));
        upload(gb.models, scratch_);
        gb.transform_generation = state.transform_generation(g);
        st.matrix_uploads += 16 * rows;
      }
      if (gb.color_generation != state.color_generation(g)) {
        scratch_.assign(state.colors(g).values.begin(), state.colors(g).values.end());
        upload(gb.colors, scratch_);
        gb.color_generation = state.color_generation(g);
      }
      InstancedDraw d;
      d.mesh = state.group(g).mesh.get();
      d.models = gb.models;
      d.colors = gb.colors;
      d.instances_per_scene = static_cast<std::uint32_t>(state.instances_per_scene(g));
      d.instance_count = static_cast<std::uint32_t>(state.scene_count()) * d.instances_per_scene;
      d.shared = state.group(g).shared;
      d.cull_back_faces = state.group(g).cull_back_faces;
      device_->draw_instanced(d, shading_uniforms_);
      ++st.draw_calls;
      st.instances_drawn += d.instance_count;
    }
  }

  void copy_to_device_frames(const TileLayout& layout) {
    const std::size_t bytes = FrameBatch::frame_bytes(layout.tile_height, layout.tile_width) * layout.scene_count;
    if (frame_buffer_ == 0 || device_->buffer_size(frame_buffer_) < bytes) {
      frame_buffer_ = ensure_buffer(frame_buffer_, bytes);
      ++frame_buffer_allocations_;
    }
    device_->copy_tiles_to_buffer(frame_buffer_, layout);
  }

  // Reads the bound target (bottom-left origin) and writes frame `s` of
  // host_frames_ from the single tile of `layout`.
  void read_back_atlas_into_frame(const TileLayout& single, int s) {
    pixels_.resize(static_cast<std::size_t>(single.atlas_width()) * single.atlas_height() * 4);
    device_->read_pixels(pixels_);
    const std::size_t row_bytes = static_cast<std::size_t>(single.tile_width) * 4;
    auto dst = host_frames_.frame(s);
    for (int y = 0; y < single.tile_height; ++y)
      std::memcpy(dst.data() + row_bytes * y, pixels_.data() + row_bytes * (single.tile_height - 1 - y), row_bytes);
  }

  void read_back_atlas(const TileLayout& layout) {
    pixels_.resize(static_cast<std::size_t>(layout.atlas_width()) * layout.atlas_height() * 4);
    device_->read_pixels(pixels_);
    if (flipped_.width != layout.atlas_width() || flipped_.height != layout.atlas_height())
      flipped_ = Image(layout.atlas_width(), layout.atlas_height());
    const std::size_t row_bytes = static_cast<std::size_t>(layout.atlas_width()) * 4;
    for (int y = 0; y < layout.atlas_height(); ++y)
      std::memcpy(flipped_.pixel(0, y), pixels_.data() + row_bytes * (layout.atlas_height() - 1 - y), row_bytes);
    partition_atlas_into(flipped_, layout, host_frames_);
  }

  std::unique_ptr<Device> device_;
  ShadingConfig shading_;
  ShadingUniforms shading_uniforms_;
  RenderPath path_;
  RenderStats totals_;

  std::vector<GroupBuffers> groups_;
  std::uint64_t camera_generation_ = 0;
  TileLayout uniform_layout_;
  BufferId staging_models_ = 0;
  BufferId staging_colors_ = 0;
  BufferId frame_buffer_ = 0;
  std::uint64_t frame_buffer_allocations_ = 0;

  std::vector<float> scratch_;
  std::vector<float> remaps_;
  std::vector<float> identity_remap_;
  std::vector<std::int32_t> scissors_;
  std::vector<std::uint8_t> pixels_;
  Image flipped_;
  FrameBatch host_frames_;

  FrameHandle current_;
  std::uint64_t render_counter_ = 0;
  bool released_ = false;
};

// FrameRenderer adapter used by the environment layer. Device-resident
// frames are exported to host once per render.
class GpuFrameRenderer final : public FrameRenderer {
 public:
  GpuFrameRenderer(GpuRenderer renderer, FramePath frame_path)
      : renderer_(std::move(renderer)), frame_path_(frame_path) {}

  void render_frames(const BatchState& state, const TileLayout& layout, FrameBatch& out) override {
    const auto result = renderer_.render(state, layout, frame_path_);
    renderer_.export_frames(result.handle, out);
  }
  RenderStats stats() const override { return renderer_.stats(); }
  RenderPath path() const override { return renderer_.path(); }
  std::string name() const override { return "gpu/" + to_string(renderer_.path()); }
  GpuRenderer& renderer() { return renderer_; }

 private:
  GpuRenderer renderer_;
  FramePath frame_path_;
};

}  // namespace batchrender::gpu
