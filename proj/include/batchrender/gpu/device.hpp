#pragma once
// Minimal device abstraction the hardware backend is written against.
//
// The interface follows graphics-API semantics: the colour target has a
// bottom-left origin, the vertex stage applies the per-scene clip remap, and
// per-scene scissor rectangles are given in window coordinates. Frames are
// copied device-side into a pre-allocated buffer for device-resident export.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include "batchrender/mesh.hpp"
#include "batchrender/tiling.hpp"

namespace batchrender::gpu {

using BufferId = std::uint32_t;

struct DeviceInfo {
  std::string name;
  std::int32_t dl_device_type = 1;
  std::int32_t device_id = 0;
  bool supports_device_resident = false;
};

// Per-scene constants, all float32 as uploaded to the device.
struct SceneUniforms {
  std::span<const float> view_projections;  // 16 per scene, column-major
  std::span<const float> clip_remaps;       // scale_x, scale_y, offset_x, offset_y per scene
  std::span<const std::int32_t> scissors;   // x, y, width, height per scene (bottom-left origin)
};

struct ShadingUniforms {
  bool lambert = true;
  std::array<float, 3> light_dir{};
  float ambient = 0;
  float diffuse = 0;
};

// One instanced draw. Instance id k maps to scene first_scene + k / I and to
// matrix/colour row (shared ? k % I : k).
struct InstancedDraw {
  const MeshAsset* mesh = nullptr;
  BufferId models = 0;  // 16 floats per row
  BufferId colors = 0;  // 4 floats per row
  std::uint32_t instance_count = 0;
  std::uint32_t instances_per_scene = 1;
  std::uint32_t first_scene = 0;
  bool shared = false;
  bool cull_back_faces = true;
};

class Device {
 public:
  virtual ~Device() = default;

  virtual DeviceInfo info() const = 0;
  // Number of device allocations performed so far (buffers and targets).
  virtual std::uint64_t allocation_count() const = 0;

  virtual BufferId create_buffer(std::size_t bytes) = 0;
  virtual std::size_t buffer_size(BufferId id) const = 0;
  virtual void upload(BufferId id, std::span<const std::byte> bytes) = 0;
  virtual void download(BufferId id, std::span<std::byte> out) const = 0;
  virtual void* native_pointer(BufferId id) = 0;
  virtual void destroy_buffer(BufferId id) = 0;

  // Binds (allocating only on size change) and clears the colour/depth target.
  virtual void bind_target(int width, int height, const std::array<std::uint8_t, 4>& clear) = 0;
  virtual void set_scene_uniforms(const SceneUniforms& uniforms) = 0;
  virtual void draw_instanced(const InstancedDraw& draw, const ShadingUniforms& shading) = 0;

  // Whole target, rows bottom-up.
  virtual void read_pixels(std::span<std::uint8_t> out) const = 0;
  // Device-side partition of the bound target into S x H x W x 4, rows
  // top-down, written into `dst`.
  virtual void copy_tiles_to_buffer(BufferId dst, const TileLayout& layout) = 0;
  // Blocks until all submitted work has completed.
  virtual void finish() = 0;
};

// Returns a hardware device, or null when none is usable. This build ships
// no hardware driver binding, so the probe always reports absence.
inline std::unique_ptr<Device> probe_hardware_device() { return nullptr; }

}  // namespace batchrender::gpu
