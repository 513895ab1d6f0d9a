#pragma once
// CPU implementation of gpu::Device with graphics-API semantics: float32
// vertex math, clip remap in the vertex stage, clipping against the remapped
// volume, a single atlas-wide viewport with a bottom-left origin and
// per-scene scissoring. It exists to exercise the hardware backend's
// formulation without a GPU; it is not a hardware device.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "batchrender/error.hpp"
#include "batchrender/gpu/device.hpp"

namespace batchrender::gpu {

class EmulatedDevice final : public Device {
 public:
  explicit EmulatedDevice(bool supports_device_resident = true) : device_resident_(supports_device_resident) {}

  DeviceInfo info() const override { return {"emulated", 1, 0, device_resident_}; }
  std::uint64_t allocation_count() const override { return allocations_; }

  BufferId create_buffer(std::size_t bytes) override {
    const BufferId id = next_id_++;
    buffers_[id].resize(bytes);
    ++allocations_;
    return id;
  }
  std::size_t buffer_size(BufferId id) const override { return buffer(id).size(); }
  void upload(BufferId id, std::span<const std::byte> bytes) override {
    auto& buf = buffer(id);
    if (bytes.size() > buf.size())
      throw ValueError(fmt::format("upload of {} bytes into buffer {} of {} bytes", bytes.size(), id, buf.size()));
    std::memcpy(buf.data(), bytes.data(), bytes.size());
  }
  void download(BufferId id, std::span<std::byte> out) const override {
    const auto& buf = buffer(id);
    std::memcpy(out.data(), buf.data(), std::min(out.size(), buf.size()));
  }
  void* native_pointer(BufferId id) override { return buffer(id).data(); }
  void destroy_buffer(BufferId id) override { buffers_.erase(id); }

  void bind_target(int width, int height, const std::array<std::uint8_t, 4>& clear) override {
    if (width != width_ || height != height_) {
      width_ = width;
      height_ = height;
      color_.assign(static_cast<std::size_t>(width) * height * 4, 0);
      depth_.assign(static_cast<std::size_t>(width) * height, 1.0f);
      ++allocations_;
    }
    for (std::size_t p = 0; p < color_.size(); p += 4) std::copy(clear.begin(), clear.end(), color_.begin() + p);
    std::fill(depth_.begin(), depth_.end(), 1.0f);
  }

  void set_scene_uniforms(const SceneUniforms& u) override {
    view_projections_.assign(u.view_projections.begin(), u.view_projections.end());
    remaps_.assign(u.clip_remaps.begin(), u.clip_remaps.end());
    scissors_.assign(u.scissors.begin(), u.scissors.end());
  }

  void draw_instanced(const InstancedDraw& draw, const ShadingUniforms& shading) override {
    const auto* models = reinterpret_cast<const float*>(buffer(draw.models).data());
    const auto* colors = reinterpret_cast<const float*>(buffer(draw.colors).data());
    const auto& verts = draw.mesh->vertices();
    world_.resize(verts.size());
    clip_.resize(verts.size());
    for (std::uint32_t k = 0; k < draw.instance_count; ++k) {
      const std::uint32_t scene = draw.first_scene + k / draw.instances_per_scene;
      const std::uint32_t row = draw.shared ? k % draw.instances_per_scene : k;
      const float* m = models + 16 * static_cast<std::size_t>(row);
      const float* vp = view_projections_.data() + 16 * static_cast<std::size_t>(scene);
      const float* remap = remaps_.data() + 4 * static_cast<std::size_t>(scene);
      for (std::size_t v = 0; v < verts.size(); ++v) {
        const std::array<float, 4> obj{static_cast<float>(verts[v].position.x), static_cast<float>(verts[v].position.y),
                                       static_cast<float>(verts[v].position.z), 1.0f};
        world_[v] = mul(m, obj);
        std::array<float, 4> c = mul(vp, world_[v]);
        c[0] = c[0] * remap[0] + c[3] * remap[2];
        c[1] = c[1] * remap[1] + c[3] * remap[3];
        clip_[v] = c;
      }
      const float* rgba = colors + 4 * static_cast<std::size_t>(row);
      const std::int32_t* sc = scissors_.data() + 4 * static_cast<std::size_t>(scene);
      for (const Triangle& tri : draw.mesh->triangles())
        triangle(tri, rgba, shading, sc, draw.cull_back_faces);
    }
  }

  void read_pixels(std::span<std::uint8_t> out) const override {
    std::copy_n(color_.begin(), std::min(out.size(), color_.size()), out.begin());
  }

  void copy_tiles_to_buffer(BufferId dst, const TileLayout& layout) override {
    auto& buf = buffer(dst);
    const std::size_t row_bytes = static_cast<std::size_t>(layout.tile_width) * 4;
    const std::size_t frame = row_bytes * layout.tile_height;
    if (buf.size() < frame * layout.scene_count) throw ValueError("frame buffer too small for layout");
    for (int s = 0; s < layout.scene_count; ++s) {
      const int x0 = (s % layout.cols) * layout.tile_width;
      const int top = (s / layout.cols) * layout.tile_height;
      for (int y = 0; y < layout.tile_height; ++y) {
        const int win_row = height_ - 1 - (top + y);
        const auto* src = color_.data() + (static_cast<std::size_t>(win_row) * width_ + x0) * 4;
        std::memcpy(buf.data() + frame * s + row_bytes * y, src, row_bytes);
      }
    }
  }

  void finish() override {}

 private:
  using V4 = std::array<float, 4>;
  struct Win {
    float x, y, z;
  };

  static V4 mul(const float* m, const V4& v) {
    return {m[0] * v[0] + m[4] * v[1] + m[8] * v[2] + m[12] * v[3],
            m[1] * v[0] + m[5] * v[1] + m[9] * v[2] + m[13] * v[3],
            m[2] * v[0] + m[6] * v[1] + m[10] * v[2] + m[14] * v[3],
            m[3] * v[0] + m[7] * v[1] + m[11] * v[2] + m[15] * v[3]};
  }

  static float plane(const V4& v, int p) {
    const float s = (p & 1) ? -1.0f : 1.0f;
    return v[3] + s * v[static_cast<std::size_t>(p / 2)];
  }

  static std::uint8_t unorm8(float v) {
    return static_cast<std::uint8_t>(std::lround(255.0f * std::clamp(v, 0.0f, 1.0f)));
  }

  void triangle(const Triangle& tri, const float* rgba, const ShadingUniforms& sh, const std::int32_t* sc, bool cull) {
    // Flat shading from the world-space geometric normal.
    const V4 &w0 = world_[tri[0]], &w1 = world_[tri[1]], &w2 = world_[tri[2]];
    const float e1[3] = {w1[0] - w0[0], w1[1] - w0[1], w1[2] - w0[2]};
    const float e2[3] = {w2[0] - w0[0], w2[1] - w0[1], w2[2] - w0[2]};
    float n[3] = {e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2], e1[0] * e2[1] - e1[1] * e2[0]};
    const float len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    float intensity = 1.0f;
    if (sh.lambert) {
      const float ndotl = len > 0 ? (n[0] * sh.light_dir[0] + n[1] * sh.light_dir[1] + n[2] * sh.light_dir[2]) / len : 0;
      intensity = sh.ambient + sh.diffuse * std::max(0.0f, ndotl);
    }
    const std::array<std::uint8_t, 4> out{unorm8(rgba[0] * intensity), unorm8(rgba[1] * intensity),
                                          unorm8(rgba[2] * intensity), unorm8(rgba[3])};

    poly_.assign({clip_[tri[0]], clip_[tri[1]], clip_[tri[2]]});
    for (int p = 0; p < 6 && poly_.size() >= 3; ++p) {
      tmp_.clear();
      for (std::size_t k = 0; k < poly_.size(); ++k) {
        const V4& a = poly_[k];
        const V4& b = poly_[(k + 1) % poly_.size()];
        const float da = plane(a, p), db = plane(b, p);
        if (da >= 0) tmp_.push_back(a);
        if ((da >= 0) != (db >= 0)) {
          const float t = da / (da - db);
          tmp_.push_back({a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2]),
                          a[3] + t * (b[3] - a[3])});
        }
      }
      poly_.swap(tmp_);
    }
    if (poly_.size() < 3) return;

    win_.clear();
    for (const V4& v : poly_) {
      if (!(v[3] > 0)) return;
      win_.push_back({(v[0] / v[3] + 1) * 0.5f * width_, (v[1] / v[3] + 1) * 0.5f * height_, (v[2] / v[3] + 1) * 0.5f});
    }
    float area = 0;
    for (std::size_t k = 0; k < win_.size(); ++k) {
      const Win& a = win_[k];
      const Win& b = win_[(k + 1) % win_.size()];
      area += a.x * b.y - b.x * a.y;
    }
    // Window y points up: front faces are counter-clockwise, positive area.
    if (area == 0 || (cull && area < 0)) return;
    for (std::size_t k = 1; k + 1 < win_.size(); ++k) fill(win_[0], win_[k], win_[k + 1], out, sc);
  }

  static float edge(const Win& p, const Win& q, float x, float y) {
    return (q.x - p.x) * (y - p.y) - (q.y - p.y) * (x - p.x);
  }

  void fill(Win a, Win b, Win c, const std::array<std::uint8_t, 4>& rgba, const std::int32_t* sc) {
    float area = edge(a, b, c.x, c.y);
    if (area == 0) return;
    if (area < 0) {
      std::swap(b, c);
      area = -area;
    }
    const int x_lo = std::max(sc[0], static_cast<int>(std::ceil(std::min({a.x, b.x, c.x}) - 0.5f)));
    const int x_hi = std::min(sc[0] + sc[2] - 1, static_cast<int>(std::floor(std::max({a.x, b.x, c.x}) - 0.5f)));
    const int y_lo = std::max(sc[1], static_cast<int>(std::ceil(std::min({a.y, b.y, c.y}) - 0.5f)));
    const int y_hi = std::min(sc[1] + sc[3] - 1, static_cast<int>(std::floor(std::max({a.y, b.y, c.y}) - 0.5f)));
    // Counter-clockwise in y-up space: owned edges are those pointing down
    // or exactly horizontal to the left.
    auto owns = [](const Win& p, const Win& q) { return q.y < p.y || (q.y == p.y && q.x < p.x); };
    const bool o_ab = owns(a, b), o_bc = owns(b, c), o_ca = owns(c, a);
    for (int y = y_lo; y <= y_hi; ++y) {
      const float py = static_cast<float>(y) + 0.5f;
      for (int x = x_lo; x <= x_hi; ++x) {
        const float px = static_cast<float>(x) + 0.5f;
        const float e_bc = edge(b, c, px, py), e_ca = edge(c, a, px, py), e_ab = edge(a, b, px, py);
        if (e_bc < 0 || e_ca < 0 || e_ab < 0) continue;
        if ((e_bc == 0 && !o_bc) || (e_ca == 0 && !o_ca) || (e_ab == 0 && !o_ab)) continue;
        const float z = (e_bc * a.z + e_ca * b.z + e_ab * c.z) / area;
        const std::size_t idx = static_cast<std::size_t>(y) * width_ + x;
        if (!(z < depth_[idx])) continue;
        depth_[idx] = z;
        std::copy(rgba.begin(), rgba.end(), color_.begin() + static_cast<std::ptrdiff_t>(idx * 4));
      }
    }
  }

  std::vector<std::byte>& buffer(BufferId id) {
    auto it = buffers_.find(id);
    if (it == buffers_.end()) throw ValueError(fmt::format("unknown device buffer {}", id));
    return it->second;
  }
  const std::vector<std::byte>& buffer(BufferId id) const {
    auto it = buffers_.find(id);
    if (it == buffers_.end()) throw ValueError(fmt::format("unknown device buffer {}", id));
    return it->second;
  }

  bool device_resident_;
  std::uint64_t allocations_ = 0;
  BufferId next_id_ = 1;
  std::map<BufferId, std::vector<std::byte>> buffers_;
  int width_ = 0, height_ = 0;
  std::vector<std::uint8_t> color_;
  std::vector<float> depth_;
  std::vector<float> view_projections_, remaps_;
  std::vector<std::int32_t> scissors_;
  std::vector<V4> world_, clip_, poly_, tmp_;
  std::vector<Win> win_;
};

}  // namespace batchrender::gpu
