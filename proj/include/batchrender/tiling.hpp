#pragma once
// Atlas grid planning and conversion between the atlas image and per-scene
// frames.
//
// Scene s sits at row s / C, column s % C of a C x R grid (row 0 at the top).
// Images are RGBA8 with a top-left origin and tightly packed rows.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "batchrender/error.hpp"
#include "batchrender/math.hpp"

namespace batchrender {

inline constexpr int kDefaultMaxAtlasDim = 16384;

struct TileLayout {
  int scene_count = 0;
  int cols = 0;
  int rows = 0;
  int tile_width = 0;
  int tile_height = 0;

  int atlas_width() const { return cols * tile_width; }
  int atlas_height() const { return rows * tile_height; }
  bool operator==(const TileLayout&) const = default;
};

struct PixelRect {
  int x0 = 0, y0 = 0, width = 0, height = 0;
  bool operator==(const PixelRect&) const = default;
};

struct TileSlot {
  int row = 0, col = 0;
  PixelRect rect;
  ClipRemap remap;
};

inline TileLayout plan_layout(int scene_count, int width, int height, int max_atlas_dim = kDefaultMaxAtlasDim) {
  if (scene_count < 1) throw ValueError("scene_count must be ≥ 1");
  if (width < 1 || height < 1) throw ValueError(fmt::format("tile size must be positive, got {}x{}", width, height));
  int cols = 1;
  while (static_cast<long long>(cols) * cols < scene_count) ++cols;
  const int rows = (scene_count + cols - 1) / cols;
  const long long atlas_w = static_cast<long long>(cols) * width;
  const long long atlas_h = static_cast<long long>(rows) * height;
  if (atlas_w > max_atlas_dim || atlas_h > max_atlas_dim)
    throw LayoutError(fmt::format(
        "atlas of {}x{} px for {} scenes at {}x{} exceeds max_atlas_dim {}; shard the scenes across "
        "several renderer instances",
        atlas_w, atlas_h, scene_count, width, height, max_atlas_dim));
  return {scene_count, cols, rows, width, height};
}

inline TileSlot tile_slot(const TileLayout& layout, int s) {
  if (s < 0 || s >= layout.scene_count)
    throw LayoutError(fmt::format("scene index {} out of range [0, {})", s, layout.scene_count));
  TileSlot slot;
  slot.row = s / layout.cols;
  slot.col = s % layout.cols;
  slot.rect = {slot.col * layout.tile_width, slot.row * layout.tile_height, layout.tile_width, layout.tile_height};
  slot.remap = clip_remap_for_tile(layout.rows, layout.cols, slot.row, slot.col);
  return slot;
}

inline PixelRect tile_rect(const TileLayout& layout, int s) { return tile_slot(layout, s).rect; }

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgba;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgba(static_cast<std::size_t>(w) * h * 4, 0) {}

  std::uint8_t* pixel(int x, int y) { return rgba.data() + (static_cast<std::size_t>(y) * width + x) * 4; }
  const std::uint8_t* pixel(int x, int y) const {
    return rgba.data() + (static_cast<std::size_t>(y) * width + x) * 4;
  }
  bool operator==(const Image&) const = default;
};

// S x H x W x 4 unsigned bytes, frame-major then rows, top-left origin.
struct FrameBatch {
  int scenes = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  FrameBatch() = default;
  FrameBatch(int s, int h, int w) : scenes(s), height(h), width(w), data(frame_bytes(h, w) * s, 0) {}

  static std::size_t frame_bytes(int h, int w) { return static_cast<std::size_t>(h) * w * 4; }
  std::size_t frame_bytes() const { return frame_bytes(height, width); }
  std::size_t size_bytes() const { return data.size(); }

  std::span<std::uint8_t> frame(int s) { return {data.data() + frame_bytes() * s, frame_bytes()}; }
  std::span<const std::uint8_t> frame(int s) const { return {data.data() + frame_bytes() * s, frame_bytes()}; }

  const std::uint8_t* pixel(int s, int x, int y) const {
    return data.data() + frame_bytes() * s + (static_cast<std::size_t>(y) * width + x) * 4;
  }

  bool operator==(const FrameBatch&) const = default;
};

namespace detail {

inline void copy_rect_out(const std::uint8_t* src, int src_width, const PixelRect& r, std::uint8_t* dst) {
  const std::size_t row_bytes = static_cast<std::size_t>(r.width) * 4;
  for (int y = 0; y < r.height; ++y) {
    const std::uint8_t* from = src + ((static_cast<std::size_t>(r.y0) + y) * src_width + r.x0) * 4;
    std::copy_n(from, row_bytes, dst + y * row_bytes);
  }
}

inline void require_atlas_matches(const Image& atlas, const TileLayout& layout) {
  if (atlas.width != layout.atlas_width() || atlas.height != layout.atlas_height())
    throw ShapeError(fmt::format("atlas is {}x{} but layout expects {}x{}", atlas.width, atlas.height,
                                 layout.atlas_width(), layout.atlas_height()));
}

}  // namespace detail

// Writes into a preallocated batch; reshapes `out` only when needed.
inline void partition_atlas_into(const Image& atlas, const TileLayout& layout, FrameBatch& out) {
  detail::require_atlas_matches(atlas, layout);
  if (out.scenes != layout.scene_count || out.height != layout.tile_height || out.width != layout.tile_width)
    out = FrameBatch(layout.scene_count, layout.tile_height, layout.tile_width);
  for (int s = 0; s < layout.scene_count; ++s)
    detail::copy_rect_out(atlas.rgba.data(), atlas.width, tile_rect(layout, s), out.frame(s).data());
}

inline FrameBatch partition_atlas(const Image& atlas, const TileLayout& layout) {
  FrameBatch out;
  partition_atlas_into(atlas, layout, out);
  return out;
}

// Inverse of partition_atlas on the used tiles; blank tiles are filled with
// `blank` (RGBA8).
inline Image stitch_frames(const FrameBatch& frames, const TileLayout& layout,
                           std::array<std::uint8_t, 4> blank = {0, 0, 0, 0}) {
  if (frames.scenes != layout.scene_count || frames.height != layout.tile_height ||
      frames.width != layout.tile_width)
    throw ShapeError(fmt::format("frame batch {}x{}x{} does not match layout {}x{}x{}", frames.scenes,
                                 frames.height, frames.width, layout.scene_count, layout.tile_height,
                                 layout.tile_width));
  Image atlas(layout.atlas_width(), layout.atlas_height());
  for (std::size_t p = 0; p < atlas.rgba.size(); p += 4) std::copy(blank.begin(), blank.end(), atlas.rgba.begin() + p);
  const std::size_t row_bytes = static_cast<std::size_t>(layout.tile_width) * 4;
  for (int s = 0; s < layout.scene_count; ++s) {
    const PixelRect r = tile_rect(layout, s);
    const std::uint8_t* src = frames.frame(s).data();
    for (int y = 0; y < r.height; ++y)
      std::copy_n(src + y * row_bytes, row_bytes, atlas.pixel(r.x0, r.y0 + y));
  }
  return atlas;
}

// Binary PPM (P6), alpha dropped.
inline void write_ppm(const std::filesystem::path& path, std::span<const std::uint8_t> rgba, int width, int height) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out << "P6\n" << width << " " << height << "\n255\n";
  std::vector<char> rgb(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t p = 0, q = 0; q < rgb.size(); p += 4, q += 3) {
    rgb[q] = static_cast<char>(rgba[p]);
    rgb[q + 1] = static_cast<char>(rgba[p + 1]);
    rgb[q + 2] = static_cast<char>(rgba[p + 2]);
  }
  out.write(rgb.data(), static_cast<std::streamsize>(rgb.size()));
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

// Reads a P6 file written by write_ppm; alpha comes back as 255.
inline Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w < 1 || h < 1 || maxval != 255)
    throw IoError(fmt::format("'{}' is not an 8-bit binary PPM", path.string()));
  in.get();
  std::vector<char> rgb(static_cast<std::size_t>(w) * h * 3);
  in.read(rgb.data(), static_cast<std::streamsize>(rgb.size()));
  if (!in) throw IoError(fmt::format("'{}' is truncated", path.string()));
  Image img(w, h);
  for (std::size_t p = 0, q = 0; q < rgb.size(); p += 4, q += 3) {
    img.rgba[p] = static_cast<std::uint8_t>(rgb[q]);
    img.rgba[p + 1] = static_cast<std::uint8_t>(rgb[q + 1]);
    img.rgba[p + 2] = static_cast<std::uint8_t>(rgb[q + 2]);
    img.rgba[p + 3] = 255;
  }
  return img;
}

// Writes frame_<s>.ppm for every scene into `dir` (created if missing).
inline void dump_frames(const FrameBatch& frames, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (int s = 0; s < frames.scenes; ++s)
    write_ppm(dir / fmt::format("frame_{}.ppm", s), frames.frame(s), frames.width, frames.height);
}

}  // namespace batchrender
