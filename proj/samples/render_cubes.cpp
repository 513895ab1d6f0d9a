// Renders a small batch of spinning cubes with the instanced path and writes
// one PPM per scene.
//
//   render_cubes [out_dir] [scenes]

#include <cstdlib>
#include <iostream>
#include <string>

#include "batchrender/batchrender.hpp"

namespace br = batchrender;

int main(int argc, char** argv) {
  const std::string out_dir = argc > 1 ? argv[1] : "cubes_out";
  const int scenes = argc > 2 ? std::atoi(argv[2]) : 9;

  try {
    br::BatchSpec spec;
    spec.scene_count = scenes;
    spec.frame_width = 96;
    spec.frame_height = 96;
    spec.clear_color = {0.1, 0.1, 0.12, 1};
    spec.groups = {{"floor", br::mesh::plane(), 1, true, true}, {"cube", br::mesh::unit_cube(), 2, false, true}};
    br::BatchState state = br::create_batch(spec);

    const auto n = static_cast<std::size_t>(scenes);
    state.set_instance_transforms(0, br::Tensor({1, 3}, 0.0), br::Tensor({1, 3}, 0.0), br::Tensor({1, 3}, {6.0, 6.0, 1.0}));
    state.set_instance_colors(0, br::Tensor({1, 4}, {0.4, 0.4, 0.4, 1.0}));

    br::Tensor pos({n, 2, 3}), hpr({n, 2, 3}), scale({n, 2, 1}, 0.6), color({n, 2, 4});
    for (std::size_t s = 0; s < n; ++s) {
      const double spin = 90.0 * static_cast<double>(s) / static_cast<double>(n);
      for (std::size_t i = 0; i < 2; ++i) {
        const std::size_t k = s * 2 + i;
        pos.values[k * 3 + 0] = i == 0 ? -0.6 : 0.6;
        pos.values[k * 3 + 2] = 0.3;
        hpr.values[k * 3 + 0] = spin * (i == 0 ? 1 : -1);
        color.values[k * 4 + 0] = i == 0 ? 0.9 : 0.2;
        color.values[k * 4 + 1] = 0.4;
        color.values[k * 4 + 2] = i == 0 ? 0.2 : 0.9;
        color.values[k * 4 + 3] = 1.0;
      }
    }
    state.set_instance_transforms(1, std::move(pos), std::move(hpr), std::move(scale));
    state.set_instance_colors(1, std::move(color));
    state.set_cameras(std::vector<br::CameraPose>(n, br::CameraPose{{0, -3.5, 1.5}, {0, -20, 0}}),
                      std::vector<br::ProjectionParams>(n));

    const br::TileLayout layout = br::plan_layout(scenes, spec.frame_width, spec.frame_height);
    br::SoftRenderer renderer(br::ShadingConfig{});
    renderer.render_instanced(state, layout);
    const br::FrameBatch frames = renderer.readback(renderer.target(), layout);
    br::dump_frames(frames, out_dir);
    br::write_ppm(std::filesystem::path(out_dir) / "atlas.ppm", renderer.target().color.rgba,
                  layout.atlas_width(), layout.atlas_height());
    std::cout << "wrote " << scenes << " frames and atlas.ppm to " << out_dir << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
