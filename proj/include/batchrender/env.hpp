#pragma once
// Physics-agnostic vectorised environment: actions in, pixel observations
// out. Scene dynamics are a pluggable hook; a cart-pole balance task with
// explicit-Euler stub dynamics is included to drive benchmarks.
//
// Seeding is per scene: scene s of an environment whose first global scene
// index is `scene_offset` draws its episode-e initial state from
// scene_seed(seed, scene_offset + s, e). Sharding scenes across several
// environments therefore reproduces the same per-scene trajectories.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "batchrender/batch_state.hpp"
#include "batchrender/error.hpp"
#include "batchrender/gpu/gpu_backend.hpp"
#include "batchrender/mesh.hpp"
#include "batchrender/renderer.hpp"
#include "batchrender/soft_backend.hpp"
#include "batchrender/tiling.hpp"

namespace batchrender {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t scene_seed(std::uint64_t base_seed, std::uint64_t global_scene, std::uint64_t episode) {
  return splitmix64(splitmix64(splitmix64(base_seed) ^ global_scene) ^ episode);
}

// Hook that owns per-scene simulation state and mirrors it into a batch.
class SceneDynamics {
 public:
  virtual ~SceneDynamics() = default;
  virtual void reset_scene(int s, std::uint64_t seed) = 0;
  // Advances every scene by one step; fills rewards and dones (size S).
  virtual void step(std::span<const real> actions, std::span<real> rewards, std::span<bool> dones) = 0;
  virtual void write_to(BatchState& state) const = 0;
};

struct CartPoleParams {
  real dt = 0.02;
  real mass_cart = 1.0;
  real mass_pole = 0.1;
  real length = 0.5;  // half the pole length, as in the classic formulation
  real gravity = 9.8;
  real force_mag = 10.0;
  real theta_threshold = 0.2095;
  real x_threshold = 2.4;
  bool operator==(const CartPoleParams&) const = default;
};

struct CartPoleState {
  real x = 0;
  real x_dot = 0;
  real theta = 0;
  real theta_dot = 0;
  bool operator==(const CartPoleState&) const = default;
};

// One explicit-Euler step of the classic cart-pole equations.
inline CartPoleState cartpole_step(const CartPoleState& s, real action, const CartPoleParams& p) {
  const real force = p.force_mag * action;
  const real total_mass = p.mass_cart + p.mass_pole;
  const real pole_mass_length = p.mass_pole * p.length;
  const real cos_t = std::cos(s.theta), sin_t = std::sin(s.theta);
  const real temp = (force + pole_mass_length * s.theta_dot * s.theta_dot * sin_t) / total_mass;
  const real theta_acc =
      (p.gravity * sin_t - cos_t * temp) / (p.length * (4.0 / 3.0 - p.mass_pole * cos_t * cos_t / total_mass));
  const real x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;
  CartPoleState n;
  n.x = s.x + p.dt * s.x_dot;
  n.x_dot = s.x_dot + p.dt * x_acc;
  n.theta = s.theta + p.dt * s.theta_dot;
  n.theta_dot = s.theta_dot + p.dt * theta_acc;
  return n;
}

// Group order of the cart-pole batch.
enum CartPoleGroup : std::size_t { kGround = 0, kCart = 1, kPole = 2 };

class CartPoleDynamics final : public SceneDynamics {
 public:
  CartPoleDynamics(int scenes, CartPoleParams params) : params_(params), states_(static_cast<std::size_t>(scenes)) {}

  const CartPoleParams& params() const { return params_; }
  std::span<const CartPoleState> states() const { return states_; }
  std::span<CartPoleState> states() { return states_; }

  void reset_scene(int s, std::uint64_t seed) override {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<real> theta(-0.05, 0.05);
    states_.at(static_cast<std::size_t>(s)) = CartPoleState{0, 0, theta(rng), 0};
  }

  void step(std::span<const real> actions, std::span<real> rewards, std::span<bool> dones) override {
    for (std::size_t s = 0; s < states_.size(); ++s) {
      CartPoleState& st = states_[s];
      st = cartpole_step(st, actions[s], params_);
      const bool upright = std::abs(st.theta) < params_.theta_threshold;
      rewards[s] = upright ? 1.0 : 0.0;
      dones[s] = !upright || std::abs(st.x) > params_.x_threshold || !std::isfinite(st.theta);
    }
  }

  void write_to(BatchState& state) const override {
    const std::size_t n = states_.size();
    Tensor cart_pos({n, 1, 3}), pole_pos({n, 1, 3}), zero({n, 1, 3}), pole_hpr({n, 1, 3});
    Tensor cart_scale({n, 1, 3}), pole_scale({n, 1, 3});
    for (std::size_t s = 0; s < n; ++s) {
      const CartPoleState& st = states_[s];
      // Drawn angle wrapped into [-pi, pi].
      const real theta = std::remainder(st.theta, 2 * std::numbers::pi_v<real>);
      const real hinge_x = st.x, hinge_z = kCartHeight;
      set3(cart_pos, s, {st.x, 0, kCartHeight / 2});
      set3(cart_scale, s, {0.4, 0.2, kCartHeight});
      set3(pole_pos, s, {hinge_x + std::sin(theta) * kPoleLength / 2, -0.15, hinge_z + std::cos(theta) * kPoleLength / 2});
      set3(pole_hpr, s, {0, 0, theta * 180.0 / std::numbers::pi_v<real>});
      set3(pole_scale, s, {0.1, 0.1, kPoleLength});
    }
    state.set_instance_transforms(kCart, std::move(cart_pos), zero, std::move(cart_scale));
    state.set_instance_transforms(kPole, std::move(pole_pos), std::move(pole_hpr), std::move(pole_scale));
  }

  static constexpr real kCartHeight = 0.2;
  static constexpr real kPoleLength = 1.0;

 private:
  static void set3(Tensor& t, std::size_t row, const Vec3& v) {
    t.values[row * 3] = v.x;
    t.values[row * 3 + 1] = v.y;
    t.values[row * 3 + 2] = v.z;
  }

  CartPoleParams params_;
  std::vector<CartPoleState> states_;
};

struct StepResult {
  const FrameBatch& observations;
  std::vector<real> rewards;
  std::vector<bool> dones;
};

class VecEnv {
 public:
  VecEnv(BatchState state, TileLayout layout, std::unique_ptr<FrameRenderer> renderer,
         std::unique_ptr<SceneDynamics> dynamics, std::uint64_t scene_offset = 0)
      : state_(std::move(state)),
        layout_(layout),
        renderer_(std::move(renderer)),
        dynamics_(std::move(dynamics)),
        scene_offset_(scene_offset),
        episodes_(static_cast<std::size_t>(state_.scene_count()), 0),
        observations_(state_.scene_count(), layout.tile_height, layout.tile_width) {
    if (layout_.scene_count != state_.scene_count())
      throw LayoutError(fmt::format("layout covers {} scenes but the batch has {}", layout_.scene_count,
                                    state_.scene_count()));
    if (!renderer_ || !dynamics_) throw ValueError("VecEnv needs a renderer and a dynamics hook");
  }

  int scene_count() const { return state_.scene_count(); }
  Shape observation_shape() const {
    return {static_cast<std::size_t>(scene_count()), static_cast<std::size_t>(layout_.tile_height),
            static_cast<std::size_t>(layout_.tile_width), 4};
  }
  const BatchState& state() const { return state_; }
  const TileLayout& layout() const { return layout_; }
  const FrameRenderer& renderer() const { return *renderer_; }
  SceneDynamics& dynamics() { return *dynamics_; }
  const FrameBatch& observations() const { return observations_; }
  std::uint64_t scene_offset() const { return scene_offset_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t episode(int s) const { return episodes_.at(static_cast<std::size_t>(s)); }

  // Resets every scene. `episodes`, when given, sets each scene's episode
  // counter (size S); otherwise all counters restart at 0.
  const FrameBatch& reset(std::uint64_t seed, std::span<const std::uint64_t> episodes = {}) {
    if (!episodes.empty() && episodes.size() != episodes_.size())
      throw ShapeError(fmt::format("reset: expected {} episode counters, got {}", episodes_.size(), episodes.size()));
    seed_ = seed;
    for (std::size_t s = 0; s < episodes_.size(); ++s) {
      episodes_[s] = episodes.empty() ? 0 : episodes[s];
      dynamics_->reset_scene(static_cast<int>(s), scene_seed(seed_, scene_offset_ + s, episodes_[s]));
    }
    render();
    return observations_;
  }

  StepResult step(std::span<const real> actions) {
    const auto n = static_cast<std::size_t>(scene_count());
    if (actions.size() != n) throw ShapeError(fmt::format("step: expected {} actions, got {}", n, actions.size()));
    for (std::size_t s = 0; s < n; ++s) {
      if (!(actions[s] >= -1 && actions[s] <= 1))
        throw ValueError(fmt::format("step: action {} = {} outside [-1, 1]", s, actions[s]));
    }
    std::vector<real> rewards(n);
    auto dones = std::make_unique<bool[]>(n);
    dynamics_->step(actions, rewards, std::span<bool>(dones.get(), n));
    std::vector<bool> done_flags(n);
    for (std::size_t s = 0; s < n; ++s) {
      done_flags[s] = dones[s];
      if (dones[s]) {
        ++episodes_[s];
        dynamics_->reset_scene(static_cast<int>(s), scene_seed(seed_, scene_offset_ + s, episodes_[s]));
      }
    }
    render();
    return {observations_, std::move(rewards), std::move(done_flags)};
  }

 private:
  void render() {
    dynamics_->write_to(state_);
    renderer_->render_frames(state_, layout_, observations_);
  }

  BatchState state_;
  TileLayout layout_;
  std::unique_ptr<FrameRenderer> renderer_;
  std::unique_ptr<SceneDynamics> dynamics_;
  std::uint64_t scene_offset_;
  std::uint64_t seed_ = 0;
  std::vector<std::uint64_t> episodes_;
  FrameBatch observations_;
};

// Environment configuration. JSON keys match the field names; only
// "scenes" is required and unknown keys are rejected.
struct EnvConfig {
  int scenes = 1;
  int width = 64;
  int height = 64;
  std::string backend = "soft";         // soft | gpu
  std::string render_path = "instanced";  // naive | tiled | instanced
  std::uint64_t seed = 0;
  std::uint64_t scene_offset = 0;
  int threads = 1;
  CartPoleParams dynamics;

  static EnvConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValueError("env config: expected a JSON object");
    if (!j.contains("scenes")) throw ValueError("env config: missing required key 'scenes'");
    EnvConfig c;
    for (const auto& [key, value] : j.items()) {
      try {
        if (key == "scenes") c.scenes = value.get<int>();
        else if (key == "width") c.width = value.get<int>();
        else if (key == "height") c.height = value.get<int>();
        else if (key == "backend") c.backend = value.get<std::string>();
        else if (key == "render_path") c.render_path = value.get<std::string>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "scene_offset") c.scene_offset = value.get<std::uint64_t>();
        else if (key == "threads") c.threads = value.get<int>();
        else if (key == "dynamics") c.dynamics = parse_dynamics(value);
        else throw ValueError(fmt::format("env config: unknown key '{}'", key));
      } catch (const nlohmann::json::exception& e) {
        throw ValueError(fmt::format("env config: bad value for '{}': {}", key, e.what()));
      }
    }
    return c;
  }

  static EnvConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open env config '{}'", path));
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValueError(fmt::format("env config '{}': {}", path, e.what()));
    }
    return from_json(j);
  }

  nlohmann::json to_json() const {
    return {{"scenes", scenes},
            {"width", width},
            {"height", height},
            {"backend", backend},
            {"render_path", render_path},
            {"seed", seed},
            {"scene_offset", scene_offset},
            {"threads", threads},
            {"dynamics",
             {{"dt", dynamics.dt},
              {"mass_cart", dynamics.mass_cart},
              {"mass_pole", dynamics.mass_pole},
              {"length", dynamics.length},
              {"gravity", dynamics.gravity},
              {"force_mag", dynamics.force_mag},
              {"theta_threshold", dynamics.theta_threshold},
              {"x_threshold", dynamics.x_threshold}}}};
  }

 private:
  static CartPoleParams parse_dynamics(const nlohmann::json& j) {
    if (!j.is_object()) throw ValueError("env config: 'dynamics' must be an object");
    CartPoleParams p;
    for (const auto& [key, value] : j.items()) {
      real* field = key == "dt"                ? &p.dt
                    : key == "mass_cart"       ? &p.mass_cart
                    : key == "mass_pole"       ? &p.mass_pole
                    : key == "length"          ? &p.length
                    : key == "gravity"         ? &p.gravity
                    : key == "force_mag"       ? &p.force_mag
                    : key == "theta_threshold" ? &p.theta_threshold
                    : key == "x_threshold"     ? &p.x_threshold
                                               : nullptr;
      if (!field) throw ValueError(fmt::format("env config: unknown key 'dynamics.{}'", key));
      *field = value.get<real>();
    }
    return p;
  }
};

inline RenderPath parse_render_path(const std::string& s) {
  if (s == "naive") return RenderPath::Naive;
  if (s == "tiled") return RenderPath::Tiled;
  if (s == "instanced") return RenderPath::Instanced;
  throw ValueError(fmt::format("unknown render path '{}' (expected naive, tiled or instanced)", s));
}

inline std::unique_ptr<FrameRenderer> make_frame_renderer(const std::string& backend, RenderPath path,
                                                          int threads = 1) {
  if (backend == "soft") return std::make_unique<SoftFrameRenderer>(path, ShadingConfig{}, SoftRendererOptions{threads});
  if (backend == "gpu") {
    const auto fp = path == RenderPath::Naive ? gpu::FramePath::HostCopy : gpu::FramePath::DeviceResident;
    return std::make_unique<gpu::GpuFrameRenderer>(gpu::GpuRenderer::create_hardware({}, path), fp);
  }
  throw ValueError(fmt::format("unknown backend '{}' (expected soft or gpu)", backend));
}

inline BatchSpec cartpole_batch_spec(int scenes, int width, int height) {
  BatchSpec spec;
  spec.scene_count = scenes;
  spec.frame_width = width;
  spec.frame_height = height;
  spec.clear_color = {0.55, 0.7, 0.9, 1};
  spec.groups = {{"ground", mesh::plane(), 1, true, true},
                 {"cart", mesh::unit_cube(), 1, false, true},
                 {"pole", mesh::cylinder(12), 1, false, true}};
  return spec;
}

// Cart-pole balance scene: shared ground plane, one cart box and one pole
// cylinder per scene, identical fixed cameras.
inline VecEnv make_cartpole_env(const EnvConfig& config, std::unique_ptr<FrameRenderer> renderer) {
  if (config.scenes < 1) throw ValueError("scene_count must be ≥ 1");
  const TileLayout layout = plan_layout(config.scenes, config.width, config.height);
  BatchState state = create_batch(cartpole_batch_spec(config.scenes, config.width, config.height));

  state.set_instance_transforms(kGround, Tensor({1, 3}, 0.0), Tensor({1, 3}, 0.0), Tensor({1, 3}, {16.0, 16.0, 1.0}));
  state.set_instance_colors(kGround, Tensor({1, 4}, {0.45, 0.5, 0.42, 1.0}));
  const auto n = static_cast<std::size_t>(config.scenes);
  Tensor cart_color({n, 1, 4}), pole_color({n, 1, 4});
  constexpr std::array<real, 4> kCartRgba{0.2, 0.35, 0.8, 1.0};
  constexpr std::array<real, 4> kPoleRgba{0.9, 0.55, 0.2, 1.0};
  for (std::size_t s = 0; s < n; ++s) {
    std::copy(kCartRgba.begin(), kCartRgba.end(), cart_color.values.begin() + 4 * s);
    std::copy(kPoleRgba.begin(), kPoleRgba.end(), pole_color.values.begin() + 4 * s);
  }
  state.set_instance_colors(kCart, std::move(cart_color));
  state.set_instance_colors(kPole, std::move(pole_color));

  ProjectionParams proj;
  proj.aspect = static_cast<real>(config.width) / config.height;
  state.set_cameras(std::vector<CameraPose>(n, CameraPose{{0, -4.5, 1.0}, {0, -8, 0}}),
                    std::vector<ProjectionParams>(n, proj));

  return VecEnv(std::move(state), layout, std::move(renderer),
                std::make_unique<CartPoleDynamics>(config.scenes, config.dynamics), config.scene_offset);
}

inline VecEnv make_cartpole_env(const EnvConfig& config) {
  if (config.scenes < 1) throw ValueError("scene_count must be ≥ 1");
  plan_layout(config.scenes, config.width, config.height);
  return make_cartpole_env(config, make_frame_renderer(config.backend, parse_render_path(config.render_path),
                                                       config.threads));
}

inline VecEnv make_cartpole_env(int scenes, int width = 64, int height = 64, const std::string& backend = "soft") {
  EnvConfig c;
  c.scenes = scenes;
  c.width = width;
  c.height = height;
  c.backend = backend;
  return make_cartpole_env(c);
}

}  // namespace batchrender
