#pragma once
// Throughput harness reproducing the cumulative ablation: each stage enables
// one more optimisation on top of the previous ones.
//
//   naive     -> one target per scene, one draw per instance
//   tiled     -> single atlas target
//   readback  -> tiled + device-resident frame export (gpu only; a flagged
//                no-op on the soft backend)
//   instanced -> one draw per model group
//   workers   -> k independent processes, each running the instanced stage
//                on a contiguous shard of the scenes
//
// FPS counts observation frames per wall-second: scenes * steps / seconds.
// The timed loop includes the cart-pole stub dynamics and random actions.

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "batchrender/env.hpp"
#include "batchrender/error.hpp"
#include "batchrender/gpu/gpu_backend.hpp"
#include "batchrender/renderer.hpp"
#include "batchrender/soft_backend.hpp"

namespace batchrender::bench {

// Invalid command-line or configuration input (exit code 2).
class UsageError : public Error {
 public:
  using Error::Error;
};

enum class Stage { Naive, Tiled, Readback, Instanced, Workers };
enum class Backend { Soft, Gpu };
enum class Format { Json, Csv };

inline constexpr int kWarmupFrames = 10;

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::Naive: return "naive";
    case Stage::Tiled: return "tiled";
    case Stage::Readback: return "readback";
    case Stage::Instanced: return "instanced";
    case Stage::Workers: return "workers";
  }
  return "?";
}

inline std::string to_string(Backend b) { return b == Backend::Soft ? "soft" : "gpu"; }

inline Stage parse_stage(const std::string& s) {
  for (Stage st : {Stage::Naive, Stage::Tiled, Stage::Readback, Stage::Instanced, Stage::Workers})
    if (to_string(st) == s) return st;
  throw UsageError(fmt::format("unknown stage '{}' (expected naive, tiled, readback, instanced or workers)", s));
}

inline Backend parse_backend(const std::string& s) {
  if (s == "soft") return Backend::Soft;
  if (s == "gpu") return Backend::Gpu;
  throw UsageError(fmt::format("unknown backend '{}' (expected soft or gpu)", s));
}

inline Format parse_format(const std::string& s) {
  if (s == "json") return Format::Json;
  if (s == "csv") return Format::Csv;
  throw UsageError(fmt::format("unknown format '{}' (expected json or csv)", s));
}

struct BenchConfig {
  Stage stage = Stage::Instanced;
  int scenes = 64;
  int width = 64;
  int height = 64;
  int frames = 100;
  Backend backend = Backend::Soft;
  int workers = 1;
  std::uint64_t seed = 0;
  std::string out = "-";

  void validate() const {
    if (scenes < 1) throw UsageError("--scenes must be ≥ 1");
    if (width < 1 || height < 1) throw UsageError("--width and --height must be ≥ 1");
    if (frames < 1) throw UsageError("--frames must be ≥ 1");
    if (workers < 1) throw UsageError("--workers must be ≥ 1");
    if (workers > 1 && stage != Stage::Workers) throw UsageError("--workers > 1 requires --stage workers");
    if (workers > scenes) throw UsageError(fmt::format("--workers {} exceeds --scenes {}", workers, scenes));
  }

  bool operator==(const BenchConfig&) const = default;
};

struct WorkerReport {
  int worker = 0;
  int scene_offset = 0;
  int scenes = 0;
  double wall_seconds = 0;
  double fps = 0;
  RenderStats stats;
  std::string final_frame_checksum;
  std::vector<std::uint64_t> scene_digests;

  bool operator==(const WorkerReport&) const = default;
};

struct HostInfo {
  std::string hostname;
  unsigned hardware_threads = 0;
  std::string compiler;
  bool operator==(const HostInfo&) const = default;
};

struct BenchReport {
  BenchConfig config;
  std::string render_path;
  double wall_seconds = 0;
  double fps = 0;
  RenderStats stats;
  std::vector<WorkerReport> workers;
  HostInfo host;
  std::string final_frame_checksum;
  bool includes_dynamics = true;
  bool counter_laws_verified = false;
  std::vector<std::string> notes;

  bool operator==(const BenchReport&) const = default;
};

// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::vector<std::uint64_t> frame_digests(const FrameBatch& frames) {
  std::vector<std::uint64_t> out;
  out.reserve(static_cast<std::size_t>(frames.scenes));
  for (int s = 0; s < frames.scenes; ++s) out.push_back(fnv1a(frames.frame(s)));
  return out;
}

// Checksum of a frame batch: FNV-1a over the little-endian per-scene frame
// digests in scene order, so shards can be combined without the pixels.
inline std::string combine_digests(std::span<const std::uint64_t> digests) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint64_t d : digests) {
    std::uint8_t le[8];
    for (int k = 0; k < 8; ++k) le[k] = static_cast<std::uint8_t>(d >> (8 * k));
    h = fnv1a(le, h);
  }
  return fmt::format("{:016x}", h);
}

inline std::string frames_checksum(const FrameBatch& frames) { return combine_digests(frame_digests(frames)); }

inline RenderPath stage_render_path(Stage s) {
  switch (s) {
    case Stage::Naive: return RenderPath::Naive;
    case Stage::Tiled:
    case Stage::Readback: return RenderPath::Tiled;
    case Stage::Instanced:
    case Stage::Workers: return RenderPath::Instanced;
  }
  return RenderPath::Instanced;
}

// Returns a description of the first violated counter law, if any. `per_step`
// is the expected work of one render; `steps` renders were timed.
inline std::optional<std::string> check_counter_laws(const RenderStats& per_step, std::uint64_t steps,
                                                     const RenderStats& measured) {
  auto check = [&](const char* name, std::uint64_t expected, std::uint64_t got) -> std::optional<std::string> {
    if (expected == got) return std::nullopt;
    return fmt::format("counter law violated: {} expected {} got {}", name, expected, got);
  };
  if (auto e = check("target_binds", per_step.target_binds * steps, measured.target_binds)) return e;
  if (auto e = check("draw_calls", per_step.draw_calls * steps, measured.draw_calls)) return e;
  if (auto e = check("instances_drawn", per_step.instances_drawn * steps, measured.instances_drawn)) return e;
  if (auto e = check("frames_produced", per_step.frames_produced * steps, measured.frames_produced)) return e;
  return std::nullopt;
}

inline HostInfo host_info() {
  HostInfo h;
  char name[256] = {};
  if (gethostname(name, sizeof(name) - 1) == 0) h.hostname = name;
  h.hardware_threads = std::thread::hardware_concurrency();
#if defined(__VERSION__)
  h.compiler = __VERSION__;
#endif
  return h;
}

namespace detail {

inline std::unique_ptr<FrameRenderer> make_stage_renderer(const BenchConfig& c) {
  const RenderPath path = stage_render_path(c.stage);
  if (c.backend == Backend::Soft) return std::make_unique<SoftFrameRenderer>(path);
  const auto fp = c.stage == Stage::Naive || c.stage == Stage::Tiled ? gpu::FramePath::HostCopy
                                                                      : gpu::FramePath::DeviceResident;
  return std::make_unique<gpu::GpuFrameRenderer>(gpu::GpuRenderer::create_hardware({}, path), fp);
}

}  // namespace detail

// Runs the timed loop for scenes [scene_offset, scene_offset + scenes) in the
// calling process and verifies the counter laws. The final observations are
// copied to `final_frames` when given.
inline WorkerReport run_shard(const BenchConfig& c, int worker, int scene_offset, int scenes,
                              FrameBatch* final_frames = nullptr) {
  EnvConfig ec;
  ec.scenes = scenes;
  ec.width = c.width;
  ec.height = c.height;
  ec.seed = c.seed;
  ec.scene_offset = static_cast<std::uint64_t>(scene_offset);
  VecEnv env = make_cartpole_env(ec, detail::make_stage_renderer(c));

  std::vector<std::mt19937_64> action_rngs;
  action_rngs.reserve(static_cast<std::size_t>(scenes));
  for (int s = 0; s < scenes; ++s)
    action_rngs.emplace_back(scene_seed(c.seed ^ 0xac710e5ULL, static_cast<std::uint64_t>(scene_offset + s), 0));
  std::uniform_real_distribution<real> action_dist(-1.0, 1.0);
  std::vector<real> actions(static_cast<std::size_t>(scenes));
  auto next_actions = [&] {
    for (std::size_t s = 0; s < actions.size(); ++s) actions[s] = action_dist(action_rngs[s]);
  };

  env.reset(c.seed);
  for (int k = 0; k < kWarmupFrames; ++k) {
    next_actions();
    env.step(actions);
  }
  const RenderStats before = env.renderer().stats();
  const auto t0 = std::chrono::steady_clock::now();
  for (int k = 0; k < c.frames; ++k) {
    next_actions();
    env.step(actions);
  }
  const auto t1 = std::chrono::steady_clock::now();

  WorkerReport r;
  r.worker = worker;
  r.scene_offset = scene_offset;
  r.scenes = scenes;
  r.wall_seconds = std::max(std::chrono::duration<double>(t1 - t0).count(), 1e-9);
  r.fps = static_cast<double>(scenes) * c.frames / r.wall_seconds;
  r.stats = env.renderer().stats() - before;
  r.scene_digests = frame_digests(env.observations());
  r.final_frame_checksum = combine_digests(r.scene_digests);
  if (final_frames) *final_frames = env.observations();

  const RenderStats per_step = expected_stats(stage_render_path(c.stage), env.state());
  if (auto violation = check_counter_laws(per_step, static_cast<std::uint64_t>(c.frames), r.stats))
    throw Error(fmt::format("worker {}: {}", worker, *violation));
  return r;
}

inline nlohmann::json worker_to_json(const WorkerReport& w) {
  nlohmann::json digests = nlohmann::json::array();
  for (std::uint64_t d : w.scene_digests) digests.push_back(fmt::format("{:016x}", d));
  return {{"worker", w.worker},
          {"scene_offset", w.scene_offset},
          {"scenes", w.scenes},
          {"wall_seconds", w.wall_seconds},
          {"fps", w.fps},
          {"stats", w.stats},
          {"final_frame_checksum", w.final_frame_checksum},
          {"scene_digests", digests}};
}

inline WorkerReport worker_from_json(const nlohmann::json& j) {
  WorkerReport w;
  w.worker = j.at("worker").get<int>();
  w.scene_offset = j.at("scene_offset").get<int>();
  w.scenes = j.at("scenes").get<int>();
  w.wall_seconds = j.at("wall_seconds").get<double>();
  w.fps = j.at("fps").get<double>();
  w.stats = j.at("stats").get<RenderStats>();
  w.final_frame_checksum = j.at("final_frame_checksum").get<std::string>();
  for (const auto& d : j.at("scene_digests")) w.scene_digests.push_back(std::stoull(d.get<std::string>(), nullptr, 16));
  return w;
}

namespace detail {

inline void write_all(int fd, const std::string& data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n <= 0) return;
    done += static_cast<std::size_t>(n);
  }
}

inline std::string read_all(int fd) {
  std::string out;
  char buf[65536];
  for (;;) {
    const ssize_t n = ::read(fd, buf, sizeof(buf));
    if (n <= 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

// Forks one process per shard; each reports back as JSON over a pipe.
inline std::vector<WorkerReport> run_worker_processes(const BenchConfig& c) {
  struct Child {
    pid_t pid;
    int fd;
  };
  std::vector<Child> children;
  std::cout.flush();
  std::cerr.flush();
  for (int w = 0; w < c.workers; ++w) {
    const int begin = c.scenes * w / c.workers;
    const int end = c.scenes * (w + 1) / c.workers;
    int fds[2];
    if (::pipe(fds) != 0) throw Error("pipe() failed while spawning workers");
    const pid_t pid = ::fork();
    if (pid < 0) throw Error("fork() failed while spawning workers");
    if (pid == 0) {
      ::close(fds[0]);
      int code = 0;
      nlohmann::json msg;
      try {
        msg = worker_to_json(run_shard(c, w, begin, end - begin));
      } catch (const std::exception& e) {
        msg = {{"error", e.what()}};
        code = 1;
      }
      write_all(fds[1], msg.dump());
      ::close(fds[1]);
      ::_exit(code);
    }
    ::close(fds[1]);
    children.push_back({pid, fds[0]});
  }

  std::vector<WorkerReport> reports;
  std::string failure;
  for (const Child& ch : children) {
    const std::string payload = read_all(ch.fd);
    ::close(ch.fd);
    int status = 0;
    ::waitpid(ch.pid, &status, 0);
    try {
      const auto j = nlohmann::json::parse(payload);
      if (j.contains("error")) {
        if (failure.empty()) failure = j.at("error").get<std::string>();
        continue;
      }
      reports.push_back(worker_from_json(j));
    } catch (const nlohmann::json::exception&) {
      if (failure.empty()) failure = fmt::format("worker process {} exited without a report", ch.pid);
    }
  }
  if (!failure.empty()) throw Error(failure);
  return reports;
}

}  // namespace detail

// Runs one configuration. `final_frames`, when given, receives the frames of
// the last timed step for every scene; for the workers stage they come from an
// extra in-process pass, which is byte-identical by construction.
inline BenchReport run_benchmark(const BenchConfig& c, FrameBatch* final_frames = nullptr) {
  c.validate();
  if (c.backend == Backend::Gpu && !gpu::probe_hardware_device())
    throw BackendUnavailable("hardware backend unavailable: no GPU device found; rerun with --backend soft");

  BenchReport report;
  report.config = c;
  report.render_path = to_string(stage_render_path(c.stage));
  report.host = host_info();
  if (c.stage == Stage::Readback && c.backend == Backend::Soft)
    report.notes.push_back("readback stage is a no-op on the soft backend: frames are already in host memory, "
                           "so this run is identical to the tiled stage");

  if (c.stage == Stage::Workers) {
    report.workers = detail::run_worker_processes(c);
    if (final_frames) run_shard(c, 0, 0, c.scenes, final_frames);
  } else {
    report.workers.push_back(run_shard(c, 0, 0, c.scenes, final_frames));
  }

  std::vector<std::uint64_t> digests;
  for (const WorkerReport& w : report.workers) {
    report.stats += w.stats;
    report.fps += w.fps;
    report.wall_seconds = std::max(report.wall_seconds, w.wall_seconds);
    digests.insert(digests.end(), w.scene_digests.begin(), w.scene_digests.end());
  }
  report.final_frame_checksum = combine_digests(digests);
  if (report.stats.frames_produced != static_cast<std::uint64_t>(c.scenes) * c.frames)
    throw Error(fmt::format("frame accounting mismatch: produced {} frames, expected {}", report.stats.frames_produced,
                            static_cast<std::uint64_t>(c.scenes) * c.frames));
  report.counter_laws_verified = true;
  return report;
}

inline nlohmann::json to_json(const BenchReport& r) {
  nlohmann::json workers = nlohmann::json::array();
  for (const auto& w : r.workers) workers.push_back(worker_to_json(w));
  return {{"config",
           {{"stage", to_string(r.config.stage)},
            {"scenes", r.config.scenes},
            {"width", r.config.width},
            {"height", r.config.height},
            {"frames", r.config.frames},
            {"backend", to_string(r.config.backend)},
            {"workers", r.config.workers},
            {"seed", r.config.seed},
            {"out", r.config.out}}},
          {"render_path", r.render_path},
          {"wall_seconds", r.wall_seconds},
          {"fps", r.fps},
          {"stats", r.stats},
          {"workers", workers},
          {"host",
           {{"hostname", r.host.hostname}, {"hardware_threads", r.host.hardware_threads}, {"compiler", r.host.compiler}}},
          {"final_frame_checksum", r.final_frame_checksum},
          {"includes_dynamics", r.includes_dynamics},
          {"counter_laws_verified", r.counter_laws_verified},
          {"notes", r.notes}};
}

inline BenchReport report_from_json(const nlohmann::json& j) {
  BenchReport r;
  const auto& c = j.at("config");
  r.config.stage = parse_stage(c.at("stage").get<std::string>());
  r.config.scenes = c.at("scenes").get<int>();
  r.config.width = c.at("width").get<int>();
  r.config.height = c.at("height").get<int>();
  r.config.frames = c.at("frames").get<int>();
  r.config.backend = parse_backend(c.at("backend").get<std::string>());
  r.config.workers = c.at("workers").get<int>();
  r.config.seed = c.at("seed").get<std::uint64_t>();
  r.config.out = c.at("out").get<std::string>();
  r.render_path = j.at("render_path").get<std::string>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.fps = j.at("fps").get<double>();
  r.stats = j.at("stats").get<RenderStats>();
  for (const auto& w : j.at("workers")) r.workers.push_back(worker_from_json(w));
  const auto& h = j.at("host");
  r.host.hostname = h.at("hostname").get<std::string>();
  r.host.hardware_threads = h.at("hardware_threads").get<unsigned>();
  r.host.compiler = h.at("compiler").get<std::string>();
  r.final_frame_checksum = j.at("final_frame_checksum").get<std::string>();
  r.includes_dynamics = j.at("includes_dynamics").get<bool>();
  r.counter_laws_verified = j.at("counter_laws_verified").get<bool>();
  r.notes = j.at("notes").get<std::vector<std::string>>();
  return r;
}

inline std::string csv_header() {
  return "stage,backend,worker,scene_offset,scenes,frames,width,height,wall_seconds,fps,target_binds,draw_calls,"
         "instances_drawn,matrix_uploads,frames_produced,final_frame_checksum";
}

inline std::string to_csv(const BenchReport& r) {
  std::string out = csv_header() + "\n";
  for (const auto& w : r.workers) {
    out += fmt::format("{},{},{},{},{},{},{},{},{:.9g},{:.9g},{},{},{},{},{},{}\n", to_string(r.config.stage),
                       to_string(r.config.backend), w.worker, w.scene_offset, w.scenes, r.config.frames, r.config.width,
                       r.config.height, w.wall_seconds, w.fps, w.stats.target_binds, w.stats.draw_calls,
                       w.stats.instances_drawn, w.stats.matrix_uploads, w.stats.frames_produced,
                       w.final_frame_checksum);
  }
  return out;
}

inline std::string render_report(const BenchReport& r, Format f) {
  return f == Format::Json ? to_json(r).dump(2) + "\n" : to_csv(r);
}

// Writes the report to `path` ("-" for stdout).
inline void emit_report(const BenchReport& r, const std::string& path, Format f) {
  const std::string text = render_report(r, f);
  if (path == "-" || path.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot open report file '{}' for writing", path));
  out << text;
  if (!out) throw IoError(fmt::format("failed writing report file '{}'", path));
}

}  // namespace batchrender::bench
