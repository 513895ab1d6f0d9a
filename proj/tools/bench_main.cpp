// bench: throughput harness for the cumulative render-path ablation.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 backend
// unavailable.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "batchrender/bench.hpp"

namespace br = batchrender;
namespace bench = batchrender::bench;

int main(int argc, char** argv) {
  CLI::App app{"Batched renderer throughput benchmark"};
  std::string stage = "instanced";
  std::string backend = "soft";
  std::string format = "json";
  std::string dump_dir;
  bench::BenchConfig config;

  app.add_option("--stage", stage, "naive | tiled | readback | instanced | workers")->capture_default_str();
  app.add_option("--scenes", config.scenes, "number of parallel scenes S")->capture_default_str();
  app.add_option("--width", config.width, "frame width in pixels")->capture_default_str();
  app.add_option("--height", config.height, "frame height in pixels")->capture_default_str();
  app.add_option("--frames", config.frames, "timed steps N")->capture_default_str();
  app.add_option("--backend", backend, "soft | gpu")->capture_default_str();
  app.add_option("--workers", config.workers, "worker processes (stage=workers only)")->capture_default_str();
  app.add_option("--seed", config.seed, "base seed")->capture_default_str();
  app.add_option("--out", config.out, "report path, '-' for stdout")->capture_default_str();
  app.add_option("--format", format, "json | csv")->capture_default_str();
  app.add_option("--dump-frames", dump_dir, "write the final frames as frame_<s>.ppm into this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    config.stage = bench::parse_stage(stage);
    config.backend = bench::parse_backend(backend);
    const bench::Format fmt = bench::parse_format(format);
    config.validate();

    br::FrameBatch frames;
    const bench::BenchReport report = bench::run_benchmark(config, dump_dir.empty() ? nullptr : &frames);
    bench::emit_report(report, config.out, fmt);
    if (!dump_dir.empty()) br::dump_frames(frames, dump_dir);
  } catch (const bench::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const br::BackendUnavailable& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
