#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "batchrender/bench.hpp"

using namespace batchrender;
using namespace batchrender::bench;

namespace {

BenchConfig quick(Stage stage, int scenes = 8, int workers = 1) {
  BenchConfig c;
  c.stage = stage;
  c.scenes = scenes;
  c.width = 32;
  c.height = 32;
  c.frames = 5;
  c.workers = workers;
  c.seed = 3;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BENCH_EXE) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(CounterLaws, DetectsEveryMismatch) {
  RenderStats per{.target_binds = 1, .draw_calls = 4, .instances_drawn = 20, .frames_produced = 8};
  RenderStats measured{.target_binds = 10, .draw_calls = 40, .instances_drawn = 200, .frames_produced = 80};
  EXPECT_FALSE(check_counter_laws(per, 10, measured));
  measured.draw_calls = 41;
  const auto err = check_counter_laws(per, 10, measured);
  ASSERT_TRUE(err);
  EXPECT_NE(err->find("draw_calls expected 40 got 41"), std::string::npos);
  measured.draw_calls = 40;
  measured.frames_produced = 79;
  EXPECT_TRUE(check_counter_laws(per, 10, measured));
}

TEST(Bench, StagesAgreeOnChecksum) {
  std::string first;
  for (Stage s : {Stage::Naive, Stage::Tiled, Stage::Readback, Stage::Instanced}) {
    const BenchReport r = run_benchmark(quick(s));
    EXPECT_TRUE(r.counter_laws_verified);
    EXPECT_EQ(r.stats.frames_produced, 8u * 5);
    EXPECT_GT(r.fps, 0);
    if (first.empty()) first = r.final_frame_checksum;
    EXPECT_EQ(r.final_frame_checksum, first) << to_string(s);
  }
}

TEST(Bench, ChecksumMatchesFinalFrames) {
  FrameBatch frames;
  const BenchReport r = run_benchmark(quick(Stage::Tiled), &frames);
  EXPECT_EQ(frames.scenes, 8);
  EXPECT_EQ(frames_checksum(frames), r.final_frame_checksum);
}

TEST(Bench, WorkersDeterministicAcrossShardCounts) {
  const BenchReport one = run_benchmark(quick(Stage::Workers, 8, 1));
  const BenchReport four = run_benchmark(quick(Stage::Workers, 8, 4));
  EXPECT_EQ(one.final_frame_checksum, four.final_frame_checksum);
  EXPECT_EQ(one.final_frame_checksum, run_benchmark(quick(Stage::Tiled)).final_frame_checksum);
  ASSERT_EQ(four.workers.size(), 4u);
  int covered = 0;
  for (const WorkerReport& w : four.workers) {
    EXPECT_EQ(w.scene_offset, covered);
    covered += w.scenes;
  }
  EXPECT_EQ(covered, 8);
  EXPECT_EQ(four.stats.frames_produced, 8u * 5);
}

TEST(Bench, UnevenShards) {
  const BenchReport r = run_benchmark(quick(Stage::Workers, 7, 3));
  EXPECT_EQ(r.final_frame_checksum, run_benchmark(quick(Stage::Naive, 7)).final_frame_checksum);
}

TEST(Bench, ReadbackOnSoftIsNoted) {
  const BenchReport r = run_benchmark(quick(Stage::Readback));
  ASSERT_EQ(r.notes.size(), 1u);
  EXPECT_NE(r.notes[0].find("no-op"), std::string::npos);
  EXPECT_TRUE(run_benchmark(quick(Stage::Tiled)).notes.empty());
}

TEST(Bench, ReportJsonRoundTrip) {
  const BenchReport r = run_benchmark(quick(Stage::Workers, 6, 2));
  const nlohmann::json j = to_json(r);
  for (const char* key : {"config", "host", "fps", "wall_seconds", "stats", "workers", "final_frame_checksum"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(report_from_json(nlohmann::json::parse(j.dump())), r);
}

TEST(Bench, CsvHasOneRowPerWorker) {
  const BenchReport r = run_benchmark(quick(Stage::Workers, 6, 3));
  const std::string csv = to_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), csv_header());
  EXPECT_NE(csv.find("workers,soft,2,4,2,5,32,32,"), std::string::npos);
}

TEST(Bench, ConfigValidation) {
  EXPECT_THROW(run_benchmark(quick(Stage::Tiled, 8, 2)), UsageError);
  EXPECT_THROW(run_benchmark(quick(Stage::Workers, 2, 3)), UsageError);
  BenchConfig c = quick(Stage::Tiled);
  c.frames = 0;
  EXPECT_THROW(run_benchmark(c), UsageError);
  c = quick(Stage::Tiled);
  c.backend = Backend::Gpu;
  EXPECT_THROW(run_benchmark(c), BackendUnavailable);
  EXPECT_THROW(parse_stage("fast"), UsageError);
  EXPECT_THROW(parse_backend("metal"), UsageError);
  EXPECT_THROW(parse_format("xml"), UsageError);
  EXPECT_EQ(parse_stage("instanced"), Stage::Instanced);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("--stage tiled --scenes 4 --width 16 --height 16 --frames 2"), 0);
  EXPECT_EQ(run_cli("--stage sideways"), 2);
  EXPECT_EQ(run_cli("--format xml"), 2);
  EXPECT_EQ(run_cli("--stage tiled --workers 2"), 2);
  EXPECT_EQ(run_cli("--no-such-flag"), 2);
  EXPECT_EQ(run_cli("--backend gpu --scenes 2 --frames 1"), 3);
}

TEST(Cli, WritesReportAndFrames) {
  const auto dir = std::filesystem::temp_directory_path() / "batchrender_bench_cli";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto report = dir / "report.json";
  ASSERT_EQ(run_cli(fmt::format("--stage workers --workers 2 --scenes 4 --width 16 --height 16 --frames 3 --out {} "
                                "--dump-frames {}",
                                report.string(), (dir / "frames").string())),
            0);
  const BenchReport r = report_from_json(nlohmann::json::parse(slurp(report)));
  EXPECT_EQ(r.workers.size(), 2u);
  EXPECT_EQ(r.stats.frames_produced, 12u);
  for (int s = 0; s < 4; ++s) EXPECT_TRUE(std::filesystem::exists(dir / "frames" / fmt::format("frame_{}.ppm", s)));

  const auto csv = dir / "report.csv";
  ASSERT_EQ(run_cli(fmt::format("--stage naive --scenes 4 --width 16 --height 16 --frames 3 --format csv --out {}",
                                csv.string())),
            0);
  const std::string text = slurp(csv);
  EXPECT_EQ(text.substr(0, text.find('\n')), csv_header());
  EXPECT_NE(text.find(r.final_frame_checksum), std::string::npos);
  std::filesystem::remove_all(dir);
}
