// slot: simulate -> run -> eval command-line driver.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "slot/backend.hpp"
#include "slot/config.hpp"
#include "slot/eval.hpp"
#include "slot/io.hpp"
#include "slot/simulator.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kInvalidInput = 1;
constexpr int kNumericalFailure = 2;

struct RunResult {
  slot::ExportedState state;
  std::vector<slot::FrameTiming> timings;
};

RunResult run_backend(const slot::FrameStream& stream, slot::BackendConfig config) {
  config.association.frame_period = stream.header.frame_period;
  slot::SlotBackend backend(config);
  slot::run_stream(backend, stream);
  return {backend.export_state(), backend.timings()};
}

std::vector<slot::Pose> ego_poses(const slot::ExportedState& state) {
  std::vector<slot::Pose> out;
  out.reserve(state.ego.size());
  for (const auto& [frame, pose] : state.ego) out.push_back(pose);
  return out;
}

slot::BackendConfig config_or_default(const std::string& path) {
  return path.empty() ? slot::BackendConfig{} : slot::load_config(path);
}

int cmd_simulate(const std::string& scene_path, std::uint64_t seed, const fs::path& out,
                 const fs::path& gt) {
  const slot::Scene scene = slot::generate_scene(slot::load_scene(scene_path), seed);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  slot::write_stream_file(out, slot::emit_stream(scene));
  slot::write_ground_truth(gt, scene.truth);
  return 0;
}

int cmd_run(const fs::path& stream_path, const std::string& config_path, const fs::path& out,
            bool no_objects, bool no_loop) {
  const slot::FrameStream stream = slot::read_stream_file(stream_path);
  slot::BackendConfig config = config_or_default(config_path);
  config.use_objects = !no_objects;
  config.use_loops = !no_loop;
  const RunResult r = run_backend(stream, config);
  fs::create_directories(out);
  slot::write_poses_file(out / "ego.txt", ego_poses(r.state));
  slot::write_tracks_file(out / "tracks.jsonl", r.state.tracks);
  slot::write_timings_file(out / "timings.csv", r.timings);
  std::ofstream meta(out / "run.json");
  meta << nlohmann::json{{"frame_period", stream.header.frame_period},
                         {"frame_count", stream.header.frame_count},
                         {"use_objects", config.use_objects},
                         {"use_loops", config.use_loops}}
              .dump(2)
       << '\n';
  return 0;
}

int cmd_eval(const fs::path& est, const fs::path& gt, double dist, const fs::path& out) {
  double period = 0.1;
  if (fs::exists(est / "run.json")) {
    std::ifstream is(est / "run.json");
    period = nlohmann::json::parse(is).value("frame_period", period);
  }
  const auto est_ego = slot::read_poses_file(est / "ego.txt");
  const auto est_tracks = slot::read_tracks_file(est / "tracks.jsonl");
  const slot::GroundTruth truth = slot::read_ground_truth(gt);
  slot::MetricsReport report;
  try {
    report = slot::evaluate(est_ego, truth.ego, est_tracks, truth.objects, dist, period);
  } catch (const std::invalid_argument& e) {
    throw slot::InvalidInput(e.what());
  }
  if (fs::exists(est / "timings.csv")) {
    const auto timings = slot::read_timings_file(est / "timings.csv");
    report.runtimes = slot::summarize_timings(timings);
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream os(out);
  if (!os) throw slot::InvalidInput("cannot write " + out.string());
  os << slot::metrics_to_json(report) << '\n';
  return 0;
}

int cmd_bench(const std::string& scene_path, int seeds, const fs::path& out,
              const std::string& config_path, double dist) {
  if (seeds < 1) throw slot::InvalidInput("--seeds must be >= 1");
  const slot::SceneSpec spec = slot::load_scene(scene_path);
  const slot::BackendConfig base = config_or_default(config_path);

  struct Variant {
    std::string name;
    bool objects;
    bool loops;
    std::vector<double> ate;
    std::vector<double> mota;
    std::vector<double> frame_ms;
  };
  std::vector<Variant> variants{{"full", true, true, {}, {}, {}},
                                {"no_objects", false, true, {}, {}, {}}};
  if (!spec.loops.empty()) variants.push_back({"no_loop", true, false, {}, {}, {}});

  for (int seed = 0; seed < seeds; ++seed) {
    const slot::Scene scene = slot::generate_scene(spec, static_cast<std::uint64_t>(seed));
    const slot::FrameStream stream = slot::emit_stream(scene);
    for (Variant& v : variants) {
      slot::BackendConfig config = base;
      config.use_objects = v.objects;
      config.use_loops = v.loops;
      const RunResult r = run_backend(stream, config);
      v.ate.push_back(slot::ate_rmse(ego_poses(r.state), scene.truth.ego).translation);
      if (v.objects && !scene.truth.objects.empty()) {
        v.mota.push_back(slot::mota(r.state.tracks, scene.truth.objects, dist));
      }
      v.frame_ms.push_back(slot::summarize_timings(r.timings).total_ms);
    }
  }

  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream os(out);
  if (!os) throw slot::InvalidInput("cannot write " + out.string());
  os << "variant,seeds,ate_median,ate_iqr,mota_median,mota_iqr,frame_ms_median\n";
  for (const Variant& v : variants) {
    char line[256];
    std::snprintf(line, sizeof(line), "%s,%d,%.6f,%.6f,%s,%s,%.3f\n", v.name.c_str(), seeds,
                  slot::median(v.ate), slot::iqr(v.ate),
                  v.mota.empty() ? "" : std::to_string(slot::median(v.mota)).c_str(),
                  v.mota.empty() ? "" : std::to_string(slot::iqr(v.mota)).c_str(),
                  slot::median(v.frame_ms));
    os << line;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sliding-window SLAM and object tracking back-end"};
  app.require_subcommand(1);

  std::string scene;
  std::uint64_t seed = 0;
  std::string stream_out;
  std::string gt_dir;
  auto* simulate = app.add_subcommand("simulate", "Generate a measurement stream and ground truth");
  simulate->add_option("--scene", scene, "Scene document (JSON)")->required();
  simulate->add_option("--seed", seed, "Noise seed")->required();
  simulate->add_option("--out", stream_out, "Output stream file")->required();
  simulate->add_option("--gt", gt_dir, "Ground-truth output directory")->required();

  std::string stream_in;
  std::string config;
  std::string run_out;
  bool no_objects = false;
  bool no_loop = false;
  auto* run = app.add_subcommand("run", "Run the back-end over a measurement stream");
  run->add_option("--stream", stream_in, "Input stream file")->required();
  run->add_option("--config", config, "Run configuration (JSON)");
  run->add_option("--out", run_out, "Output directory")->required();
  run->add_flag("--no-objects", no_objects, "Drop all detections before the back-end");
  run->add_flag("--no-loop", no_loop, "Ignore loop closures");

  std::string est_dir;
  std::string eval_gt;
  double dist = 1.0;
  std::string metrics_out;
  auto* eval = app.add_subcommand("eval", "Score a run against ground truth");
  eval->add_option("--est", est_dir, "Run output directory")->required();
  eval->add_option("--gt", eval_gt, "Ground-truth directory")->required();
  eval->add_option("--dist-thresh", dist, "Center-distance match threshold (m)")
      ->check(CLI::PositiveNumber);
  eval->add_option("--out", metrics_out, "Metrics file (JSON)")->required();

  std::string bench_scene;
  int seeds = 10;
  std::string table_out;
  std::string bench_config;
  double bench_dist = 1.0;
  auto* bench = app.add_subcommand("bench", "Seed sweep comparing pipeline variants");
  bench->add_option("--scene", bench_scene, "Scene document (JSON)")->required();
  bench->add_option("--seeds", seeds, "Number of seeds (0..n-1)");
  bench->add_option("--out", table_out, "CSV table")->required();
  bench->add_option("--config", bench_config, "Run configuration (JSON)");
  bench->add_option("--dist-thresh", bench_dist, "Center-distance match threshold (m)")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInvalidInput;
  }

  try {
    if (*simulate) return cmd_simulate(scene, seed, stream_out, gt_dir);
    if (*run) return cmd_run(stream_in, config, run_out, no_objects, no_loop);
    if (*eval) return cmd_eval(est_dir, eval_gt, dist, metrics_out);
    if (*bench) return cmd_bench(bench_scene, seeds, table_out, bench_config, bench_dist);
  } catch (const slot::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const slot::DegenerateRotation& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalidInput;
  }
  return 0;
}
