#include <benchmark/benchmark.h>

#include "slot/backend.hpp"
#include "slot/io.hpp"
#include "slot/simulator.hpp"

namespace {

// Ego cruising past `objects` cars on parallel lanes, half of them parked.
slot::FrameStream traffic(int objects, int frames) {
  slot::SceneSpec spec;
  spec.frame_count = frames;
  spec.ego = {{frames, 8.0, 0.0}};
  spec.noise = {0.02, 0.001, 0.05, 0.002, 0.0};
  for (int i = 0; i < objects; ++i) {
    slot::ObjectSpec o;
    o.position = slot::Vector3(6.0 * i - 10.0, i % 2 ? 4.0 : -4.0, 0.0);
    if (i % 2) {
      o.motion = slot::MotionProfile::ConstantVelocity;
      o.velocity = slot::Vector3(6.0, 0.0, 0.0);
    }
    spec.objects.push_back(o);
  }
  return slot::emit_stream(slot::generate_scene(spec, 0));
}

void BM_RunStream(benchmark::State& state) {
  const slot::FrameStream stream = traffic(static_cast<int>(state.range(0)), 100);
  for (auto _ : state) {
    slot::SlotBackend backend;
    slot::run_stream(backend, stream);
    benchmark::DoNotOptimize(backend.last_frame());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(stream.frames.size()));
}
BENCHMARK(BM_RunStream)->Arg(0)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

// One steady-state frame: the window is full and sliding.
void BM_SteadyStateFrame(benchmark::State& state) {
  const slot::FrameStream stream = traffic(10, 40);
  for (auto _ : state) {
    state.PauseTiming();
    slot::SlotBackend backend;
    for (int f = 0; f < 39; ++f) {
      backend.ingest_frame(f, stream.frames[f].odometry, stream.frames[f].detections);
    }
    state.ResumeTiming();
    backend.ingest_frame(39, stream.frames[39].odometry, stream.frames[39].detections);
  }
}
BENCHMARK(BM_SteadyStateFrame)->Unit(benchmark::kMillisecond);

}  // namespace
