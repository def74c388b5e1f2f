#include <cmath>
#include <filesystem>
#include <numbers>

#include <gtest/gtest.h>

#include "slot/simulator.hpp"
#include "support.hpp"

namespace slot {
namespace {

SceneSpec straight_scene(int frames) {
  SceneSpec s;
  s.frame_period = 0.1;
  s.frame_count = frames;
  s.ego = {{frames, 10.0, 0.0}};
  ObjectSpec parked;
  parked.position = Vector3(20, 5, 0);
  parked.yaw = 0.4;
  ObjectSpec mover;
  mover.motion = MotionProfile::ConstantVelocity;
  mover.position = Vector3(0, -5, 0);
  mover.velocity = Vector3(10, 0, 0);
  s.objects = {parked, mover};
  return s;
}

const Detection* find_truth(const FrameRecord& rec, int truth_id) {
  for (const Detection& d : rec.detections) {
    if (d.truth_id == truth_id) return &d;
  }
  return nullptr;
}

TEST(Simulator, SameSeedSameStream) {
  SceneSpec spec = straight_scene(20);
  spec.noise = {0.05, 0.01, 0.1, 0.02, 0.1};
  const FrameStream a = emit_stream(generate_scene(spec, 7));
  const FrameStream b = emit_stream(generate_scene(spec, 7));
  const FrameStream c = emit_stream(generate_scene(spec, 8));
  bool differs = false;
  for (std::size_t f = 0; f < a.frames.size(); ++f) {
    EXPECT_EQ(frame_record_to_json(a.frames[f]), frame_record_to_json(b.frames[f]));
    differs |= frame_record_to_json(a.frames[f]) != frame_record_to_json(c.frames[f]);
  }
  EXPECT_TRUE(differs);
}

TEST(Simulator, ZeroNoiseMatchesTruth) {
  const Scene scene = generate_scene(straight_scene(30), 1);
  const FrameStream stream = emit_stream(scene);
  ASSERT_EQ(stream.frames.size(), 30u);
  EXPECT_TRUE(stream.frames[0].odometry.is_approx(Pose::identity(), 0.0));
  std::size_t k = 0;
  for (const FrameRecord& rec : stream.frames) {
    const Pose& ego = scene.truth.ego[rec.frame];
    if (rec.frame > 0) {
      EXPECT_TRUE(rec.odometry.is_approx(between(scene.truth.ego[rec.frame - 1], ego), 1e-12));
    }
    ASSERT_EQ(rec.detections.size(), 2u);
    for (; k < scene.truth.objects.size() && scene.truth.objects[k].frame == rec.frame; ++k) {
      const TrackRecord& obj = scene.truth.objects[k];
      const Detection* d = find_truth(rec, obj.track_id);
      ASSERT_NE(d, nullptr);
      EXPECT_TRUE((ego * d->local_pose()).is_approx(obj.world_pose, 1e-12));
    }
  }
}

TEST(Simulator, ConstantVelocityTruthMovesOneMetrePerFrame) {
  const Scene scene = generate_scene(straight_scene(10), 1);
  for (const TrackRecord& r : scene.truth.objects) {
    if (r.track_id == 1) {
      EXPECT_NEAR(r.world_pose.translation().x(), r.frame * 1.0, 1e-12);
      EXPECT_TRUE(r.velocity.isApprox(Vector3(10, 0, 0), 1e-12));
      EXPECT_EQ(r.status, MotionStatus::Dynamic);
    } else {
      EXPECT_TRUE(r.world_pose.is_approx(Pose::from_xyz_yaw(20, 5, 0, 0.4), 0.0));
      EXPECT_TRUE(r.velocity.isZero(0.0));
      EXPECT_EQ(r.status, MotionStatus::Stationary);
    }
  }
  EXPECT_NEAR(scene.truth.ego[9].translation().x(), 9.0, 1e-12);
}

TEST(Simulator, TurningEgoFollowsArc) {
  SceneSpec spec;
  spec.frame_count = 11;
  spec.frame_period = 0.1;
  // Quarter turn of radius 10 m over one second.
  spec.ego = {{10, 5 * std::numbers::pi, std::numbers::pi / 2}};
  const Scene scene = generate_scene(spec, 0);
  const Pose& end = scene.truth.ego[10];
  EXPECT_NEAR(end.translation().x(), 10.0, 1e-9);
  EXPECT_NEAR(end.translation().y(), 10.0, 1e-9);
  EXPECT_NEAR(end.yaw(), std::numbers::pi / 2, 1e-12);
}

TEST(Simulator, NoiseMatchesConfiguredSigmas) {
  SceneSpec spec;
  spec.frame_count = 2001;
  spec.ego = {{2000, 5.0, 0.0}};
  ObjectSpec o;
  o.position = Vector3(1, 0, 0);
  spec.objects = {o};
  spec.sensing_radius = 1e6;
  spec.noise = {0.2, 0.01, 0.3, 0.05, 0.0};
  const Scene scene = generate_scene(spec, 42);
  const FrameStream stream = emit_stream(scene);
  double odom_t = 0, odom_r = 0, det_p = 0, det_y = 0;
  long n_det = 0;
  for (const FrameRecord& rec : stream.frames) {
    const Pose& ego = scene.truth.ego[rec.frame];
    if (rec.frame > 0) {
      const Twist e = log_map(between(between(scene.truth.ego[rec.frame - 1], ego), rec.odometry));
      odom_r += e.head<3>().squaredNorm();
      odom_t += e.tail<3>().squaredNorm();
    }
    for (const Detection& d : rec.detections) {
      const Pose local = ego.inverse() * scene.truth.objects[rec.frame].world_pose;
      det_p += (d.local_position - local.translation()).squaredNorm();
      det_y += std::pow(wrap_angle(d.yaw - local.yaw()), 2);
      ++n_det;
    }
  }
  const double n = 2000.0;
  EXPECT_NEAR(std::sqrt(odom_t / (3 * n)), 0.2, 0.02);
  EXPECT_NEAR(std::sqrt(odom_r / (3 * n)), 0.01, 0.001);
  ASSERT_EQ(n_det, 2001);
  EXPECT_NEAR(std::sqrt(det_p / (3.0 * n_det)), 0.3, 0.03);
  EXPECT_NEAR(std::sqrt(det_y / n_det), 0.05, 0.005);
}

TEST(Simulator, DropoutRate) {
  SceneSpec spec = straight_scene(2000);
  spec.ego.clear();
  spec.objects.resize(1);
  spec.noise.dropout_prob = 0.3;
  const FrameStream stream = emit_stream(generate_scene(spec, 5));
  long seen = 0;
  for (const FrameRecord& rec : stream.frames) seen += static_cast<long>(rec.detections.size());
  EXPECT_NEAR(1.0 - seen / 2000.0, 0.3, 0.03);
}

TEST(Simulator, OcclusionAndSensingRadius) {
  SceneSpec spec = straight_scene(20);
  spec.occlusions = {{1, 5, 7}};
  spec.sensing_radius = 12.0;
  const Scene scene = generate_scene(spec, 0);
  const FrameStream stream = emit_stream(scene);
  for (const FrameRecord& rec : stream.frames) {
    const bool occluded = rec.frame >= 5 && rec.frame <= 7;
    EXPECT_EQ(find_truth(rec, 1) == nullptr, occluded) << rec.frame;
    // Parked car at (20, 5): beyond 12 m until the ego reaches x = 20 - sqrt(119).
    const double range = (Vector3(20, 5, 0) - scene.truth.ego[rec.frame].translation()).norm();
    EXPECT_EQ(find_truth(rec, 0) != nullptr, range <= 12.0) << rec.frame;
  }
}

TEST(Simulator, LoopMeasurementsAtTheNewFrame) {
  SceneSpec spec = straight_scene(20);
  spec.loops = {{2, 15}};
  const Scene scene = generate_scene(spec, 0);
  const FrameStream stream = emit_stream(scene);
  for (const FrameRecord& rec : stream.frames) EXPECT_EQ(rec.loops.size(), rec.frame == 15 ? 1u : 0u);
  const LoopEvent& loop = stream.frames[15].loops[0];
  EXPECT_EQ(loop.frame_old, 2);
  EXPECT_TRUE(loop.measurement.is_approx(between(scene.truth.ego[2], scene.truth.ego[15]), 1e-12));
}

TEST(Simulator, ValidateRejectsBadScenes) {
  const auto expect_invalid = [](auto mutate) {
    SceneSpec s = straight_scene(10);
    mutate(s);
    EXPECT_THROW(validate(s), InvalidScene);
  };
  expect_invalid([](SceneSpec& s) { s.frame_period = 0.0; });
  expect_invalid([](SceneSpec& s) { s.frame_count = 0; });
  expect_invalid([](SceneSpec& s) { s.noise.det_pos_sigma = -1.0; });
  expect_invalid([](SceneSpec& s) { s.noise.dropout_prob = 1.5; });
  expect_invalid([](SceneSpec& s) { s.objects[0].spawn = 10; });
  expect_invalid([](SceneSpec& s) { s.occlusions = {{5, 0, 1}}; });
  expect_invalid([](SceneSpec& s) { s.loops = {{5, 12}}; });
  expect_invalid([](SceneSpec& s) { s.objects[1].motion = MotionProfile::PiecewiseLinear; });
  EXPECT_THROW(scene_from_json("{\"frame_count\": 5, \"objects\": [{\"motion\": \"teleport\"}]}"),
               InvalidScene);
  EXPECT_THROW(scene_from_json("not json"), InvalidScene);
}

TEST(Simulator, SceneJsonRoundTrip) {
  SceneSpec spec = straight_scene(25);
  spec.noise = {0.01, 0.002, 0.1, 0.03, 0.05};
  spec.occlusions = {{0, 3, 4}};
  spec.loops = {{0, 24}};
  ObjectSpec w;
  w.motion = MotionProfile::PiecewiseLinear;
  w.waypoints = {{0, Vector3(0, 0, 0)}, {10, Vector3(5, 5, 0)}};
  ObjectSpec c;
  c.motion = MotionProfile::Cubic;
  c.cubic_x = {0.1, 0.0, 2.0, 1.0};
  spec.objects.push_back(w);
  spec.objects.push_back(c);
  const std::string text = scene_to_json(spec);
  EXPECT_EQ(scene_to_json(scene_from_json(text)), text);
  const Scene a = generate_scene(spec, 3);
  const Scene b = generate_scene(scene_from_json(text), 3);
  ASSERT_EQ(a.truth.objects.size(), b.truth.objects.size());
  for (std::size_t i = 0; i < a.truth.objects.size(); ++i) {
    EXPECT_TRUE(a.truth.objects[i].world_pose.is_approx(b.truth.objects[i].world_pose, 0.0));
  }
}

TEST(Simulator, ShippedScenesLoad) {
  for (const auto& entry : std::filesystem::directory_iterator(testing::scene_dir())) {
    const std::string name = entry.path().filename().string();
    if (name.ends_with(".config.json")) continue;
    EXPECT_NO_THROW(generate_scene(load_scene(entry.path()), 0)) << name;
  }
}

TEST(Simulator, GroundTruthFilesRoundTrip) {
  const Scene scene = generate_scene(straight_scene(8), 0);
  const auto dir = std::filesystem::temp_directory_path() / "slot_gt_roundtrip";
  std::filesystem::create_directories(dir);
  write_ground_truth(dir, scene.truth);
  const GroundTruth back = read_ground_truth(dir);
  std::filesystem::remove_all(dir);
  ASSERT_EQ(back.ego.size(), scene.truth.ego.size());
  ASSERT_EQ(back.objects.size(), scene.truth.objects.size());
  for (std::size_t i = 0; i < back.ego.size(); ++i) {
    EXPECT_TRUE(back.ego[i].is_approx(scene.truth.ego[i], 1e-12));
  }
  EXPECT_EQ(back.objects.back().track_id, scene.truth.objects.back().track_id);
}

}  // namespace
}  // namespace slot
