#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "slot/association.hpp"
#include "slot/backend.hpp"
#include "slot/geometry.hpp"
#include "slot/io.hpp"

namespace slot {

class InvalidScene : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unicycle segment: `frames` steps at constant speed (m/s) and yaw rate (rad/s).
struct EgoSegment {
  int frames = 0;
  double speed = 0.0;
  double yaw_rate = 0.0;
};

enum class MotionProfile { Stationary, ConstantVelocity, PiecewiseLinear, Cubic };

const char* to_string(MotionProfile p);
MotionProfile motion_profile_from_string(const std::string& name);

struct Waypoint {
  int frame = 0;
  Vector3 position = Vector3::Zero();
};

struct ObjectSpec {
  ObjectClass object_class = ObjectClass::Vehicle;
  int spawn = 0;
  int despawn = -1;  // inclusive; -1 = last frame
  MotionProfile motion = MotionProfile::Stationary;
  Vector3 position = Vector3::Zero();  // spawn position
  double yaw = 0.0;                    // stationary heading
  Vector3 velocity = Vector3::Zero();  // m/s, ConstantVelocity
  std::vector<Waypoint> waypoints;     // PiecewiseLinear, ascending frames
  // Cubic: x(s), y(s) with s seconds since spawn, coefficients of s^3..s^0.
  std::array<double, 4> cubic_x{};
  std::array<double, 4> cubic_y{};
};

struct NoiseSpec {
  double odom_trans_sigma = 0.0;
  double odom_rot_sigma = 0.0;
  double det_pos_sigma = 0.0;
  double det_yaw_sigma = 0.0;
  double dropout_prob = 0.0;
};

struct OcclusionEvent {
  int object = 0;  // index into SceneSpec::objects
  int first = 0;
  int last = 0;  // inclusive
};

struct SceneSpec {
  double frame_period = 0.1;
  int frame_count = 0;
  double sensing_radius = 60.0;
  std::vector<EgoSegment> ego;  // ego stays put once the segments run out
  std::vector<ObjectSpec> objects;
  NoiseSpec noise;
  std::vector<OcclusionEvent> occlusions;
  std::vector<std::pair<int, int>> loops;  // (frame_old, frame_new)
};

struct GroundTruth {
  std::vector<Pose> ego;  // one per frame
  // One record per (frame, alive object); track_id is the object index.
  std::vector<TrackRecord> objects;
};

struct Scene {
  SceneSpec spec;
  std::uint64_t seed = 0;
  GroundTruth truth;
};

/// Throws InvalidScene.
void validate(const SceneSpec& spec);

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed);

/// Noisy measurement stream of `scene`. Detections carry their ground-truth
/// object index in `truth_id`.
FrameStream emit_stream(const Scene& scene);

/// Ground-truth world pose of object `index` at `frame` (no liveness check).
Pose object_pose_at(const ObjectSpec& object, int frame, double frame_period);

// Scene documents are JSON:
// {
//   "frame_period": 0.1, "frame_count": 50, "sensing_radius": 60,
//   "ego": [{"frames": 50, "speed": 5.0, "yaw_rate": 0.0}],
//   "objects": [{"class": "Vehicle", "spawn": 0, "despawn": 49,
//                "motion": "constant_velocity", "position": [10, 3, 0],
//                "yaw": 0, "velocity": [3, 0, 0],
//                "waypoints": [{"frame": 0, "position": [0, 0, 0]}],
//                "cubic_x": [0, 0, 1, 0], "cubic_y": [0, 0, 0, 0]}],
//   "noise": {"odom_trans_sigma": 0.02, "odom_rot_sigma": 0.002,
//             "det_pos_sigma": 0.1, "det_yaw_sigma": 0.02, "dropout_prob": 0},
//   "occlusions": [{"object": 0, "first": 20, "last": 20}],
//   "loops": [[0, 49]]
// }
// motion is one of stationary, constant_velocity, piecewise_linear, cubic.
SceneSpec scene_from_json(const std::string& text);
std::string scene_to_json(const SceneSpec& spec);
SceneSpec load_scene(const std::filesystem::path& path);
void save_scene(const std::filesystem::path& path, const SceneSpec& spec);

/// Writes ego.txt (poses) and objects.jsonl (track records) into `dir`.
void write_ground_truth(const std::filesystem::path& dir, const GroundTruth& truth);
GroundTruth read_ground_truth(const std::filesystem::path& dir);

}  // namespace slot
