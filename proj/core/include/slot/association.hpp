#pragma once

#include <array>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "slot/geometry.hpp"

namespace slot {

enum class ObjectClass { Vehicle, Pedestrian, Cyclist };
enum class MotionStatus { Unknown, Dynamic, Stationary };

const char* to_string(ObjectClass c);
const char* to_string(MotionStatus s);
/// Throws std::invalid_argument on unknown names.
ObjectClass object_class_from_string(const std::string& name);
MotionStatus motion_status_from_string(const std::string& name);

/// One object observation. `local_position`/`yaw` are in the ego frame;
/// `world_pose` is filled once the ego pose of `frame` is known.
struct Detection {
  int frame = 0;
  Vector3 local_position = Vector3::Zero();
  double yaw = 0.0;
  ObjectClass object_class = ObjectClass::Vehicle;
  bool supplementary = false;
  Pose world_pose;
  // Ground-truth object id when produced by the simulator; -1 otherwise.
  // Never serialized into the measurement stream.
  int truth_id = -1;

  Pose local_pose() const;
};

/// theta1 t^3 + theta2 t^2 + theta3 t + theta4
struct Cubic {
  std::array<double, 4> coeffs{};
  double operator()(double t) const;
};

struct TrajectorySample {
  int frame = 0;
  double x = 0.0;
  double y = 0.0;
};

struct TrajectoryFit {
  Cubic x;
  Cubic y;
};

struct TrackPoint {
  int frame = 0;
  Pose world_pose;
  bool supplementary = false;
};

struct Track {
  int id = 0;
  ObjectClass object_class = ObjectClass::Vehicle;
  std::deque<TrackPoint> history;
  bool initialized = false;
  int consecutive_misses = 0;
  MotionStatus status = MotionStatus::Unknown;
  TrajectoryFit fit;
  // Translations of the most recent optimized motion nodes, oldest first.
  std::deque<Vector3> motion_translations;

  int last_frame() const { return history.back().frame; }
  const Pose& last_pose() const { return history.back().world_pose; }
};

enum class PredictionMode {
  Polynomial,        // cubic trajectory fit (initialized tracks)
  LastPosition,      // nearest neighbour on the previous position
  ConstantVelocity,  // previous position plus last frame-to-frame displacement
};

struct AssociationParams {
  int window_size = 10;                // K
  int init_threshold = 5;              // initialized iff history length > this
  double gate_initialized = 1.5;       // m
  double gate_uninitialized = 3.0;     // m
  int max_misses = 1;                  // supplementary detections before termination
  double stationary_speed = 0.1;       // m/s
  double frame_period = 0.1;           // s
  PredictionMode prediction = PredictionMode::Polynomial;
};

class InsufficientHistory : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UninitializedTrack : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Least-squares polynomial fit of x(t), y(t) with t = frame - last frame.
/// Cubic for >= 4 samples, degree n-1 below that.
TrajectoryFit fit_trajectory(std::span<const TrajectorySample> history);

/// Polynomial prediction at `frame`; requires an initialized track.
Eigen::Vector2d predict_position(const Track& track, int frame);

/// Position a track is expected at in `frame` under `params.prediction`.
Eigen::Vector2d expected_position(const Track& track, int frame, const AssociationParams& params);

double match_score(const Track& track, const Detection& det, int frame,
                   const AssociationParams& params);

struct ScoreMatrix {
  Eigen::MatrixXd scores;      // rows: tracks, cols: detections
  std::vector<int> track_ids;  // row -> track id
};

ScoreMatrix build_score_matrix(std::span<const Track> tracks, std::span<const Detection> dets,
                               int frame, const AssociationParams& params);

/// Maximum-total-score partial matching over strictly positive entries, via
/// successive shortest paths on cost 1 - score. Returns (row, col) pairs
/// sorted by row.
std::vector<std::pair<int, int>> solve_assignment(const Eigen::MatrixXd& scores);

struct TrackedDetection {
  int track_id = 0;
  Detection detection;
};

struct TrackUpdate {
  // Every detection of this frame (matched, spawned or supplementary) with
  // the track it now belongs to.
  std::vector<TrackedDetection> observations;
  std::vector<Detection> supplementary;
  std::vector<int> terminated;
  std::vector<int> spawned;
};

/// Applies one frame of association results to `tracks`. New tracks take ids
/// from `next_id`.
TrackUpdate update_tracks(std::vector<Track>& tracks, std::span<const Detection> detections,
                          std::span<const std::pair<int, int>> assignment, int frame,
                          const Pose& ego_pose, const AssociationParams& params, int& next_id);

/// Speed (m/s): mean translation norm of the last min(n-1, 5) optimized
/// motion nodes when that many exist, else the planar least-squares slope
/// of the history positions.
double estimate_speed(const Track& track, const AssociationParams& params);
MotionStatus classify_motion_status(const Track& track, const AssociationParams& params);

/// Score, assign and update in one step. Holds the track store.
class Tracker {
 public:
  explicit Tracker(AssociationParams params = {}) : params_(params) {}

  TrackUpdate step(std::vector<Detection> detections, int frame, const Pose& ego_pose);

  std::vector<Track>& tracks() { return tracks_; }
  const std::vector<Track>& tracks() const { return tracks_; }
  Track* find(int id);
  const AssociationParams& params() const { return params_; }

 private:
  AssociationParams params_;
  std::vector<Track> tracks_;
  int next_id_ = 0;
};

}  // namespace slot
