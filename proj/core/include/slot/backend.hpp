#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "slot/association.hpp"
#include "slot/factor_graph.hpp"
#include "slot/geometry.hpp"

namespace slot {

/// Diagonal information: first three entries rotation, last three translation.
struct DiagonalInformation {
  double rotation = 1e2;
  double translation = 1e2;

  Matrix6 matrix() const;
};

struct BackendConfig {
  AssociationParams association;
  int window_size = 10;  // K; kept equal to association.window_size
  DiagonalInformation odometry{1e2, 1e2};
  DiagonalInformation observation{1e1, 1e1};
  DiagonalInformation motion{1e2, 1e2};
  DiagonalInformation const_velocity{1e1, 1e1};
  DiagonalInformation loop{1e2, 1e2};
  double anchor_information = 1e8;
  double supplementary_weight = 0.25;
  OptimizeOptions solver;
  bool use_objects = true;
  bool use_loops = true;
};

struct LoopEvent {
  int frame_old = 0;
  int frame_new = 0;
  Pose measurement;
};

/// Per-frame output record of one tracked object.
struct TrackRecord {
  int frame = 0;
  int track_id = 0;
  ObjectClass object_class = ObjectClass::Vehicle;
  Pose world_pose;
  Vector3 velocity = Vector3::Zero();
  MotionStatus status = MotionStatus::Unknown;
  bool supplementary = false;
};

struct ExportedState {
  std::vector<std::pair<int, Pose>> ego;  // ascending frame
  std::vector<TrackRecord> tracks;        // ascending (frame, track id)
};

struct FrameTiming {
  int frame = 0;
  double association_ms = 0.0;
  double optimization_ms = 0.0;
  double global_ms = 0.0;
};

/// Object sets of one frame: cons ⊆ aso ⊆ init ⊆ all.
struct FrameObjectSets {
  std::set<int> all;
  std::set<int> initialized;
  std::set<int> associated;
  std::set<int> constant_velocity;
};

class OutOfOrderFrame : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnknownFrame : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sliding-window joint estimation of ego poses and object poses/motions,
/// with a global odometry+loop pose graph alongside.
class SlotBackend {
 public:
  explicit SlotBackend(BackendConfig config = {});

  /// Odometry -> association -> window graph -> optimize -> slide.
  void ingest_frame(int frame, const Pose& odometry, std::vector<Detection> detections);
  /// Adds the loop to the global graph, optimizes it and re-anchors the window.
  void handle_loop(const LoopEvent& loop);

  /// Adds object variables/factors for the observations of `frame`.
  void build_window_graph(int frame);
  /// Marginalizes the oldest frame; no-op while the window holds <= K frames.
  void slide_window();

  ExportedState export_state() const;

  const Graph& window_graph() const { return window_; }
  const Graph& global_graph() const { return global_; }
  const std::deque<int>& window_frames() const { return window_frames_; }
  const std::vector<Track>& tracks() const { return tracker_.tracks(); }
  const BackendConfig& config() const { return config_; }
  const std::vector<FrameTiming>& timings() const { return timings_; }
  const std::vector<OptimizeReport>& global_reports() const { return global_reports_; }
  const OptimizeReport& last_window_report() const { return window_report_; }
  const std::vector<MarginalizationReport>& marginalizations() const { return marginalizations_; }
  /// Object sets of a frame still in the window.
  const FrameObjectSets& object_sets(int frame) const;
  /// Supplementary detections emitted in the most recent frame.
  const std::vector<Detection>& last_supplementary() const { return last_supplementary_; }
  std::optional<int> last_frame() const { return last_frame_; }
  /// Current best ego estimate of any ingested frame.
  Pose ego_estimate(int frame) const;

 private:
  struct Observation {
    int track_id = 0;
    Detection detection;
    MotionStatus status = MotionStatus::Unknown;
    std::optional<VariableId> pose;
    std::optional<VariableId> motion;
  };

  struct FrameState {
    std::vector<Observation> observations;
    FrameObjectSets sets;
  };

  // Window bookkeeping of one track.
  struct TrackNodes {
    std::optional<VariableId> last_pose;
    std::optional<VariableId> last_motion;
    int last_observed = -1;
    std::set<VariableId> poses;
    std::set<VariableId> motions;
  };

  void classify_observed_tracks(const std::vector<int>& ids);
  void collapse_to_stationary(int track_id, TrackNodes& nodes);
  void retire(const std::set<VariableId>& victims);
  void refresh_motion_estimates(int frame);
  Pose lookup(const VariableId& id) const;

  BackendConfig config_;
  Tracker tracker_;
  Graph window_;
  Graph global_;
  std::deque<int> window_frames_;
  std::map<int, FrameState> frames_;
  std::map<int, TrackNodes> track_nodes_;
  std::map<VariableId, int> pose_last_observed_;
  std::map<VariableId, Pose> retired_;
  std::map<VariableId, int> retired_observed_;  // last frame observed, object poses only
  OptimizeReport window_report_;
  std::map<int, Pose> ego_estimates_;
  std::optional<int> last_frame_;
  std::vector<FrameTiming> timings_;
  std::vector<OptimizeReport> global_reports_;
  std::vector<MarginalizationReport> marginalizations_;
  std::vector<Detection> last_supplementary_;
};

}  // namespace slot
