#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "slot/backend.hpp"
#include "slot/geometry.hpp"

namespace slot {

class EmptyGroundTruth : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct AteResult {
  double translation = 0.0;  // m
  double rotation = 0.0;     // rad
};

/// RMSE of per-frame translation and rotation-angle errors. No alignment:
/// both trajectories must share the frame-0 origin. Throws
/// std::invalid_argument on length mismatch.
AteResult ate_rmse(std::span<const Pose> estimate, std::span<const Pose> truth);

/// Greedy center-distance matching: repeatedly takes the closest remaining
/// (est, gt) pair within `threshold` (ties by est index, then gt index).
std::vector<std::pair<std::size_t, std::size_t>> greedy_match(std::span<const Vector3> estimate,
                                                              std::span<const Vector3> truth,
                                                              double threshold);

struct PrCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;

  // Both are 1 when the denominator is empty.
  double precision() const;
  double recall() const;
};

/// Per-frame greedy matching of records summed over frames.
PrCounts match_counts(std::span<const TrackRecord> estimate, std::span<const TrackRecord> truth,
                      double threshold);

struct TrackingPr {
  PrCounts detection;  // detector outputs only (supplementary records excluded)
  PrCounts tracking;   // every tracker output
};

TrackingPr tracking_pr(std::span<const TrackRecord> estimate, std::span<const TrackRecord> truth,
                       double threshold);

struct MotaCounts {
  long ground_truth = 0;
  long false_negatives = 0;
  long false_positives = 0;
  long id_switches = 0;

  double mota() const;
};

/// CLEAR-MOT counts; an identity switch is a ground-truth object matched to a
/// different track id than at its previous matched frame. Throws
/// EmptyGroundTruth when there is nothing to track.
MotaCounts mota_counts(std::span<const TrackRecord> estimate, std::span<const TrackRecord> truth,
                       double threshold);
double mota(std::span<const TrackRecord> estimate, std::span<const TrackRecord> truth,
            double threshold);

class InsufficientFrames : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Polyline length over elapsed time, in km/h. Samples are (frame, position)
/// in ascending frame order; needs at least two distinct frames.
double average_speed_kmh(std::span<const std::pair<int, Vector3>> samples, double frame_period);

struct ObjectVelocity {
  int truth_id = 0;
  int track_id = 0;
  int frames = 0;  // matched frames
  double v_true = 0.0;      // km/h
  double v_estimate = 0.0;  // km/h
  double trajectory_rmse = 0.0;
};

/// Each ground-truth object is paired with the track it is matched to most
/// often; speeds and RMSE use the frames of that pairing. Objects with fewer
/// than two matched frames are skipped.
std::vector<ObjectVelocity> velocity_metrics(std::span<const TrackRecord> estimate,
                                             std::span<const TrackRecord> truth,
                                             double frame_period, double threshold);

struct StageRuntimes {
  double association_ms = 0.0;
  double optimization_ms = 0.0;
  double global_ms = 0.0;
  double total_ms = 0.0;  // median per-frame sum
};

/// Mean per stage, median of the per-frame total.
StageRuntimes summarize_timings(std::span<const FrameTiming> timings);

struct MetricsReport {
  AteResult ate;
  TrackingPr pr;
  std::optional<MotaCounts> mota;  // absent without ground-truth objects
  std::vector<ObjectVelocity> objects;
  std::optional<StageRuntimes> runtimes;
};

MetricsReport evaluate(std::span<const Pose> est_ego, std::span<const Pose> gt_ego,
                       std::span<const TrackRecord> est_tracks,
                       std::span<const TrackRecord> gt_tracks, double threshold,
                       double frame_period);

std::string metrics_to_json(const MetricsReport& report);

double median(std::vector<double> values);
/// Interquartile range with linear interpolation between order statistics.
double iqr(std::vector<double> values);

}  // namespace slot
