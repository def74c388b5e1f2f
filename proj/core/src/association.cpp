#include "slot/association.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/QR>

namespace slot {

const char* to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::Vehicle: return "Vehicle";
    case ObjectClass::Pedestrian: return "Pedestrian";
    case ObjectClass::Cyclist: return "Cyclist";
  }
  return "Vehicle";
}

const char* to_string(MotionStatus s) {
  switch (s) {
    case MotionStatus::Unknown: return "Unknown";
    case MotionStatus::Dynamic: return "Dynamic";
    case MotionStatus::Stationary: return "Stationary";
  }
  return "Unknown";
}

ObjectClass object_class_from_string(const std::string& name) {
  if (name == "Vehicle") return ObjectClass::Vehicle;
  if (name == "Pedestrian") return ObjectClass::Pedestrian;
  if (name == "Cyclist") return ObjectClass::Cyclist;
  throw std::invalid_argument("unknown object class '" + name + "'");
}

MotionStatus motion_status_from_string(const std::string& name) {
  if (name == "Unknown") return MotionStatus::Unknown;
  if (name == "Dynamic") return MotionStatus::Dynamic;
  if (name == "Stationary") return MotionStatus::Stationary;
  throw std::invalid_argument("unknown motion status '" + name + "'");
}

Pose Detection::local_pose() const {
  return Pose::from_xyz_yaw(local_position.x(), local_position.y(), local_position.z(), yaw);
}

double Cubic::operator()(double t) const {
  return ((coeffs[0] * t + coeffs[1]) * t + coeffs[2]) * t + coeffs[3];
}

TrajectoryFit fit_trajectory(std::span<const TrajectorySample> history) {
  if (history.size() < 2) {
    throw InsufficientHistory("fit_trajectory needs at least 2 samples, got " +
                              std::to_string(history.size()));
  }
  const auto n = static_cast<Eigen::Index>(history.size());
  const int degree = static_cast<int>(std::min<Eigen::Index>(3, n - 1));
  const int last = history.back().frame;
  Eigen::MatrixXd vandermonde(n, degree + 1);
  Eigen::MatrixXd rhs(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = history[static_cast<std::size_t>(i)].frame - last;
    double power = 1.0;
    for (int k = degree; k >= 0; --k) {
      vandermonde(i, k) = power;
      power *= t;
    }
    rhs(i, 0) = history[static_cast<std::size_t>(i)].x;
    rhs(i, 1) = history[static_cast<std::size_t>(i)].y;
  }
  const Eigen::MatrixXd solution = vandermonde.colPivHouseholderQr().solve(rhs);
  TrajectoryFit fit;
  // Highest-order coefficient first; lower-degree fits leave the top zero.
  const int skip = 3 - degree;
  for (int k = 0; k <= degree; ++k) {
    fit.x.coeffs[static_cast<std::size_t>(skip + k)] = solution(k, 0);
    fit.y.coeffs[static_cast<std::size_t>(skip + k)] = solution(k, 1);
  }
  return fit;
}

Eigen::Vector2d predict_position(const Track& track, int frame) {
  if (!track.initialized) {
    throw UninitializedTrack("predict_position on uninitialized track " +
                             std::to_string(track.id));
  }
  const double t = frame - track.last_frame();
  return {track.fit.x(t), track.fit.y(t)};
}

Eigen::Vector2d expected_position(const Track& track, int frame,
                                  const AssociationParams& params) {
  const Vector3& last = track.last_pose().translation();
  switch (params.prediction) {
    case PredictionMode::Polynomial:
      if (track.initialized) return predict_position(track, frame);
      return last.head<2>();
    case PredictionMode::LastPosition:
      return last.head<2>();
    case PredictionMode::ConstantVelocity: {
      if (track.history.size() < 2) return last.head<2>();
      const TrackPoint& prev = track.history[track.history.size() - 2];
      const double span = track.last_frame() - prev.frame;
      const Eigen::Vector2d velocity =
          (last.head<2>() - prev.world_pose.translation().head<2>()) / span;
      return last.head<2>() + velocity * (frame - track.last_frame());
    }
  }
  return last.head<2>();
}

double match_score(const Track& track, const Detection& det, int frame,
                   const AssociationParams& params) {
  if (track.object_class != det.object_class) return 0.0;
  const Eigen::Vector2d predicted = expected_position(track, frame, params);
  const double distance = (predicted - det.world_pose.translation().head<2>()).norm();
  const double gate = track.initialized ? params.gate_initialized : params.gate_uninitialized;
  if (!(distance < gate)) return 0.0;
  return (gate - distance) / gate;
}

ScoreMatrix build_score_matrix(std::span<const Track> tracks, std::span<const Detection> dets,
                               int frame, const AssociationParams& params) {
  ScoreMatrix m;
  m.scores.resize(static_cast<Eigen::Index>(tracks.size()),
                  static_cast<Eigen::Index>(dets.size()));
  for (std::size_t j = 0; j < tracks.size(); ++j) {
    m.track_ids.push_back(tracks[j].id);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      m.scores(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
          match_score(tracks[j], dets[i], frame, params);
    }
  }
  return m;
}

namespace {

struct FlowEdge {
  int to;
  int capacity;
  double cost;
  int reverse;
};

class FlowNetwork {
 public:
  explicit FlowNetwork(int nodes) : adjacency_(static_cast<std::size_t>(nodes)) {}

  int add_edge(int from, int to, double cost) {
    auto& out = adjacency_[static_cast<std::size_t>(from)];
    auto& in = adjacency_[static_cast<std::size_t>(to)];
    out.push_back({to, 1, cost, static_cast<int>(in.size())});
    in.push_back({from, 0, -cost, static_cast<int>(out.size()) - 1});
    return static_cast<int>(out.size()) - 1;
  }

  // Bellman-Ford shortest path in the residual network; residual edges may
  // carry negative cost. Returns false when sink is unreachable.
  bool shortest_path(int source, int sink, std::vector<int>& prev_node,
                     std::vector<int>& prev_edge, double& length) const {
    const std::size_t n = adjacency_.size();
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    prev_node.assign(n, -1);
    prev_edge.assign(n, -1);
    dist[static_cast<std::size_t>(source)] = 0.0;
    for (std::size_t round = 0; round + 1 < n; ++round) {
      bool changed = false;
      for (std::size_t u = 0; u < n; ++u) {
        if (!std::isfinite(dist[u])) continue;
        const auto& edges = adjacency_[u];
        for (std::size_t e = 0; e < edges.size(); ++e) {
          if (edges[e].capacity <= 0) continue;
          const double candidate = dist[u] + edges[e].cost;
          const auto v = static_cast<std::size_t>(edges[e].to);
          if (candidate < dist[v] - 1e-15) {
            dist[v] = candidate;
            prev_node[v] = static_cast<int>(u);
            prev_edge[v] = static_cast<int>(e);
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    length = dist[static_cast<std::size_t>(sink)];
    return std::isfinite(length);
  }

  void augment(int sink, const std::vector<int>& prev_node, const std::vector<int>& prev_edge) {
    for (int v = sink; prev_node[static_cast<std::size_t>(v)] >= 0;
         v = prev_node[static_cast<std::size_t>(v)]) {
      const int u = prev_node[static_cast<std::size_t>(v)];
      FlowEdge& e = adjacency_[static_cast<std::size_t>(u)]
                              [static_cast<std::size_t>(prev_edge[static_cast<std::size_t>(v)])];
      e.capacity -= 1;
      adjacency_[static_cast<std::size_t>(v)][static_cast<std::size_t>(e.reverse)].capacity += 1;
    }
  }

  const std::vector<FlowEdge>& edges(int node) const {
    return adjacency_[static_cast<std::size_t>(node)];
  }

 private:
  std::vector<std::vector<FlowEdge>> adjacency_;
};

}  // namespace

std::vector<std::pair<int, int>> solve_assignment(const Eigen::MatrixXd& scores) {
  const int rows = static_cast<int>(scores.rows());
  const int cols = static_cast<int>(scores.cols());
  const int source = rows + cols;
  const int sink = source + 1;
  FlowNetwork net(rows + cols + 2);
  for (int j = 0; j < rows; ++j) net.add_edge(source, j, 0.0);
  for (int j = 0; j < rows; ++j) {
    for (int i = 0; i < cols; ++i) {
      if (scores(j, i) > 0.0) net.add_edge(j, rows + i, 1.0 - scores(j, i));
    }
  }
  for (int i = 0; i < cols; ++i) net.add_edge(rows + i, sink, 0.0);

  // Each augmentation adds one matched pair net; its score gain is
  // 1 - path cost. Path costs are non-decreasing, so stop at the first
  // augmentation that no longer gains.
  std::vector<int> prev_node;
  std::vector<int> prev_edge;
  double length = 0.0;
  while (net.shortest_path(source, sink, prev_node, prev_edge, length)) {
    if (1.0 - length <= 1e-12) break;
    net.augment(sink, prev_node, prev_edge);
  }

  std::vector<std::pair<int, int>> out;
  for (int j = 0; j < rows; ++j) {
    for (const FlowEdge& e : net.edges(j)) {
      if (e.to >= rows && e.to < rows + cols && e.capacity == 0) out.emplace_back(j, e.to - rows);
    }
  }
  return out;
}

namespace {

void refit(Track& track) {
  if (track.history.size() < 2) return;
  std::vector<TrajectorySample> samples;
  samples.reserve(track.history.size());
  for (const TrackPoint& p : track.history) {
    samples.push_back({p.frame, p.world_pose.translation().x(), p.world_pose.translation().y()});
  }
  track.fit = fit_trajectory(samples);
}

void append(Track& track, const TrackPoint& point, const AssociationParams& params) {
  track.history.push_back(point);
  const auto cap = static_cast<std::size_t>(std::max(1, params.window_size - 1));
  while (track.history.size() > cap) track.history.pop_front();
  track.initialized = static_cast<int>(track.history.size()) > params.init_threshold;
  refit(track);
}

}  // namespace

TrackUpdate update_tracks(std::vector<Track>& tracks, std::span<const Detection> detections,
                          std::span<const std::pair<int, int>> assignment, int frame,
                          const Pose& ego_pose, const AssociationParams& params, int& next_id) {
  TrackUpdate update;
  std::vector<int> det_to_track(detections.size(), -1);
  std::vector<bool> track_matched(tracks.size(), false);
  for (const auto& [row, col] : assignment) {
    det_to_track[static_cast<std::size_t>(col)] = row;
    track_matched[static_cast<std::size_t>(row)] = true;
  }

  std::vector<Track> survivors;
  survivors.reserve(tracks.size() + detections.size());
  for (std::size_t j = 0; j < tracks.size(); ++j) {
    Track& track = tracks[j];
    if (track_matched[j]) continue;
    if (track.initialized && track.consecutive_misses < params.max_misses) {
      const Eigen::Vector2d xy = predict_position(track, frame);
      const Pose& last = track.last_pose();
      Detection det;
      det.frame = frame;
      det.object_class = track.object_class;
      det.supplementary = true;
      det.world_pose = Pose(last.rotation(), Vector3(xy.x(), xy.y(), last.translation().z()));
      const Pose local = ego_pose.inverse() * det.world_pose;
      det.local_position = local.translation();
      det.yaw = local.yaw();
      append(track, {frame, det.world_pose, true}, params);
      ++track.consecutive_misses;
      update.supplementary.push_back(det);
      update.observations.push_back({track.id, det});
    } else {
      update.terminated.push_back(track.id);
      track.id = -1;  // marks removal
    }
  }

  for (std::size_t i = 0; i < detections.size(); ++i) {
    const Detection& det = detections[i];
    const int row = det_to_track[i];
    if (row >= 0) {
      Track& track = tracks[static_cast<std::size_t>(row)];
      append(track, {frame, det.world_pose, false}, params);
      track.consecutive_misses = 0;
      update.observations.push_back({track.id, det});
    } else {
      Track fresh;
      fresh.id = next_id++;
      fresh.object_class = det.object_class;
      append(fresh, {frame, det.world_pose, false}, params);
      update.spawned.push_back(fresh.id);
      update.observations.push_back({fresh.id, det});
      survivors.push_back(std::move(fresh));
    }
  }

  std::vector<Track> kept;
  kept.reserve(tracks.size() + survivors.size());
  for (Track& t : tracks) {
    if (t.id >= 0) kept.push_back(std::move(t));
  }
  for (Track& t : survivors) kept.push_back(std::move(t));
  tracks = std::move(kept);
  std::sort(update.observations.begin(), update.observations.end(),
            [](const TrackedDetection& a, const TrackedDetection& b) {
              return a.track_id < b.track_id;
            });
  return update;
}

double estimate_speed(const Track& track, const AssociationParams& params) {
  const std::size_t n = track.history.size();
  if (n < 2) return 0.0;
  const std::size_t intervals = std::min<std::size_t>(n - 1, 5);
  if (track.motion_translations.size() >= intervals) {
    double sum = 0.0;
    for (std::size_t k = track.motion_translations.size() - intervals;
         k < track.motion_translations.size(); ++k) {
      sum += track.motion_translations[k].norm();
    }
    return sum / (static_cast<double>(intervals) * params.frame_period);
  }
  // Least-squares planar velocity over the whole history.
  double t_mean = 0.0;
  Eigen::Vector2d p_mean = Eigen::Vector2d::Zero();
  for (const TrackPoint& p : track.history) {
    t_mean += p.frame;
    p_mean += p.world_pose.translation().head<2>();
  }
  t_mean /= static_cast<double>(n);
  p_mean /= static_cast<double>(n);
  double stt = 0.0;
  Eigen::Vector2d stp = Eigen::Vector2d::Zero();
  for (const TrackPoint& p : track.history) {
    const double dt = p.frame - t_mean;
    stt += dt * dt;
    stp += dt * (p.world_pose.translation().head<2>() - p_mean);
  }
  return (stp / stt).norm() / params.frame_period;
}

MotionStatus classify_motion_status(const Track& track, const AssociationParams& params) {
  if (!track.initialized) return MotionStatus::Unknown;
  return estimate_speed(track, params) < params.stationary_speed ? MotionStatus::Stationary
                                                                 : MotionStatus::Dynamic;
}

TrackUpdate Tracker::step(std::vector<Detection> detections, int frame, const Pose& ego_pose) {
  for (Detection& det : detections) {
    det.frame = frame;
    det.world_pose = ego_pose * det.local_pose();
  }
  const ScoreMatrix scores = build_score_matrix(tracks_, detections, frame, params_);
  const auto assignment = solve_assignment(scores.scores);
  return update_tracks(tracks_, detections, assignment, frame, ego_pose, params_, next_id_);
}

Track* Tracker::find(int id) {
  auto it = std::find_if(tracks_.begin(), tracks_.end(), [&](const Track& t) { return t.id == id; });
  return it == tracks_.end() ? nullptr : &*it;
}

}  // namespace slot
