#include "slot/backend.hpp"

#include <algorithm>
#include <chrono>
#include <string>

namespace slot {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

void refit_history(Track& track) {
  if (track.history.size() < 2) return;
  std::vector<TrajectorySample> samples;
  samples.reserve(track.history.size());
  for (const TrackPoint& p : track.history) {
    samples.push_back({p.frame, p.world_pose.translation().x(), p.world_pose.translation().y()});
  }
  track.fit = fit_trajectory(samples);
}

}  // namespace

Matrix6 DiagonalInformation::matrix() const {
  Vector6 d;
  d << rotation, rotation, rotation, translation, translation, translation;
  return d.asDiagonal();
}

SlotBackend::SlotBackend(BackendConfig config) : config_(config), tracker_(config.association) {
  if (config_.window_size < 2) throw std::invalid_argument("window_size must be >= 2");
}

void SlotBackend::ingest_frame(int frame, const Pose& odometry, std::vector<Detection> detections) {
  if (last_frame_ && frame <= *last_frame_) {
    throw OutOfOrderFrame("frame " + std::to_string(frame) + " after " +
                          std::to_string(*last_frame_));
  }
  const VariableId ego = VariableId::ego(frame);
  if (!last_frame_) {
    const Pose origin = Pose::identity();
    window_.add_variable(ego, origin);
    window_.add_factor(Factor::anchor(ego, origin, config_.anchor_information));
    global_.add_variable(ego, origin);
    global_.add_factor(Factor::anchor(ego, origin, config_.anchor_information));
  } else {
    const int prev = *last_frame_;
    const Pose initial = window_.value(VariableId::ego(prev)) * odometry;
    const Matrix6 info = config_.odometry.matrix();
    window_.add_variable(ego, initial);
    window_.add_factor(Factor::odometry(prev, frame, odometry, info));
    global_.add_variable(ego, initial);
    global_.add_factor(Factor::odometry(prev, frame, odometry, info));
  }
  window_frames_.push_back(frame);
  frames_[frame] = FrameState{};
  last_frame_ = frame;

  FrameTiming timing;
  timing.frame = frame;

  auto start = Clock::now();
  last_supplementary_.clear();
  if (config_.use_objects) {
    TrackUpdate update = tracker_.step(std::move(detections), frame, window_.value(ego));
    FrameState& state = frames_[frame];
    std::vector<int> ids;
    for (const TrackedDetection& obs : update.observations) {
      Observation o;
      o.track_id = obs.track_id;
      o.detection = obs.detection;
      state.observations.push_back(std::move(o));
      state.sets.all.insert(obs.track_id);
      ids.push_back(obs.track_id);
    }
    last_supplementary_ = std::move(update.supplementary);
    classify_observed_tracks(ids);
  }
  timing.association_ms = elapsed_ms(start);

  start = Clock::now();
  build_window_graph(frame);
  window_report_ = optimize(window_, config_.solver);
  refresh_motion_estimates(frame);
  slide_window();
  timing.optimization_ms = elapsed_ms(start);
  timings_.push_back(timing);
}

void SlotBackend::classify_observed_tracks(const std::vector<int>& ids) {
  FrameState& state = frames_.at(*last_frame_);
  for (int id : ids) {
    Track* track = tracker_.find(id);
    if (track == nullptr) continue;
    track->status = classify_motion_status(*track, config_.association);
  }
  for (Observation& o : state.observations) {
    if (const Track* track = tracker_.find(o.track_id)) o.status = track->status;
  }
}

void SlotBackend::build_window_graph(int frame) {
  auto fs = frames_.find(frame);
  if (fs == frames_.end()) throw UnknownFrame("frame " + std::to_string(frame) + " not ingested");
  FrameState& state = fs->second;

  // Previous frame of the window, if any.
  std::optional<int> prev;
  for (auto it = window_frames_.rbegin(); it != window_frames_.rend(); ++it) {
    if (*it < frame) {
      prev = *it;
      break;
    }
  }

  const VariableId ego = VariableId::ego(frame);
  for (Observation& o : state.observations) {
    const Track* track = tracker_.find(o.track_id);
    if (track == nullptr || !track->initialized) continue;

    TrackNodes& nodes = track_nodes_[o.track_id];
    const bool stationary = o.status == MotionStatus::Stationary;
    Matrix6 obs_info = config_.observation.matrix();
    if (o.detection.supplementary) obs_info *= config_.supplementary_weight;

    const bool have_last = nodes.last_pose && window_.has_variable(*nodes.last_pose);
    if (stationary && have_last) {
      if (nodes.poses.size() > 1 || !nodes.motions.empty()) collapse_to_stationary(o.track_id, nodes);
      const VariableId pose = *nodes.last_pose;
      window_.add_factor(Factor::observation(ego, pose, o.detection.local_pose(), obs_info));
      pose_last_observed_[pose] = frame;
      nodes.last_observed = frame;
      o.pose = pose;
      state.sets.initialized.insert(o.track_id);
      continue;
    }

    const VariableId pose = VariableId::object_pose(frame, o.track_id);
    window_.add_variable(pose, o.detection.world_pose);
    window_.add_factor(Factor::observation(ego, pose, o.detection.local_pose(), obs_info));
    pose_last_observed_[pose] = frame;
    o.pose = pose;
    state.sets.initialized.insert(o.track_id);

    const bool consecutive = have_last && prev && nodes.last_observed == *prev;
    if (consecutive && !stationary) {
      const VariableId motion = VariableId::object_motion(frame, o.track_id);
      const Pose initial = between(window_.value(*nodes.last_pose), window_.value(pose));
      window_.add_variable(motion, initial);
      window_.add_factor(
          Factor::motion(*nodes.last_pose, pose, motion, config_.motion.matrix()));
      o.motion = motion;
      state.sets.associated.insert(o.track_id);
      if (nodes.last_motion && nodes.last_motion->frame == *prev &&
          window_.has_variable(*nodes.last_motion)) {
        window_.add_factor(
            Factor::const_velocity(*nodes.last_motion, motion, config_.const_velocity.matrix()));
        state.sets.constant_velocity.insert(o.track_id);
      }
      nodes.last_motion = motion;
      nodes.motions.insert(motion);
    } else {
      nodes.last_motion.reset();
    }
    nodes.last_pose = pose;
    nodes.last_observed = frame;
    nodes.poses.insert(pose);
  }
}

void SlotBackend::collapse_to_stationary(int track_id, TrackNodes& nodes) {
  std::set<VariableId> victims;
  for (const VariableId& p : nodes.poses) {
    if (p != *nodes.last_pose) victims.insert(p);
  }
  victims.insert(nodes.motions.begin(), nodes.motions.end());
  if (victims.empty()) return;
  retire(victims);
  auto it = track_nodes_.find(track_id);
  if (it != track_nodes_.end()) it->second.last_motion.reset();
}

void SlotBackend::retire(const std::set<VariableId>& victims) {
  for (const VariableId& v : victims) {
    retired_[v] = window_.value(v);
    if (auto it = pose_last_observed_.find(v); it != pose_last_observed_.end()) {
      retired_observed_[v] = it->second;
    }
  }
  marginalizations_.push_back(marginalize(window_, victims, config_.solver.huber_scale));
  for (const VariableId& v : victims) {
    pose_last_observed_.erase(v);
    if (v.kind == VariableKind::EgoPose) continue;
    auto it = track_nodes_.find(*v.object);
    if (it == track_nodes_.end()) continue;
    TrackNodes& nodes = it->second;
    nodes.poses.erase(v);
    nodes.motions.erase(v);
    if (nodes.last_pose == v) nodes.last_pose.reset();
    if (nodes.last_motion == v) nodes.last_motion.reset();
    if (nodes.poses.empty() && nodes.motions.empty() && tracker_.find(*v.object) == nullptr) {
      track_nodes_.erase(it);
    }
  }
}

void SlotBackend::refresh_motion_estimates(int /*frame*/) {
  for (Track& track : tracker_.tracks()) {
    track.motion_translations.clear();
    auto it = track_nodes_.find(track.id);
    if (it == track_nodes_.end()) continue;
    for (const VariableId& m : it->second.motions) {
      if (window_.has_variable(m)) track.motion_translations.push_back(window_.value(m).translation());
    }
  }
}

void SlotBackend::slide_window() {
  while (static_cast<int>(window_frames_.size()) > config_.window_size) {
    const int f = window_frames_.front();
    std::set<VariableId> victims{VariableId::ego(f)};
    for (const auto& [id, last] : pose_last_observed_) {
      if (last <= f) victims.insert(id);
    }
    for (const auto& [id, value] : window_.values()) {
      if (id.kind == VariableKind::ObjectMotion && id.frame <= f) victims.insert(id);
    }
    const Pose ego = window_.value(VariableId::ego(f));
    ego_estimates_[f] = ego;
    global_.set_value(VariableId::ego(f), ego);
    retire(victims);
    retired_.erase(VariableId::ego(f));
    window_frames_.pop_front();
  }
}

void SlotBackend::handle_loop(const LoopEvent& loop) {
  if (!config_.use_loops) return;
  const VariableId old_id = VariableId::ego(loop.frame_old);
  const VariableId new_id = VariableId::ego(loop.frame_new);
  if (!global_.has_variable(old_id) || !global_.has_variable(new_id)) {
    throw UnknownFrame("loop " + std::to_string(loop.frame_old) + " -> " +
                       std::to_string(loop.frame_new) + " references an unknown frame");
  }
  if (loop.frame_old == loop.frame_new) throw UnknownFrame("loop closes a frame onto itself");
  const auto start = Clock::now();

  std::map<int, Pose> before;
  for (const auto& [id, value] : global_.values()) {
    const Pose best = ego_estimate(id.frame);
    global_.set_value(id, best);
    before[id.frame] = best;
  }
  global_.add_factor(Factor::loop(loop.frame_old, loop.frame_new, loop.measurement,
                                  config_.loop.matrix()));
  global_reports_.push_back(optimize(global_, config_.solver));
  for (const auto& [id, value] : global_.values()) {
    if (!window_.has_variable(id)) ego_estimates_[id.frame] = value;
  }

  const int latest = window_frames_.back();
  const VariableId latest_id = VariableId::ego(latest);
  const Pose delta = global_.value(latest_id) * window_.value(latest_id).inverse();
  window_.apply_rigid_correction(delta);

  // Object poses that already left the window follow the correction of the
  // frame they were last estimated in.
  for (auto& [id, value] : retired_) {
    if (id.kind != VariableKind::ObjectPose) continue;
    const auto seen = retired_observed_.find(id);
    const auto b = before.find(seen != retired_observed_.end() ? seen->second : id.frame);
    if (b == before.end()) continue;
    const Pose local_delta = global_.value(VariableId::ego(b->first)) * b->second.inverse();
    value = local_delta * value;
  }

  for (Track& track : tracker_.tracks()) {
    for (TrackPoint& p : track.history) p.world_pose = delta * p.world_pose;
    refit_history(track);
  }
  if (!timings_.empty()) timings_.back().global_ms += elapsed_ms(start);
}

Pose SlotBackend::ego_estimate(int frame) const {
  const VariableId id = VariableId::ego(frame);
  if (window_.has_variable(id)) return window_.value(id);
  auto it = ego_estimates_.find(frame);
  if (it == ego_estimates_.end()) throw UnknownFrame("no estimate for frame " + std::to_string(frame));
  return it->second;
}

const FrameObjectSets& SlotBackend::object_sets(int frame) const {
  auto it = frames_.find(frame);
  if (it == frames_.end()) throw UnknownFrame("frame " + std::to_string(frame) + " not ingested");
  return it->second.sets;
}

Pose SlotBackend::lookup(const VariableId& id) const {
  if (window_.has_variable(id)) return window_.value(id);
  return retired_.at(id);
}

ExportedState SlotBackend::export_state() const {
  ExportedState out;
  const double period = config_.association.frame_period;
  for (const auto& [frame, state] : frames_) {
    const Pose ego = ego_estimate(frame);
    out.ego.emplace_back(frame, ego);
    for (const Observation& o : state.observations) {
      TrackRecord r;
      r.frame = frame;
      r.track_id = o.track_id;
      r.object_class = o.detection.object_class;
      r.status = o.status;
      r.supplementary = o.detection.supplementary;
      r.world_pose = o.pose ? lookup(*o.pose) : ego * o.detection.local_pose();
      if (o.motion) r.velocity = log_map(lookup(*o.motion)).tail<3>() / period;
      out.tracks.push_back(r);
    }
  }
  return out;
}

}  // namespace slot
