#include "slot/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace slot {

namespace {

using nlohmann::json;

int last_alive_frame(const ObjectSpec& o, int frame_count) {
  return o.despawn < 0 ? frame_count - 1 : o.despawn;
}

double cubic_value(const std::array<double, 4>& c, double s) {
  return ((c[0] * s + c[1]) * s + c[2]) * s + c[3];
}

double cubic_slope(const std::array<double, 4>& c, double s) {
  return (3.0 * c[0] * s + 2.0 * c[1]) * s + c[2];
}

double heading_or(const Vector3& direction, double fallback) {
  if (direction.head<2>().norm() < 1e-12) return fallback;
  return std::atan2(direction.y(), direction.x());
}

std::vector<Pose> integrate_ego(const SceneSpec& spec) {
  std::vector<Pose> out;
  out.reserve(static_cast<std::size_t>(spec.frame_count));
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  out.push_back(Pose::identity());
  std::size_t segment = 0;
  int used = 0;
  const double dt = spec.frame_period;
  for (int f = 1; f < spec.frame_count; ++f) {
    while (segment < spec.ego.size() && used >= spec.ego[segment].frames) {
      ++segment;
      used = 0;
    }
    if (segment < spec.ego.size()) {
      const EgoSegment& s = spec.ego[segment];
      const double next = heading + s.yaw_rate * dt;
      if (std::abs(s.yaw_rate) < 1e-12) {
        x += s.speed * dt * std::cos(heading);
        y += s.speed * dt * std::sin(heading);
      } else {
        const double r = s.speed / s.yaw_rate;
        x += r * (std::sin(next) - std::sin(heading));
        y += r * (std::cos(heading) - std::cos(next));
      }
      heading = next;
      ++used;
    }
    out.push_back(Pose::from_xyz_yaw(x, y, 0.0, heading));
  }
  return out;
}

Twist sample_twist(std::mt19937_64& rng, std::normal_distribution<double>& normal,
                   double rot_sigma, double trans_sigma) {
  Twist v;
  for (int i = 0; i < 3; ++i) v(i) = rot_sigma * normal(rng);
  for (int i = 3; i < 6; ++i) v(i) = trans_sigma * normal(rng);
  return v;
}

Vector3 vec3_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw InvalidScene(std::string(what) + ": expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_to_json(const Vector3& v) { return json::array({v.x(), v.y(), v.z()}); }

std::array<double, 4> coeffs_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 4) throw InvalidScene(std::string(what) + ": expected 4 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

const char* to_string(MotionProfile p) {
  switch (p) {
    case MotionProfile::Stationary:
      return "stationary";
    case MotionProfile::ConstantVelocity:
      return "constant_velocity";
    case MotionProfile::PiecewiseLinear:
      return "piecewise_linear";
    case MotionProfile::Cubic:
      return "cubic";
  }
  return "?";
}

MotionProfile motion_profile_from_string(const std::string& name) {
  for (MotionProfile p : {MotionProfile::Stationary, MotionProfile::ConstantVelocity,
                          MotionProfile::PiecewiseLinear, MotionProfile::Cubic}) {
    if (name == to_string(p)) return p;
  }
  throw InvalidScene("unknown motion profile '" + name + "'");
}

void validate(const SceneSpec& spec) {
  if (!(spec.frame_period > 0.0)) throw InvalidScene("frame_period must be > 0");
  if (spec.frame_count < 1) throw InvalidScene("frame_count must be >= 1");
  if (!(spec.sensing_radius > 0.0)) throw InvalidScene("sensing_radius must be > 0");
  const NoiseSpec& n = spec.noise;
  for (double s : {n.odom_trans_sigma, n.odom_rot_sigma, n.det_pos_sigma, n.det_yaw_sigma}) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidScene("noise sigmas must be finite and >= 0");
  }
  if (!(n.dropout_prob >= 0.0 && n.dropout_prob <= 1.0)) {
    throw InvalidScene("dropout_prob must lie in [0, 1]");
  }
  for (const EgoSegment& s : spec.ego) {
    if (s.frames < 0) throw InvalidScene("ego segment with negative frame count");
  }
  const auto in_range = [&](int f) { return f >= 0 && f < spec.frame_count; };
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const ObjectSpec& o = spec.objects[i];
    const std::string who = "object " + std::to_string(i);
    const int last = last_alive_frame(o, spec.frame_count);
    if (!in_range(o.spawn) || !in_range(last) || last < o.spawn) {
      throw InvalidScene(who + ": spawn/despawn outside [0, frame_count)");
    }
    if (o.motion == MotionProfile::PiecewiseLinear) {
      if (o.waypoints.empty()) throw InvalidScene(who + ": piecewise_linear needs waypoints");
      for (std::size_t k = 1; k < o.waypoints.size(); ++k) {
        if (o.waypoints[k].frame <= o.waypoints[k - 1].frame) {
          throw InvalidScene(who + ": waypoint frames must increase");
        }
      }
    }
  }
  for (const OcclusionEvent& e : spec.occlusions) {
    if (e.object < 0 || e.object >= static_cast<int>(spec.objects.size())) {
      throw InvalidScene("occlusion references unknown object " + std::to_string(e.object));
    }
    if (!in_range(e.first) || !in_range(e.last) || e.last < e.first) {
      throw InvalidScene("occlusion frame range outside [0, frame_count)");
    }
  }
  for (const auto& [a, b] : spec.loops) {
    if (!in_range(a) || !in_range(b) || a >= b) {
      throw InvalidScene("loop pair (" + std::to_string(a) + ", " + std::to_string(b) +
                         ") must satisfy 0 <= old < new < frame_count");
    }
  }
}

Pose object_pose_at(const ObjectSpec& o, int frame, double frame_period) {
  const double s = (frame - o.spawn) * frame_period;
  switch (o.motion) {
    case MotionProfile::Stationary:
      break;
    case MotionProfile::ConstantVelocity: {
      const Vector3 p = o.position + o.velocity * s;
      return Pose::from_xyz_yaw(p.x(), p.y(), p.z(), heading_or(o.velocity, o.yaw));
    }
    case MotionProfile::PiecewiseLinear: {
      const auto& w = o.waypoints;
      if (w.size() == 1 || frame <= w.front().frame) {
        const Vector3 dir = w.size() > 1 ? Vector3(w[1].position - w[0].position) : Vector3::Zero();
        const Vector3& p = w.front().position;
        return Pose::from_xyz_yaw(p.x(), p.y(), p.z(), heading_or(dir, o.yaw));
      }
      std::size_t k = 1;
      while (k + 1 < w.size() && frame > w[k].frame) ++k;
      const Vector3 dir = w[k].position - w[k - 1].position;
      const double u = std::min(
          1.0, static_cast<double>(frame - w[k - 1].frame) / (w[k].frame - w[k - 1].frame));
      const Vector3 p = w[k - 1].position + u * dir;
      return Pose::from_xyz_yaw(p.x(), p.y(), p.z(), heading_or(dir, o.yaw));
    }
    case MotionProfile::Cubic: {
      const Vector3 dir(cubic_slope(o.cubic_x, s), cubic_slope(o.cubic_y, s), 0.0);
      return Pose::from_xyz_yaw(cubic_value(o.cubic_x, s), cubic_value(o.cubic_y, s),
                                o.position.z(), heading_or(dir, o.yaw));
    }
  }
  return Pose::from_xyz_yaw(o.position.x(), o.position.y(), o.position.z(), o.yaw);
}

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  validate(spec);
  Scene scene;
  scene.spec = spec;
  scene.seed = seed;
  scene.truth.ego = integrate_ego(spec);
  const double dt = spec.frame_period;
  for (int f = 0; f < spec.frame_count; ++f) {
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
      const ObjectSpec& o = spec.objects[i];
      const int last = last_alive_frame(o, spec.frame_count);
      if (f < o.spawn || f > last) continue;
      TrackRecord r;
      r.frame = f;
      r.track_id = static_cast<int>(i);
      r.object_class = o.object_class;
      r.world_pose = object_pose_at(o, f, dt);
      const int a = f > o.spawn ? f - 1 : f;
      const int b = f > o.spawn ? f : std::min(f + 1, last);
      if (a != b) {
        r.velocity = log_map(between(object_pose_at(o, a, dt), object_pose_at(o, b, dt)))
                         .tail<3>() / dt;
      }
      r.status = o.motion == MotionProfile::Stationary ? MotionStatus::Stationary
                                                       : MotionStatus::Dynamic;
      scene.truth.objects.push_back(r);
    }
  }
  return scene;
}

FrameStream emit_stream(const Scene& scene) {
  const SceneSpec& spec = scene.spec;
  const NoiseSpec& noise = spec.noise;
  std::mt19937_64 rng(scene.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  FrameStream stream;
  stream.header.frame_period = spec.frame_period;
  stream.header.frame_count = spec.frame_count;

  const auto occluded = [&](int object, int frame) {
    return std::any_of(spec.occlusions.begin(), spec.occlusions.end(), [&](const OcclusionEvent& e) {
      return e.object == object && frame >= e.first && frame <= e.last;
    });
  };

  std::size_t next_truth = 0;
  const auto& truth = scene.truth;
  for (int f = 0; f < spec.frame_count; ++f) {
    FrameRecord rec;
    rec.frame = f;
    const Pose& ego = truth.ego[static_cast<std::size_t>(f)];
    if (f > 0) {
      const Twist n = sample_twist(rng, normal, noise.odom_rot_sigma, noise.odom_trans_sigma);
      rec.odometry = between(truth.ego[static_cast<std::size_t>(f - 1)], ego) * exp_map(n);
    }
    const Pose ego_inv = ego.inverse();
    while (next_truth < truth.objects.size() && truth.objects[next_truth].frame == f) {
      const TrackRecord& obj = truth.objects[next_truth++];
      const double dropout_draw = uniform(rng);
      Vector3 pos_noise;
      for (int k = 0; k < 3; ++k) pos_noise(k) = noise.det_pos_sigma * normal(rng);
      const double yaw_noise = noise.det_yaw_sigma * normal(rng);
      if (occluded(obj.track_id, f)) continue;
      if (noise.dropout_prob > 0.0 && dropout_draw < noise.dropout_prob) continue;
      const Pose local = ego_inv * obj.world_pose;
      if (local.translation().norm() > spec.sensing_radius) continue;
      Detection det;
      det.frame = f;
      det.local_position = local.translation() + pos_noise;
      det.yaw = wrap_angle(local.yaw() + yaw_noise);
      det.object_class = obj.object_class;
      det.truth_id = obj.track_id;
      rec.detections.push_back(det);
    }
    std::shuffle(rec.detections.begin(), rec.detections.end(), rng);
    for (const auto& [old_frame, new_frame] : spec.loops) {
      if (new_frame != f) continue;
      const Twist n = sample_twist(rng, normal, noise.odom_rot_sigma, noise.odom_trans_sigma);
      LoopEvent loop;
      loop.frame_old = old_frame;
      loop.frame_new = new_frame;
      loop.measurement =
          between(truth.ego[static_cast<std::size_t>(old_frame)], ego) * exp_map(n);
      rec.loops.push_back(loop);
    }
    stream.frames.push_back(std::move(rec));
  }
  return stream;
}

SceneSpec scene_from_json(const std::string& text) {
  SceneSpec spec;
  try {
    const json j = json::parse(text);
    spec.frame_period = j.value("frame_period", spec.frame_period);
    spec.frame_count = j.at("frame_count").get<int>();
    spec.sensing_radius = j.value("sensing_radius", spec.sensing_radius);
    for (const json& s : j.value("ego", json::array())) {
      spec.ego.push_back({s.at("frames").get<int>(), s.value("speed", 0.0),
                          s.value("yaw_rate", 0.0)});
    }
    for (const json& o : j.value("objects", json::array())) {
      ObjectSpec obj;
      obj.object_class = object_class_from_string(o.value("class", std::string("Vehicle")));
      obj.spawn = o.value("spawn", 0);
      obj.despawn = o.value("despawn", -1);
      obj.motion = motion_profile_from_string(o.value("motion", std::string("stationary")));
      if (o.contains("position")) obj.position = vec3_from_json(o.at("position"), "position");
      obj.yaw = o.value("yaw", 0.0);
      if (o.contains("velocity")) obj.velocity = vec3_from_json(o.at("velocity"), "velocity");
      for (const json& w : o.value("waypoints", json::array())) {
        obj.waypoints.push_back({w.at("frame").get<int>(), vec3_from_json(w.at("position"), "waypoint")});
      }
      if (o.contains("cubic_x")) obj.cubic_x = coeffs_from_json(o.at("cubic_x"), "cubic_x");
      if (o.contains("cubic_y")) obj.cubic_y = coeffs_from_json(o.at("cubic_y"), "cubic_y");
      spec.objects.push_back(std::move(obj));
    }
    if (j.contains("noise")) {
      const json& n = j.at("noise");
      spec.noise.odom_trans_sigma = n.value("odom_trans_sigma", 0.0);
      spec.noise.odom_rot_sigma = n.value("odom_rot_sigma", 0.0);
      spec.noise.det_pos_sigma = n.value("det_pos_sigma", 0.0);
      spec.noise.det_yaw_sigma = n.value("det_yaw_sigma", 0.0);
      spec.noise.dropout_prob = n.value("dropout_prob", 0.0);
    }
    for (const json& e : j.value("occlusions", json::array())) {
      spec.occlusions.push_back(
          {e.at("object").get<int>(), e.at("first").get<int>(), e.at("last").get<int>()});
    }
    for (const json& l : j.value("loops", json::array())) {
      spec.loops.emplace_back(l.at(0).get<int>(), l.at(1).get<int>());
    }
  } catch (const json::exception& e) {
    throw InvalidScene(std::string("scene: ") + e.what());
  } catch (const InvalidScene&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw InvalidScene(std::string("scene: ") + e.what());
  }
  validate(spec);
  return spec;
}

std::string scene_to_json(const SceneSpec& spec) {
  json ego = json::array();
  for (const EgoSegment& s : spec.ego) {
    ego.push_back({{"frames", s.frames}, {"speed", s.speed}, {"yaw_rate", s.yaw_rate}});
  }
  json objects = json::array();
  for (const ObjectSpec& o : spec.objects) {
    json w = json::array();
    for (const Waypoint& p : o.waypoints) w.push_back({{"frame", p.frame}, {"position", vec3_to_json(p.position)}});
    objects.push_back({{"class", to_string(o.object_class)},
                       {"spawn", o.spawn},
                       {"despawn", o.despawn},
                       {"motion", to_string(o.motion)},
                       {"position", vec3_to_json(o.position)},
                       {"yaw", o.yaw},
                       {"velocity", vec3_to_json(o.velocity)},
                       {"waypoints", w},
                       {"cubic_x", o.cubic_x},
                       {"cubic_y", o.cubic_y}});
  }
  json occlusions = json::array();
  for (const OcclusionEvent& e : spec.occlusions) {
    occlusions.push_back({{"object", e.object}, {"first", e.first}, {"last", e.last}});
  }
  json loops = json::array();
  for (const auto& [a, b] : spec.loops) loops.push_back({a, b});
  const NoiseSpec& n = spec.noise;
  json j = {{"frame_period", spec.frame_period},
            {"frame_count", spec.frame_count},
            {"sensing_radius", spec.sensing_radius},
            {"ego", ego},
            {"objects", objects},
            {"noise",
             {{"odom_trans_sigma", n.odom_trans_sigma},
              {"odom_rot_sigma", n.odom_rot_sigma},
              {"det_pos_sigma", n.det_pos_sigma},
              {"det_yaw_sigma", n.det_yaw_sigma},
              {"dropout_prob", n.dropout_prob}}},
            {"occlusions", occlusions},
            {"loops", loops}};
  return j.dump(2);
}

SceneSpec load_scene(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidScene("cannot read scene " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return scene_from_json(ss.str());
}

void save_scene(const std::filesystem::path& path, const SceneSpec& spec) {
  std::ofstream os(path);
  if (!os) throw InvalidInput("cannot write scene " + path.string());
  os << scene_to_json(spec) << '\n';
}

void write_ground_truth(const std::filesystem::path& dir, const GroundTruth& truth) {
  std::filesystem::create_directories(dir);
  write_poses_file(dir / "ego.txt", truth.ego);
  write_tracks_file(dir / "objects.jsonl", truth.objects);
}

GroundTruth read_ground_truth(const std::filesystem::path& dir) {
  GroundTruth truth;
  truth.ego = read_poses_file(dir / "ego.txt");
  truth.objects = read_tracks_file(dir / "objects.jsonl");
  return truth;
}

}  // namespace slot
