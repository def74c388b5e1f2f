#include "slot/io.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace slot {

namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json pose_to_json(const Pose& p) {
  json arr = json::array();
  for (double v : p.to_row_major()) arr.push_back(v);
  return arr;
}

Pose pose_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 12) {
    throw InvalidInput(std::string(what) + ": expected 12 numbers");
  }
  std::array<double, 12> v{};
  for (std::size_t i = 0; i < 12; ++i) v[i] = j.at(i).get<double>();
  return Pose::from_row_major(v);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw InvalidInput("cannot write " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot read " + path.string());
  return is;
}

template <typename Fn>
auto guarded(const std::string& context, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw InvalidInput(context + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw InvalidInput(context + ": " + e.what());
  }
}

}  // namespace

std::string frame_record_to_json(const FrameRecord& record) {
  json j;
  j["frame"] = record.frame;
  j["odometry"] = pose_to_json(record.odometry);
  json dets = json::array();
  for (const Detection& d : record.detections) {
    dets.push_back({{"x", d.local_position.x()},
                    {"y", d.local_position.y()},
                    {"z", d.local_position.z()},
                    {"yaw", d.yaw},
                    {"class", to_string(d.object_class)}});
  }
  j["detections"] = std::move(dets);
  json loops = json::array();
  for (const LoopEvent& l : record.loops) {
    loops.push_back({{"frame_old", l.frame_old}, {"t_meas", pose_to_json(l.measurement)}});
  }
  j["loops"] = std::move(loops);
  return j.dump();
}

FrameRecord frame_record_from_json(const std::string& line) {
  return guarded("frame record", [&] {
    const json j = json::parse(line);
    FrameRecord r;
    r.frame = j.at("frame").get<int>();
    r.odometry = pose_from_json(j.at("odometry"), "odometry");
    for (const json& d : j.value("detections", json::array())) {
      Detection det;
      det.frame = r.frame;
      det.local_position = Vector3(d.at("x").get<double>(), d.at("y").get<double>(),
                                   d.at("z").get<double>());
      det.yaw = d.at("yaw").get<double>();
      det.object_class = object_class_from_string(d.at("class").get<std::string>());
      r.detections.push_back(det);
    }
    for (const json& l : j.value("loops", json::array())) {
      LoopEvent loop;
      loop.frame_old = l.at("frame_old").get<int>();
      loop.frame_new = r.frame;
      loop.measurement = pose_from_json(l.at("t_meas"), "t_meas");
      r.loops.push_back(loop);
    }
    return r;
  });
}

void write_stream(std::ostream& os, const FrameStream& stream) {
  json header = {{"frame_period", stream.header.frame_period},
                 {"frame_count", stream.header.frame_count}};
  os << header.dump() << '\n';
  for (const FrameRecord& r : stream.frames) os << frame_record_to_json(r) << '\n';
}

FrameStream read_stream(std::istream& is) {
  FrameStream stream;
  std::string line;
  bool have_header = false;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!have_header) {
      guarded("stream header", [&] {
        const json j = json::parse(line);
        stream.header.frame_period = j.at("frame_period").get<double>();
        stream.header.frame_count = j.at("frame_count").get<int>();
        return 0;
      });
      if (!(stream.header.frame_period > 0.0)) throw InvalidInput("frame_period must be > 0");
      have_header = true;
      continue;
    }
    FrameRecord r = frame_record_from_json(line);
    if (!stream.frames.empty() && r.frame <= stream.frames.back().frame) {
      throw InvalidInput("stream line " + std::to_string(line_no) + ": frames not increasing");
    }
    stream.frames.push_back(std::move(r));
  }
  if (!have_header) throw InvalidInput("stream has no header record");
  return stream;
}

void write_stream_file(const std::filesystem::path& path, const FrameStream& stream) {
  auto os = open_out(path);
  write_stream(os, stream);
}

FrameStream read_stream_file(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_stream(is);
}

void write_poses(std::ostream& os, const std::vector<Pose>& poses) {
  for (const Pose& p : poses) {
    const auto v = p.to_row_major();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) os << ' ';
      os << format_double(v[i]);
    }
    os << '\n';
  }
}

std::vector<Pose> read_poses(std::istream& is) {
  std::vector<Pose> poses;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::array<double, 12> v{};
    for (double& x : v) {
      if (!(ls >> x)) throw InvalidInput("pose line " + std::to_string(poses.size() + 1) +
                                         ": expected 12 numbers");
    }
    poses.push_back(Pose::from_row_major(v));
  }
  return poses;
}

void write_poses_file(const std::filesystem::path& path, const std::vector<Pose>& poses) {
  auto os = open_out(path);
  write_poses(os, poses);
}

std::vector<Pose> read_poses_file(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_poses(is);
}

void write_tracks(std::ostream& os, const std::vector<TrackRecord>& records) {
  for (const TrackRecord& r : records) {
    const Vector3& t = r.world_pose.translation();
    json j = {{"frame", r.frame},
              {"track_id", r.track_id},
              {"class", to_string(r.object_class)},
              {"x", t.x()},
              {"y", t.y()},
              {"z", t.z()},
              {"yaw", r.world_pose.yaw()},
              {"vx", r.velocity.x()},
              {"vy", r.velocity.y()},
              {"vz", r.velocity.z()},
              {"status", to_string(r.status)},
              {"supplementary", r.supplementary}};
    os << j.dump() << '\n';
  }
}

std::vector<TrackRecord> read_tracks(std::istream& is) {
  std::vector<TrackRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(guarded("track record", [&] {
      const json j = json::parse(line);
      TrackRecord r;
      r.frame = j.at("frame").get<int>();
      r.track_id = j.at("track_id").get<int>();
      r.object_class = object_class_from_string(j.at("class").get<std::string>());
      r.world_pose = Pose::from_xyz_yaw(j.at("x").get<double>(), j.at("y").get<double>(),
                                        j.at("z").get<double>(), j.at("yaw").get<double>());
      r.velocity = Vector3(j.value("vx", 0.0), j.value("vy", 0.0), j.value("vz", 0.0));
      r.status = motion_status_from_string(j.value("status", std::string("Unknown")));
      r.supplementary = j.value("supplementary", false);
      return r;
    }));
  }
  return out;
}

void write_tracks_file(const std::filesystem::path& path,
                       const std::vector<TrackRecord>& records) {
  auto os = open_out(path);
  write_tracks(os, records);
}

std::vector<TrackRecord> read_tracks_file(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_tracks(is);
}

void write_timings_file(const std::filesystem::path& path, const std::vector<FrameTiming>& t) {
  auto os = open_out(path);
  os << "frame,association_ms,optimization_ms,global_ms\n";
  for (const FrameTiming& f : t) {
    os << f.frame << ',' << format_double(f.association_ms) << ','
       << format_double(f.optimization_ms) << ',' << format_double(f.global_ms) << '\n';
  }
}

std::vector<FrameTiming> read_timings_file(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::vector<FrameTiming> out;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    FrameTiming f;
    char c1 = 0;
    char c2 = 0;
    char c3 = 0;
    std::istringstream ls(line);
    if (!(ls >> f.frame >> c1 >> f.association_ms >> c2 >> f.optimization_ms >> c3 >>
          f.global_ms)) {
      throw InvalidInput("malformed timing line: " + line);
    }
    out.push_back(f);
  }
  return out;
}

void run_stream(SlotBackend& backend, const FrameStream& stream) {
  for (const FrameRecord& r : stream.frames) {
    backend.ingest_frame(r.frame, r.odometry, r.detections);
    for (const LoopEvent& loop : r.loops) backend.handle_loop(loop);
  }
}

}  // namespace slot
